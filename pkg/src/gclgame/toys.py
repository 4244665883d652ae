"""
Small problems with closed-form answers, for checking the trainer and the
diagnostics. Toys ignore their minibatch contents: every batch maps to the
single key of TOY_KEY, whose x is a (1, d) row and whose phi is unused.
"""
import numpy as np
from zope.interface import implementer

from . import gnn, graph
from . import tensor as T
from .game import GameConfig
from .problem import GnnProblem, IProblem
from .replay import ReplayItem

TOY_KEY = 0, 0


def toy_items(count=1):
    """Placeholder items for feeding toys through the joint sampler."""
    return [ReplayItem(0, 0, None, None) for _ in range(count)]


class _Toy:
    def __init__(self, x0):
        self.x0 = np.asarray(x0, dtype=np.float64).reshape(1, -1)
        self.param_size = self.x0.shape[1]

    def inputs(self, batch):
        return {TOY_KEY: (self.x0, np.zeros((1, 1)))}

    def _half_sq(self, v):
        return T.scale(T.total(T.mul(v, v)), 0.5)


@implementer(IProblem)
class QuadraticToy(_Toy):
    """J(x, w) = 1/2 |w - c|^2 + x . w"""

    def __init__(self, c, x0=None):
        self.c = np.asarray(c, dtype=np.float64)
        super().__init__(np.zeros_like(self.c) if x0 is None else x0)

    def objective(self, w, xs, phis, batch, dropout_seed=None):
        x = T.reshape(xs[TOY_KEY], (self.param_size,))
        return T.add(self._half_sq(T.sub(w, T.constant(self.c))), T.total(T.mul(x, w)))

    def value(self, w, x=None):
        x = self.x0.reshape(-1) if x is None else np.asarray(x)
        return 0.5 * float(np.sum((w - self.c) ** 2)) + float(np.dot(x, w))


@implementer(IProblem)
class SaddleToy(_Toy):
    """
    J(x, w) = 1/2 |w - c|^2 - 1/2 |x - a w|^2 with base features x0 = 0.
    Under beta1 alone the inner maximizer is dx = a w and the outer
    minimizer w* = (1 + beta1) c / (1 + beta1 - a^2), provided a^2 < 1 + beta1
    and both points lie inside the projection balls.
    """

    def __init__(self, c, a=0.5):
        self.c = np.asarray(c, dtype=np.float64)
        self.a = float(a)
        super().__init__(np.zeros_like(self.c))

    def objective(self, w, xs, phis, batch, dropout_seed=None):
        x = T.reshape(xs[TOY_KEY], (self.param_size,))
        return T.sub(self._half_sq(T.sub(w, T.constant(self.c))), self._half_sq(T.sub(x, T.scale(w, self.a))))

    def saddle(self, beta1):
        w_star = (1.0 + beta1) * self.c / (1.0 + beta1 - self.a ** 2)
        return self.a * w_star, w_star

    def h(self, dx, w, beta1):
        """H(u, w) in closed form."""
        j0 = 0.5 * np.sum((w - self.c) ** 2) - 0.5 * np.sum((self.a * w) ** 2)
        j1 = 0.5 * np.sum((w - self.c) ** 2) - 0.5 * np.sum((dx - self.a * w) ** 2)
        return float(j0 + beta1 * j1)


SADDLE_SETTINGS = dict(
    c=(0.3, -0.2),
    a=0.5,
    beta1=1.0,
    zeta=50,
    alpha_u=5.0,
    rho=2000,
    alpha_w=10.0,
)


def saddle_game(**changes):
    """The saddle toy with rates under which the trainer reaches its closed-form point."""
    s = dict(SADDLE_SETTINGS, **changes)
    problem = SaddleToy(s['c'], s['a'])
    config = GameConfig(
        beta1=s['beta1'], beta2=0.0, beta3=0.0, zeta=s['zeta'], rho=s['rho'],
        alpha_u=s['alpha_u'], alpha_w=s['alpha_w'], batch_b=2, buffer_capacity=0,
    )
    return problem, config


def tiny_snapshot(seed=0, num_vertices=8, feature_dim=3, num_classes=2):
    """A fixed random graph on 8 vertices: a ring plus a few chords."""
    rng = np.random.default_rng(seed)
    ring = [(i, (i + 1) % num_vertices) for i in range(num_vertices)]
    ring += [((i + 1) % num_vertices, i) for i in range(num_vertices)]
    chords = [(0, 4), (4, 0), (2, 6)]
    edges = sorted(set(ring + chords))

    return graph.GraphSnapshot(
        np.arange(num_vertices),
        edges,
        rng.normal(size=(num_vertices, feature_dim)),
        rng.uniform(0.5, 1.5, size=(len(edges), 1)),
        rng.integers(0, num_classes, size=num_vertices),
    )


def tiny_gnn(seed=0, nlays=2, hc=4):
    """The smooth nonconvex toy: a small attention network on one tiny snapshot."""
    snapshot = tiny_snapshot(seed)
    config = gnn.ModelConfig(nlays=nlays, hc=hc, in_dim=snapshot.vertex_features.shape[1], out_dim=2, edge_dim=1)
    items = [ReplayItem(0, 0, snapshot, p) for p in range(snapshot.num_vertices)]
    return GnnProblem(config), items, gnn.init_params(config, seed)


RATE_SETTINGS = dict(
    beta1=1.0,
    beta2=1.0,
    beta3=1.0,
    alpha_u=0.5,
    alpha_w=0.5,
    zeta=10,
    rho=10,
    batch_b=4,
)


def rate_game(**changes):
    """Game settings for the convergence-rate fits on `tiny_gnn`."""
    return GameConfig(buffer_capacity=0, **dict(RATE_SETTINGS, **changes))


DRIFT_STREAM = dict(
    num_tasks=3,
    classes_per_task=2,
    universe_size=120,
    vertices_per_task=40,
    feature_dim=6,
    drift=0.5,
    resample_fraction=0.3,
)

# beta1 = beta2 = 0 keeps the no-game variant identical to plain replay;
# otherwise it is replay at a (1 + beta1 + beta2) times longer step.
DRIFT_GAME = dict(
    beta1=0.0,
    beta2=0.0,
    beta3=0.5,
    zeta=5,
    rho=200,
    alpha_u=0.1,
    alpha_w=0.5,
    schedule='constant',
    batch_b=16,
    buffer_capacity=60,
)


def drift_stream(seed=0, **changes):
    """Three two-way node tasks whose features drift and whose vertex sets turn over between tasks."""
    return graph.synth_verg_stream(graph.SynthConfig(**dict(DRIFT_STREAM, **changes)), seed)


def drift_game(stream, **changes):
    """Model and game settings under which the drift stream is actually learned and forgotten."""
    return gnn.ModelConfig.for_stream(stream, nlays=2, hc=8), GameConfig(**dict(DRIFT_GAME, **changes))
