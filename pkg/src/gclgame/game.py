"""
    H(u, w) = J(x, phi, w) + beta1 J(x + dx, phi, w)
              + beta2 J(x, phi + dphi, w) + beta3 J(x, phi, w + dw)
"""
import collections
import logging
import math

import numpy as np
import pandas as pd

from . import tensor as T
from .errors import Divergence, EmptyTask, InvalidConfig, NonFiniteResult
from .problem import IProblem
from .replay import sample_joint

log = logging.getLogger(__name__)

OPTIMIZERS = 'sgd', 'adam'
SCHEDULES = 'sqrt', 'constant'

# projection leaves blocks within this relative slack of the radius untouched
PROJECTION_SLACK = 1e-12


class GameConfig:
    FIELDS = dict(
        beta1=0.1,
        beta2=0.1,
        beta3=0.1,
        zeta=10,
        rho=1000,
        alpha_u=1e-7,
        alpha_w=1e-3,
        r_x=1.0,
        r_phi=1.0,
        r_w=1.0,
        batch_b=32,
        buffer_capacity=500,
        seed=0,
        optimizer='sgd',
        schedule='sqrt',
        perturb_phi=True,
    )

    def __init__(self, **kw):
        unknown = set(kw) - set(self.FIELDS)
        if unknown:
            raise InvalidConfig(sorted(unknown)[0], "unknown game parameter")

        for name, default in self.FIELDS.items():
            setattr(self, name, kw.get(name, default))

        for name in ('beta1', 'beta2', 'beta3'):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise InvalidConfig(name, "must lie in [0, 1]")
        for name, low in (('zeta', 0), ('rho', 1), ('batch_b', 2), ('buffer_capacity', 0)):
            value = getattr(self, name)
            if int(value) != value or value < low:
                raise InvalidConfig(name, "must be an integer >= {}".format(low))
            setattr(self, name, int(value))
        for name in ('alpha_u', 'alpha_w', 'r_x', 'r_phi', 'r_w'):
            if not getattr(self, name) > 0:
                raise InvalidConfig(name, "must be positive")
        if self.optimizer not in OPTIMIZERS:
            raise InvalidConfig('optimizer', "expected one of {}".format(", ".join(OPTIMIZERS)))
        if self.schedule not in SCHEDULES:
            raise InvalidConfig('schedule', "expected one of {}".format(", ".join(SCHEDULES)))
        self.perturb_phi = bool(self.perturb_phi)

    @property
    def beta(self):
        return max(self.beta1, self.beta2, self.beta3)

    @property
    def radii(self):
        return self.r_x, self.r_phi, self.r_w

    @property
    def ascent_lr(self):
        if self.schedule == 'sqrt' and self.zeta > 0:
            return self.alpha_u / math.sqrt(self.zeta)
        return self.alpha_u

    @property
    def descent_lr(self):
        if self.schedule == 'sqrt':
            return self.alpha_w / math.sqrt(self.rho)
        return self.alpha_w

    def replace(self, **changes):
        kw = self.as_dict()
        kw.update(changes)
        return GameConfig(**kw)

    def as_dict(self):
        return dict((name, getattr(self, name)) for name in self.FIELDS)

    def __eq__(self, other):
        return isinstance(other, GameConfig) and self.as_dict() == other.as_dict()


def reduce_no_edge(config):
    """The game without the edge-feature player (Euclidean-data special case)."""
    return config.replace(beta2=0.0, perturb_phi=False)


class PlayerU:
    """
    Perturbation blocks. dx and dphi hold one array per snapshot key and
    grow lazily as snapshots are sampled; dw is a flat vector.
    """

    def __init__(self, delta_x, delta_phi, delta_w):
        self.delta_x = dict(delta_x)
        self.delta_phi = dict(delta_phi)
        self.delta_w = np.asarray(delta_w, dtype=np.float64)

    @classmethod
    def zeros(cls, param_size):
        return cls({}, {}, np.zeros(param_size))

    def ensure(self, inputs):
        """Add zero blocks for snapshot keys of `inputs` not seen yet."""
        for key, (x, phi) in inputs.items():
            if key not in self.delta_x:
                self.delta_x[key] = np.zeros_like(x, dtype=np.float64)
            if key not in self.delta_phi:
                self.delta_phi[key] = np.zeros_like(phi, dtype=np.float64)
        return self

    def copy(self):
        return PlayerU(
            dict((k, v.copy()) for k, v in self.delta_x.items()),
            dict((k, v.copy()) for k, v in self.delta_phi.items()),
            self.delta_w.copy(),
        )

    def norms(self):
        return _block_norm(self.delta_x.values()), _block_norm(self.delta_phi.values()), float(
            np.linalg.norm(self.delta_w))

    def __eq__(self, other):
        def same(a, b):
            return a.keys() == b.keys() and all(np.array_equal(a[k], b[k]) for k in a)

        return (
            isinstance(other, PlayerU)
            and same(self.delta_x, other.delta_x)
            and same(self.delta_phi, other.delta_phi)
            and np.array_equal(self.delta_w, other.delta_w)
        )


def _block_norm(arrays):
    return math.sqrt(sum(float(np.sum(a * a)) for a in arrays))


def _shrink(norm, radius):
    if norm > radius * (1.0 + PROJECTION_SLACK):
        return radius / norm
    return 1.0


def project(u, radii):
    """Scale each block onto its norm ball of the given radius."""
    r_x, r_phi, r_w = radii
    nx, nphi, nw = u.norms()
    sx, sphi, sw = _shrink(nx, r_x), _shrink(nphi, r_phi), _shrink(nw, r_w)

    return PlayerU(
        dict((k, v * sx if sx != 1.0 else v.copy()) for k, v in u.delta_x.items()),
        dict((k, v * sphi if sphi != 1.0 else v.copy()) for k, v in u.delta_phi.items()),
        u.delta_w * sw if sw != 1.0 else u.delta_w.copy(),
    )


HEval = collections.namedtuple("HEval", "value grad_w grad_u u_terms w_terms")


def evaluate(problem, w, u, batch, config, dropout_seed=None):
    """
    H and its gradients. Each term is evaluated on its own tape with the same
    dropout seed; terms with a zero weight are skipped. `u_terms` are the
    unweighted norms of grad J1 wrt x, grad J2 wrt phi and grad J3 wrt w;
    `w_terms` the norms of grad J0..J3 wrt w (zero for skipped terms).
    """
    problem = IProblem(problem)
    inputs = problem.inputs(batch)
    u.ensure(inputs)
    keys = list(inputs)

    def run(shift_x, shift_phi, shift_w):
        tape = T.Tape()
        w_t = tape.watch(w + u.delta_w if shift_w else w)
        xs = dict((k, tape.watch(inputs[k][0] + u.delta_x[k]) if shift_x else T.constant(inputs[k][0]))
                  for k in keys)
        phis = dict((k, tape.watch(inputs[k][1] + u.delta_phi[k]) if shift_phi else T.constant(inputs[k][1]))
                    for k in keys)
        out = problem.objective(w_t, xs, phis, batch, dropout_seed)
        return out.item(), tape.backward(out), w_t, xs, phis

    value = 0.0
    grad_w = np.zeros_like(w)
    gx = dict((k, np.zeros_like(u.delta_x[k])) for k in keys)
    gphi = dict((k, np.zeros_like(u.delta_phi[k])) for k in keys)
    gdw = np.zeros_like(w)
    u_terms = [0.0, 0.0, 0.0]
    w_terms = [0.0, 0.0, 0.0, 0.0]

    j0, grads, w_t, _, _ = run(False, False, False)
    value += j0
    grad_w += grads[w_t]
    w_terms[0] = float(np.linalg.norm(grads[w_t]))

    if config.beta1 > 0:
        j1, grads, w_t, xs, _ = run(True, False, False)
        value += config.beta1 * j1
        grad_w += config.beta1 * grads[w_t]
        w_terms[1] = float(np.linalg.norm(grads[w_t]))
        for k in keys:
            gx[k] = config.beta1 * grads[xs[k]]
        u_terms[0] = _block_norm(grads[xs[k]] for k in keys)

    if config.beta2 > 0:
        j2, grads, w_t, _, phis = run(False, True, False)
        value += config.beta2 * j2
        grad_w += config.beta2 * grads[w_t]
        w_terms[2] = float(np.linalg.norm(grads[w_t]))
        if config.perturb_phi:
            for k in keys:
                gphi[k] = config.beta2 * grads[phis[k]]
            u_terms[1] = _block_norm(grads[phis[k]] for k in keys)

    if config.beta3 > 0:
        j3, grads, w_t, _, _ = run(False, False, True)
        value += config.beta3 * j3
        grad_w += config.beta3 * grads[w_t]
        w_terms[3] = float(np.linalg.norm(grads[w_t]))
        gdw = config.beta3 * grads[w_t]
        u_terms[2] = w_terms[3]

    return HEval(value, grad_w, PlayerU(gx, gphi, gdw), tuple(u_terms), tuple(w_terms))


def h_cost(problem, w, u, batch, config, dropout_seed=None):
    return evaluate(problem, w, u, batch, config, dropout_seed).value


class Adam:
    def __init__(self, b1=0.9, b2=0.999, eps=1e-8):
        self.b1, self.b2, self.eps = b1, b2, eps
        self.moments = {}
        self.t = 0

    def tick(self):
        self.t += 1

    def direction(self, name, grad):
        m, v = self.moments.get(name, (np.zeros_like(grad), np.zeros_like(grad)))
        m = self.b1 * m + (1 - self.b1) * grad
        v = self.b2 * v + (1 - self.b2) * grad * grad
        self.moments[name] = m, v

        m_hat = m / (1 - self.b1 ** self.t)
        v_hat = v / (1 - self.b2 ** self.t)
        return m_hat / (np.sqrt(v_hat) + self.eps)


def ascend(u, grad_u, lr, config, adam=None):
    if adam is None:
        def step(name, grad):
            return grad
    else:
        adam.tick()
        step = adam.direction

    def move(name, blocks, grads):
        # blocks of snapshots outside the current batch have zero gradient
        return dict(
            (k, v + lr * step((name, k), grads[k]) if k in grads else v.copy())
            for k, v in blocks.items()
        )

    moved = PlayerU(
        move('x', u.delta_x, grad_u.delta_x),
        move('phi', u.delta_phi, grad_u.delta_phi),
        u.delta_w + lr * step(('w',), grad_u.delta_w),
    )
    return project(moved, config.radii)


def _gradient_mapping_norm(u, u_next, lr):
    dx = _block_norm(u_next.delta_x[k] - u.delta_x[k] for k in u.delta_x)
    dphi = _block_norm(u_next.delta_phi[k] - u.delta_phi[k] for k in u.delta_phi)
    dw = float(np.linalg.norm(u_next.delta_w - u.delta_w))
    return math.sqrt(dx * dx + dphi * dphi + dw * dw) / lr if lr > 0 else 0.0


def _u_grad_norm(grad_u):
    nx, nphi, nw = grad_u.norms()
    return math.sqrt(nx * nx + nphi * nphi + nw * nw)


def ascent_step(problem, u, w, batch, lr, config, dropout_seed=None):
    """u' = project(u + lr * grad_u H(u, w))."""
    ev = evaluate(problem, w, u, batch, config, dropout_seed)
    return ascend(u, ev.grad_u, lr, config)


def descent_step(problem, w, u, batch, lr, config, dropout_seed=None):
    """w' = w - lr * grad_w H(u, w), including the path through w + dw."""
    ev = evaluate(problem, w, u, batch, config, dropout_seed)
    return w - lr * ev.grad_w


class TrainTrace:
    """
    Inner records are one per ascent step, outer records one per descent
    step. Running minima of squared gradient norms restart with every outer
    iteration (inner) and with every task (outer).
    `last_u` is the perturbation the latest descent step played against.
    """

    COLUMNS = 'task_id', 'outer_j', 'inner_i', 'h_cost', 'g_u_norm', 'g_w_norm'
    EXTRA = (
        'pg_u_norm', 'min_g_u_sq', 'min_pg_u_sq', 'min_g_w_sq',
        'u_term1', 'u_term2', 'u_term3', 'w_term0', 'w_term1', 'w_term2', 'w_term3',
    )

    def __init__(self, config):
        self.config = config
        self.inner = []
        self.outer = []
        self.last_u = None

    def add_inner(self, task_id, j, i, ev, pg_norm):
        g = _u_grad_norm(ev.grad_u)
        fresh = i == 0
        prev = self.inner[-1] if self.inner and not fresh else None
        self.inner.append(dict(
            task_id=task_id, outer_j=j, inner_i=i, h_cost=ev.value, g_u_norm=g, pg_u_norm=pg_norm,
            min_g_u_sq=g * g if prev is None else min(prev['min_g_u_sq'], g * g),
            min_pg_u_sq=pg_norm * pg_norm if prev is None else min(prev['min_pg_u_sq'], pg_norm * pg_norm),
            u_term1=ev.u_terms[0], u_term2=ev.u_terms[1], u_term3=ev.u_terms[2],
        ))

    def add_outer(self, task_id, j, ev):
        g = float(np.linalg.norm(ev.grad_w))
        prev = self.outer[-1] if self.outer and self.outer[-1]['task_id'] == task_id else None
        self.outer.append(dict(
            task_id=task_id, outer_j=j, inner_i=None, h_cost=ev.value, g_w_norm=g,
            min_g_w_sq=g * g if prev is None else min(prev['min_g_w_sq'], g * g),
            w_term0=ev.w_terms[0], w_term1=ev.w_terms[1], w_term2=ev.w_terms[2], w_term3=ev.w_terms[3],
        ))

    def extend(self, other):
        self.inner.extend(other.inner)
        self.outer.extend(other.outer)
        self.last_u = other.last_u

    def to_frame(self):
        rows = sorted(
            self.inner + self.outer,
            key=lambda r: (r['task_id'], r['outer_j'], math.inf if r['inner_i'] is None else r['inner_i']),
        )
        frame = pd.DataFrame(rows, columns=list(self.COLUMNS + self.EXTRA))
        frame['inner_i'] = frame['inner_i'].astype('Int64')
        return frame


def _child_rngs(rng, count):
    seeds = rng.integers(0, 2 ** 63 - 1, size=count)
    return [np.random.default_rng(int(s)) for s in seeds]


def _dropout_seed(rng):
    return int(rng.integers(0, 2 ** 31 - 1))


def train_task(problem, w_init, new_items, replay, config, rng, task_id=0):
    """
    rho outer iterations; each resets u to zero, runs zeta projected ascent
    steps on fresh joint minibatches, then one descent step on another fresh
    minibatch with u held at its last iterate. The replay buffer absorbs
    `new_items` at the end. Ascent batches, descent batches and the buffer
    update draw from separate child streams of `rng`.
    """
    problem = IProblem(problem)
    if not new_items:
        raise EmptyTask("task {} has no training items".format(task_id))

    ascent_rng, descent_rng, replay_rng = _child_rngs(rng, 3)
    a_lr, d_lr = config.ascent_lr, config.descent_lr
    adam_w = Adam() if config.optimizer == 'adam' else None

    w = np.array(w_init, dtype=np.float64)
    trace = TrainTrace(config)

    log.info("task=%d items=%d buffer=%d rho=%d zeta=%d", task_id, len(new_items),
             len(replay) if replay is not None else 0, config.rho, config.zeta)

    for j in range(config.rho):
        u = PlayerU.zeros(problem.param_size)
        adam_u = Adam() if config.optimizer == 'adam' else None

        for i in range(config.zeta):
            batch = sample_joint(replay, new_items, config.batch_b, ascent_rng)
            try:
                ev = evaluate(problem, w, u, batch, config, _dropout_seed(ascent_rng))
                _check_finite(ev)
                u_next = ascend(u, ev.grad_u, a_lr, config, adam_u)
            except NonFiniteResult as e:
                raise Divergence(task_id, j, i, e) from e

            trace.add_inner(task_id, j, i, ev, _gradient_mapping_norm(u, u_next, a_lr))
            u = u_next

        batch = sample_joint(replay, new_items, config.batch_b, descent_rng)
        try:
            ev = evaluate(problem, w, u, batch, config, _dropout_seed(descent_rng))
            _check_finite(ev)
        except NonFiniteResult as e:
            raise Divergence(task_id, j, None, e) from e

        if adam_w is None:
            w = w - d_lr * ev.grad_w
        else:
            adam_w.tick()
            w = w - d_lr * adam_w.direction('w', ev.grad_w)

        if not np.all(np.isfinite(w)):
            raise Divergence(task_id, j, None, "parameters left the finite range")

        trace.add_outer(task_id, j, ev)
        trace.last_u = u
        if (j + 1) % max(1, config.rho // 10) == 0:
            log.debug("task=%d outer=%d h=%.6g gw=%.3g", task_id, j + 1, ev.value, trace.outer[-1]['g_w_norm'])

    if replay is not None:
        replay.update(new_items, replay_rng)

    return w, trace


def _check_finite(ev):
    if not math.isfinite(ev.value) or not np.all(np.isfinite(ev.grad_w)):
        raise NonFiniteResult("cost or weight gradient is not finite")
