import collections
import itertools
import logging
import math

import numpy as np
import pandas as pd
from scipy import stats

from . import continual, metrics
from . import tensor as T
from .errors import BoundViolation, InsufficientGrid, InvalidConfig, TooFewTasks
from .game import PlayerU, ascend, evaluate, project, train_task
from .problem import IProblem
from .replay import sample_joint

log = logging.getLogger(__name__)

BOUND_TOLERANCE = 1e-12
RATE_WINDOW = -1.2, -0.3

# maxima over sampled points, so lower bounds on the true suprema
TheoryConstants = collections.namedtuple("TheoryConstants", "M L_w G G_x G_phi G_w G_bar beta b N")


def _ball(rng, shapes, radius):
    """Uniform sample of the joint norm ball over arrays of the given shapes."""
    sizes = [int(np.prod(s)) for s in shapes]
    dim = sum(sizes)
    if dim == 0:
        return [np.zeros(s) for s in shapes]

    direction = rng.normal(size=dim)
    norm = np.linalg.norm(direction)
    direction = direction / norm if norm > 0 else direction
    flat = direction * radius * rng.uniform() ** (1.0 / dim)

    out, offset = [], 0
    for shape, size in zip(shapes, sizes):
        out.append(flat[offset:offset + size].reshape(shape))
        offset += size
    return out


def _full_gradient(problem, batch, inputs, dx, dphi, w):
    keys = list(inputs)
    tape = T.Tape()
    w_t = tape.watch(w)
    xs = dict((k, tape.watch(inputs[k][0] + dx[k])) for k in keys)
    phis = dict((k, tape.watch(inputs[k][1] + dphi[k])) for k in keys)
    grads = tape.backward(problem.objective(w_t, xs, phis, batch, None))

    return (
        np.concatenate([grads[xs[k]].reshape(-1) for k in keys]),
        np.concatenate([grads[phis[k]].reshape(-1) for k in keys]),
        grads[w_t].copy(),
    )


def estimate_constants(problem, batch, w_center, config, sample_count, rng, dataset_size=None):
    """
    Each sample also draws a second w (for L_w) and a second perturbation
    (for M). Longer runs extend the sample sequence of shorter ones.
    """
    if sample_count < 2:
        raise InvalidConfig('sample_count', "need at least two samples")

    problem = IProblem(problem)
    inputs = problem.inputs(batch)
    keys = list(inputs)
    x_shapes = [inputs[k][0].shape for k in keys]
    phi_shapes = [inputs[k][1].shape for k in keys]
    w_center = np.asarray(w_center, dtype=np.float64)

    def draw_u():
        return (dict(zip(keys, _ball(rng, x_shapes, config.r_x))),
                dict(zip(keys, _ball(rng, phi_shapes, config.r_phi))))

    def draw_w():
        return w_center + _ball(rng, [w_center.shape], config.r_w)[0]

    M = L_w = G = G_x = G_phi = G_w = 0.0

    for _ in range(sample_count):
        dx, dphi = draw_u()
        w = draw_w()
        gx, gphi, gw = _full_gradient(problem, batch, inputs, dx, dphi, w)

        nx, nphi, nw = np.linalg.norm(gx), np.linalg.norm(gphi), np.linalg.norm(gw)
        G_x, G_phi, G_w = max(G_x, nx), max(G_phi, nphi), max(G_w, nw)
        G = max(G, math.sqrt(nx * nx + nphi * nphi + nw * nw))

        w2 = draw_w()
        _, _, gw2 = _full_gradient(problem, batch, inputs, dx, dphi, w2)
        dist = np.linalg.norm(w - w2)
        if dist > 0:
            L_w = max(L_w, np.linalg.norm(gw - gw2) / dist)

        dx2, dphi2 = draw_u()
        gx2, gphi2, _ = _full_gradient(problem, batch, inputs, dx2, dphi2, w)
        dist = math.sqrt(sum(float(np.sum((dx[k] - dx2[k]) ** 2) + np.sum((dphi[k] - dphi2[k]) ** 2))
                             for k in keys))
        if dist > 0:
            M = max(M, math.sqrt(float(np.sum((gx - gx2) ** 2) + np.sum((gphi - gphi2) ** 2))) / dist)

    N = len(batch) if dataset_size is None else dataset_size
    return TheoryConstants(
        M=float(M), L_w=float(L_w), G=float(G), G_x=float(G_x), G_phi=float(G_phi), G_w=float(G_w),
        G_bar=float(G_phi + G_x + G_w), beta=config.beta, b=config.batch_b, N=N,
    )


BoundReport = collections.namedtuple("BoundReport", "u_ratio w_ratio steps u_vs_constants w_vs_constants")


def _ratio(lhs, rhs):
    if rhs > 0:
        return lhs / rhs
    return 0.0 if lhs == 0 else math.inf


def check_gradient_bounds(trace, constants=None):
    """
    On every logged step:
        |g_u| <= beta1 |grad_x J1| + beta2 |grad_phi J2| + beta3 |grad_w J3|
        |g_w| <= (1 + 3 beta) max_t |grad_w J_t|
    """
    if not trace.inner and not trace.outer:
        raise InvalidConfig('trace', "no logged steps")

    c = trace.config
    u_ratio = w_ratio = 0.0
    u_abs = w_abs = 0.0

    for rec in trace.inner:
        rhs = c.beta1 * rec['u_term1'] + c.beta2 * rec['u_term2'] + c.beta3 * rec['u_term3']
        ratio = _ratio(rec['g_u_norm'], rhs)
        if ratio > 1.0 + BOUND_TOLERANCE:
            raise BoundViolation("ascent step task={task_id} j={outer_j} i={inner_i}: |g_u|={g_u_norm} exceeds "
                                 "{rhs}".format(rhs=rhs, **rec))
        u_ratio = max(u_ratio, ratio)
        u_abs = max(u_abs, rec['g_u_norm'])

    for rec in trace.outer:
        rhs = (1.0 + 3.0 * c.beta) * max(rec['w_term0'], rec['w_term1'], rec['w_term2'], rec['w_term3'])
        ratio = _ratio(rec['g_w_norm'], rhs)
        if ratio > 1.0 + BOUND_TOLERANCE:
            raise BoundViolation("descent step task={task_id} j={outer_j}: |g_w|={g_w_norm} exceeds "
                                 "{rhs}".format(rhs=rhs, **rec))
        w_ratio = max(w_ratio, ratio)
        w_abs = max(w_abs, rec['g_w_norm'])

    u_vs = w_vs = None
    if constants is not None:
        u_vs = _ratio(u_abs, constants.beta * constants.G_bar)
        w_vs = _ratio(w_abs, (1.0 + 3.0 * constants.beta) * constants.G)

    return BoundReport(u_ratio, w_ratio, len(trace.inner) + len(trace.outer), u_vs, w_vs)


class RateFit:
    """Least-squares line through (log grid, log running-min squared gradient)."""

    def __init__(self, grid, minima):
        grid = np.asarray(grid, dtype=np.float64)
        minima = np.asarray(minima, dtype=np.float64)

        if len(grid) != len(minima):
            raise InsufficientGrid("{} grid points for {} values".format(len(grid), len(minima)))
        if len(grid) < 4:
            raise InsufficientGrid("need at least 4 grid points, got {}".format(len(grid)))
        if np.any(np.diff(grid) <= 0) or grid[0] <= 0:
            raise InsufficientGrid("grid must be positive and strictly increasing")
        if grid[-1] / grid[0] < 100.0:
            raise InsufficientGrid("grid must span at least two decades")
        if np.any(minima <= 0) or not np.all(np.isfinite(minima)):
            raise InsufficientGrid("values must be positive and finite for a log-log fit")

        self.grid = grid
        self.minima = minima

        lx, ly = np.log(grid), np.log(minima)
        self.slope, self.intercept = (float(v) for v in np.polyfit(lx, ly, 1))
        stderr = stats.linregress(lx, ly).stderr
        self.half_width = float(stats.t.ppf(0.975, len(grid) - 2) * stderr)

    @property
    def ok(self):
        return RATE_WINDOW[0] <= self.slope <= RATE_WINDOW[1]

    def predicted(self):
        return np.exp(self.intercept) * self.grid ** self.slope

    def as_dict(self):
        return dict(slope=self.slope, intercept=self.intercept, half_width=self.half_width, ok=self.ok)


def fit_rate(grid, minima):
    return RateFit(grid, minima)


def running_minima(values):
    return np.minimum.accumulate(np.asarray(values, dtype=np.float64))


def ascent_rate(problem, items, w, base_config, grid, seeds):
    """Mean over seeds of min_i |G_u^(i)|^2 after one inner loop of each length in `grid`."""
    means = []
    for zeta in grid:
        config = base_config.replace(zeta=int(zeta), rho=1)
        values = []
        for seed in seeds:
            _, trace = train_task(problem, w, items, None, config, np.random.default_rng(seed))
            values.append(trace.inner[-1]['min_pg_u_sq'])
        means.append(float(np.mean(values)))
        log.info("ascent rate zeta=%d min_sq=%.6g", zeta, means[-1])

    return fit_rate(grid, means)


def descent_rate(problem, items, w, base_config, grid, seeds):
    """Mean over seeds of min_j |g_w^(j)|^2 after each number of outer steps in `grid`."""
    means = []
    for rho in grid:
        config = base_config.replace(rho=int(rho))
        values = []
        for seed in seeds:
            _, trace = train_task(problem, w, items, None, config, np.random.default_rng(seed))
            values.append(trace.outer[-1]['min_g_w_sq'])
        means.append(float(np.mean(values)))
        log.info("descent rate rho=%d min_sq=%.6g", rho, means[-1])

    return fit_rate(grid, means)


def epsilon_u(c, delta_u, variant='main'):
    head = (c.M + 1.0) / 2.0 * delta_u ** 2
    b, N, beta = float(c.b), float(c.N), c.beta
    if variant == 'main':
        return head + c.G_bar ** 2 * (0.5 * (b * c.G_bar / N) ** 2 + 2.0 * b * beta ** 2 * (N ** 2 + b ** 2) / N ** 3)
    return head + c.G_bar ** 2 * (2.0 * b * beta ** 2 / N + b ** 2 / (2.0 * N ** 2) + 2.0 * b ** 3 * beta ** 2 / N ** 3)


def epsilon_uw(c, delta_u, delta_w, variant='main'):
    b, N = float(c.b), float(c.N)
    k = (1.0 + 3.0 * c.beta) ** 2
    head = (c.L_w + 1.0) / 2.0 * delta_w ** 2
    if variant == 'main':
        return (head + c.G ** 2 * (k / 2.0 + (b * N ** 2 + b ** 3) / N ** 3 * k)
                + (c.M + 1.0) / 2.0 * delta_u ** 2
                + c.G_bar ** 2 * (0.5 * (b / N) ** 2 + 2.0 * b * c.beta ** 2 * (N ** 2 + b ** 2) / N ** 3))
    return head + k * c.G ** 2 * (0.5 + b / N + b ** 3 / N ** 3) + epsilon_u(c, delta_u, 'supplement')


def rate_bound_u(c, alpha_u, zeta, delta_u):
    """Right-hand side of the ascent convergence bound on min_i E|g_u|^2."""
    denom = 2.0 * alpha_u * math.sqrt(zeta) - c.M * alpha_u ** 2
    if denom <= 0:
        return math.inf
    b, N = float(c.b), float(c.N)
    noise = 2.0 * c.M * alpha_u ** 2 * c.beta ** 2 * c.G_bar ** 2
    return (2.0 * delta_u + noise * b / N + noise * b ** 3 / N ** 3) / denom


def rate_bound_w(c, alpha_w, rho, delta_u, delta_w):
    """Right-hand side of the descent convergence bound on min_j E|g_w|^2."""
    denom = 2.0 * alpha_w * math.sqrt(rho) - c.L_w * alpha_w ** 2
    if denom <= 0:
        return math.inf
    b, N, beta = float(c.b), float(c.N), c.beta
    return (
        (2.0 * rho * delta_u ** 2 * (c.M + 1.0) + 2.0 * (1.0 + 3.0 * beta) * c.G * delta_w ** 2) / denom
        + c.L_w * alpha_w ** 2 * b / (N * denom)
        + beta * rho * b ** 2 * c.G_bar ** 2 / (N ** 2 * denom)
        + c.G ** 2 * (1.0 + 3.0 * beta) ** 2 * c.L_w * alpha_w ** 2 * b ** 3 / (N ** 3 * denom)
    )


EquilibriumReport = collections.namedtuple(
    "EquilibriumReport",
    "res_u res_w bound_u bound_w grad_u_norm grad_w_norm eps_u eps_u_supplement eps_uw eps_uw_supplement",
)


def _offset_u(u, direction, scale):
    return PlayerU(
        dict((k, u.delta_x[k] + scale * direction.delta_x[k]) for k in u.delta_x),
        dict((k, u.delta_phi[k] + scale * direction.delta_phi[k]) for k in u.delta_phi),
        u.delta_w + scale * direction.delta_w,
    )


def _unit_u(u, rng):
    keys = list(u.delta_x)
    shapes = [u.delta_x[k].shape for k in keys] + [u.delta_phi[k].shape for k in keys] + [u.delta_w.shape]
    blocks = _ball(rng, shapes, 1.0)
    norm = math.sqrt(sum(float(np.sum(b * b)) for b in blocks))
    blocks = [b / norm for b in blocks] if norm > 0 else blocks
    n = len(keys)
    return PlayerU(dict(zip(keys, blocks[:n])), dict(zip(keys, blocks[n:2 * n])), blocks[-1])


def _inner_max(problem, u0, w, batch, config):
    """max_u H(u, w) approximated by zeta projected ascent steps from u0."""
    u = u0.copy()
    for _ in range(max(1, config.zeta)):
        u = ascend(u, evaluate(problem, w, u, batch, config).grad_u, config.ascent_lr, config)
    return evaluate(problem, w, u, batch, config).value


def equilibrium_residual(w_star, u_star, problem, batch, config, delta_u, delta_w, sample_count, rng,
                         constants=None):
    """
    res_u: largest gain H(u, w*) - H(u*, w*) over sampled u with |u - u*| <= delta_u.
    res_w: largest gain V(w*) - V(w) over sampled w with |w - w*| <= delta_w, where
    V(w) = max_u H(u, w) is approximated by projected ascent from u*.
    Samples are unit directions scaled by delta times a uniform fraction, so the
    same rng state samples the same rays at every delta. Bounds are the first
    order estimates delta |grad| + (K + 1)/2 delta^2 with K = M (u side) and
    K = L_w (w side), or K = 1 without constants.
    """
    problem = IProblem(problem)
    w_star = np.asarray(w_star, dtype=np.float64)
    u_star = u_star.copy().ensure(problem.inputs(batch))

    base = evaluate(problem, w_star, u_star, batch, config)
    g_u = math.sqrt(sum(n * n for n in base.grad_u.norms()))
    g_w = float(np.linalg.norm(base.grad_w))

    res_u = 0.0
    if delta_u > 0:
        for _ in range(sample_count):
            direction = _unit_u(u_star, rng)
            u = project(_offset_u(u_star, direction, delta_u * rng.uniform()), config.radii)
            res_u = max(res_u, evaluate(problem, w_star, u, batch, config).value - base.value)
    else:
        # keep the rng stream aligned with the delta_u > 0 case
        for _ in range(sample_count):
            _unit_u(u_star, rng)
            rng.uniform()

    res_w = 0.0
    if delta_w > 0:
        v_star = _inner_max(problem, u_star, w_star, batch, config)
        for _ in range(sample_count):
            direction = _ball(rng, [w_star.shape], 1.0)[0]
            norm = np.linalg.norm(direction)
            direction = direction / norm if norm > 0 else direction
            w = w_star + delta_w * rng.uniform() * direction
            res_w = max(res_w, v_star - _inner_max(problem, u_star, w, batch, config))

    k_u = constants.M if constants is not None else 1.0
    k_w = constants.L_w if constants is not None else 1.0
    bound_u = delta_u * g_u + (k_u + 1.0) / 2.0 * delta_u ** 2
    bound_w = delta_w * g_w + (k_w + 1.0) / 2.0 * delta_w ** 2

    eps = [None] * 4
    if constants is not None:
        eps = [
            epsilon_u(constants, delta_u, 'main'),
            epsilon_u(constants, delta_u, 'supplement'),
            epsilon_uw(constants, delta_u, delta_w, 'main'),
            epsilon_uw(constants, delta_u, delta_w, 'supplement'),
        ]

    return EquilibriumReport(res_u, res_w, bound_u, bound_w, g_u, g_w, *eps)


def find_saddle(problem, items, w_init, config, rng):
    """Run the trainer once and return (w, u) at its final iterate."""
    w, _ = train_task(problem, w_init, items, None, config, rng)
    batch = sample_joint(None, items, config.batch_b, np.random.default_rng(0))
    u = PlayerU.zeros(IProblem(problem).param_size)
    for _ in range(max(1, config.zeta)):
        u = ascend(u, evaluate(problem, w, u, batch, config).grad_u, config.ascent_lr, config)
    return w, u, batch


ABLATION_VARIANTS = 'game', 'nogame', 'replay'


class AblationReport:
    def __init__(self, records, *, interrupted=False):
        self.records = list(records)
        self.interrupted = interrupted

    def to_frame(self):
        return pd.DataFrame(self.records, columns=['variant', 'seed', 'PM', 'FM'])

    def summary(self):
        frame = self.to_frame()
        grouped = frame.groupby('variant', sort=False)
        out = pd.DataFrame({
            'PM_mean': grouped['PM'].mean(),
            'PM_std': grouped['PM'].std(ddof=1),
            'FM_mean': grouped['FM'].mean(),
            'FM_std': grouped['FM'].std(ddof=1),
        })
        return out.reindex([v for v in ABLATION_VARIANTS if v in out.index]).reset_index()

    def fm_by_seed(self, variant):
        return dict((r['seed'], r['FM']) for r in self.records if r['variant'] == variant)

    def win_rate(self, a, b):
        """Fraction of seeds where variant `a` forgets strictly less than `b`."""
        fa, fb = self.fm_by_seed(a), self.fm_by_seed(b)
        seeds = sorted(set(fa) & set(fb))
        if not seeds:
            return float("nan")
        return sum(1 for s in seeds if fa[s] < fb[s]) / len(seeds)

    def win_rates(self):
        return dict(((a, b), self.win_rate(a, b)) for a, b in itertools.permutations(ABLATION_VARIANTS, 2))


def run_ablation(stream, model_config, base_config, seeds, *, workers=1, score_kind=None):
    """Every variant on every seed; records come back ordered by seed, then variant."""
    seeds = list(seeds)
    if len(stream.tasks) < 2:
        raise TooFewTasks("ablation needs at least two tasks")
    if len(seeds) < 2:
        raise InvalidConfig('seeds', "ablation needs at least two seeds")

    kw = {} if score_kind is None else dict(score_kind=score_kind)

    def one(job):
        seed, variant = job
        result = continual.run_continual(stream, model_config, base_config, variant, seed, **kw)
        return dict(variant=variant, seed=seed, PM=metrics.pm(result.matrix), FM=metrics.fm(result.matrix))

    jobs = [(seed, variant) for seed in seeds for variant in ABLATION_VARIANTS]
    records = continual.run_jobs(one, jobs, workers)
    return AblationReport(records, interrupted=records.interrupted)
