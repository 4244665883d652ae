"""
Random hyperparameter search over the continual pipeline, selection of the
best-forgetting quantile, and a Gaussian copula over the selected
configurations for drawing new ones.
"""
import collections
import logging
import math
import time

import numpy as np
import pandas as pd
from scipy import stats

from . import continual, metrics, spacexpr
from .errors import GclError, InvalidConfig, NoSuccessfulTrials

log = logging.getLogger(__name__)

NAMES = 'nlays', 'drop', 'hc', 'alpha_w', 'alpha_u', 'rho', 'zeta', 'beta'
KINDS = 'int', 'real', 'log'

DEFAULT_SPACE = (
    "nlays:int[1,4] drop:real[0,0.8] hc:int[4,64] alpha_w:log[1e-7,1e-1] alpha_u:log[1e-7,1e-1] "
    "rho:int[1,4000] zeta:int[1,64] beta:real[0,1]"
)

SHRINKAGE = 1e-6

Dimension = collections.namedtuple("Dimension", "name kind low high")


class HpoSpace:
    def __init__(self, dims):
        self.dims = []
        seen = set()

        for name, kind, low, high in dims:
            if name not in NAMES:
                raise InvalidConfig(name, "not a searchable hyperparameter")
            if name in seen:
                raise InvalidConfig(name, "listed twice")
            if kind not in KINDS:
                raise InvalidConfig(name, "unknown kind '{}'".format(kind))
            if not low <= high:
                raise InvalidConfig(name, "bounds [{}, {}] are not ordered".format(low, high))
            if kind == 'int' and math.ceil(low) > math.floor(high):
                raise InvalidConfig(name, "integer range holds no value")
            if kind == 'log' and low <= 0:
                raise InvalidConfig(name, "log range needs a positive lower bound")
            seen.add(name)
            self.dims.append(Dimension(name, kind, low, high))

    @classmethod
    def parse(cls, expr=DEFAULT_SPACE):
        return cls(spacexpr.parse(expr))

    @property
    def names(self):
        return [d.name for d in self.dims]

    def __str__(self):
        return spacexpr.format_space(self.dims)

    def sample(self, rng):
        values = {}
        for d in self.dims:
            if d.kind == 'int':
                values[d.name] = int(rng.integers(math.ceil(d.low), math.floor(d.high) + 1))
            elif d.kind == 'log':
                values[d.name] = float(10.0 ** rng.uniform(math.log10(d.low), math.log10(d.high)))
            else:
                values[d.name] = float(rng.uniform(d.low, d.high))
        return values

    def clamp(self, name, value):
        d = self.dims[self.names.index(name)]
        if d.kind == 'int':
            return int(min(max(int(round(value)), math.ceil(d.low)), math.floor(d.high)))
        return float(min(max(value, d.low), d.high))

    def contains(self, values):
        for d in self.dims:
            v = values[d.name]
            if not d.low <= v <= d.high:
                return False
            if d.kind == 'int' and int(v) != v:
                return False
        return True


def apply_values(values, model_config, game_config):
    """Model and game configurations with the searched values substituted."""
    model = dict((k, values[k]) for k in ('nlays', 'drop', 'hc') if k in values)
    game = dict((k, values[k]) for k in ('alpha_w', 'alpha_u', 'rho', 'zeta') if k in values)
    if 'beta' in values:
        game.update(beta1=values['beta'], beta2=values['beta'], beta3=values['beta'])

    return model_config.replace(**model), game_config.replace(**game)


TrialRecord = collections.namedtuple("TrialRecord", "trial values FM PM seed runtime_s")


def run_trial(stream, model_config, game_config, values, seed, method='game'):
    """(FM, PM) of one configuration; failures score FM = inf."""
    try:
        model, game = apply_values(values, model_config, game_config)
        result = continual.run_continual(stream, model, game, method, seed)
        return metrics.fm(result.matrix), metrics.pm(result.matrix)
    except (GclError, ArithmeticError) as e:
        log.warning("trial failed seed=%d values=%s: %s", seed, values, e)
        return math.inf, math.nan


def evaluate_configs(configs, stream, model_config, game_config, rng, *, method='game', workers=1,
                     runner=run_trial):
    """
    Run each configuration with its own seed drawn from `rng`; results keep
    input order. After a KeyboardInterrupt only the finished trials come back,
    flagged `interrupted`.
    """
    seeds = [int(s) for s in rng.integers(0, 2 ** 31 - 1, size=len(configs))]

    def one(job):
        n, values, seed = job
        start = time.perf_counter()
        fm, pm = runner(stream, model_config, game_config, values, seed, method)
        record = TrialRecord(n, values, fm, pm, seed, time.perf_counter() - start)
        log.info("trial=%d FM=%.6g PM=%.6g", n, fm, pm)
        return record

    return continual.run_jobs(one, zip(range(len(configs)), configs, seeds), workers)


def random_search(space, n_trials, stream, model_config, game_config, rng, **kw):
    if n_trials < 1:
        raise InvalidConfig('n_trials', "must be positive")

    configs = [space.sample(rng) for _ in range(n_trials)]
    return evaluate_configs(configs, stream, model_config, game_config, rng, **kw)


def top_quantile(records, q):
    """The ceil(q * n) successful records with the lowest FM; ties keep trial order."""
    if not 0.0 < q <= 1.0:
        raise InvalidConfig('q', "quantile {} outside (0, 1]".format(q))

    ok = [r for r in records if math.isfinite(r.FM)]
    if not ok:
        raise NoSuccessfulTrials("all {} trials failed".format(len(records)))

    k = int(math.ceil(q * len(ok)))
    return sorted(ok, key=lambda r: (r.FM, r.trial))[:k]


class CopulaModel:
    """
    Empirical marginals (order statistics) coupled through the correlation
    of normal scores. Constant columns are point masses and stay
    uncorrelated with everything else.
    """

    def __init__(self, names, order_stats, corr, point_mass):
        self.names = list(names)
        self.order_stats = [np.asarray(s, dtype=np.float64) for s in order_stats]
        self.corr = np.asarray(corr, dtype=np.float64)
        self.point_mass = list(point_mass)
        self.chol = np.linalg.cholesky(self.corr)

    @classmethod
    def fit(cls, data, names=None):
        data = np.asarray(data, dtype=np.float64)
        n, d = data.shape
        if n < 3:
            raise InvalidConfig('records', "copula needs at least three records, got {}".format(n))
        if d < 1:
            raise InvalidConfig('records', "copula needs at least one dimension")

        point_mass = [bool(np.all(data[:, j] == data[0, j])) for j in range(d)]
        scores = np.zeros((n, d))
        for j in range(d):
            if not point_mass[j]:
                scores[:, j] = stats.norm.ppf(stats.rankdata(data[:, j]) / (n + 1))

        corr = np.eye(d)
        live = [j for j in range(d) if not point_mass[j]]
        if len(live) > 1:
            corr[np.ix_(live, live)] = np.corrcoef(scores[:, live], rowvar=False)
        corr = (1.0 - SHRINKAGE) * corr + SHRINKAGE * np.eye(d)

        names = names if names is not None else ["x{}".format(j) for j in range(d)]
        return cls(names, [np.sort(data[:, j]) for j in range(d)], corr, point_mass)

    def sample_array(self, n, rng):
        z = rng.standard_normal((n, len(self.names))) @ self.chol.T
        u = stats.norm.cdf(z)
        out = np.empty_like(u)

        for j, order in enumerate(self.order_stats):
            if self.point_mass[j]:
                out[:, j] = order[0]
                continue
            m = len(order)
            # order statistic i sits at uniform level (i + 1) / (m + 1)
            out[:, j] = np.interp(u[:, j] * (m + 1) - 1.0, np.arange(m), order)

        return out


def copula_fit(records, space):
    data = [[r.values[name] for name in space.names] for r in records]
    return CopulaModel.fit(np.asarray(data, dtype=np.float64).reshape(len(records), len(space.names)), space.names)


def copula_sample(model, n, rng, space=None):
    """n configurations; with a space, integer dimensions are rounded and all are clamped."""
    if n < 1:
        raise InvalidConfig('n', "must be positive")

    draws = model.sample_array(n, rng)
    configs = []
    for row in draws:
        values = dict(zip(model.names, (float(v) for v in row)))
        if space is not None:
            values = dict((k, space.clamp(k, v)) for k, v in values.items())
        configs.append(values)
    return configs


def trials_frame(records, space):
    rows = []
    for r in records:
        row = dict(trial=r.trial)
        row.update((name, r.values.get(name)) for name in NAMES if name in space.names)
        row.update(FM=r.FM, PM=r.PM, seed=r.seed, runtime_s=r.runtime_s)
        rows.append(row)

    columns = ['trial'] + [n for n in NAMES if n in space.names] + ['FM', 'PM', 'seed', 'runtime_s']
    return pd.DataFrame(rows, columns=columns)
