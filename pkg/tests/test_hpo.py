import math

import numpy as np
import pytest
from scipy import stats

from gclgame import hpo
from gclgame.errors import InvalidConfig, NoSuccessfulTrials
from gclgame.game import GameConfig
from gclgame.gnn import ModelConfig
from gclgame.hpo import CopulaModel, HpoSpace, TrialRecord


def record(trial, fm, **values):
    return TrialRecord(trial, values, fm, 0.5, trial, 0.0)


def test_default_space():
    space = HpoSpace.parse()
    assert space.names == list(hpo.NAMES)
    assert HpoSpace.parse(str(space)).dims == space.dims


def test_samples_stay_in_bounds(rng):
    space = HpoSpace.parse()
    for _ in range(2000):
        values = space.sample(rng)
        assert space.contains(values)
        assert isinstance(values['hc'], int)


def test_log_dimension_is_uniform_in_exponent(rng):
    space = HpoSpace.parse("alpha_w:log[1e-7,1e-3]")
    exponents = [math.log10(space.sample(rng)['alpha_w']) for _ in range(2000)]
    assert stats.kstest(exponents, 'uniform', args=(-7, 4)).pvalue > 0.01


def test_single_point_space(rng):
    space = HpoSpace.parse("nlays:int[2,2] drop:real[0.5,0.5]")
    assert space.sample(rng) == dict(nlays=2, drop=0.5)


@pytest.mark.parametrize("expr", [
    "depth:int[1,4]",
    "nlays:int[4,1]",
    "alpha_w:log[0,1]",
    "nlays:int[1,2] nlays:int[1,3]",
    "hc:int[1.2,1.8]",
    "hc:float[1,2]",
    "hc:int[1,",
])
def test_bad_spaces(expr):
    with pytest.raises(InvalidConfig):
        HpoSpace.parse(expr)


def test_clamp_rounds_integers():
    space = HpoSpace.parse("hc:int[4,64] drop:real[0,0.8]")
    assert space.clamp('hc', 70.2) == 64
    assert space.clamp('hc', 7.6) == 8
    assert space.clamp('drop', -0.1) == 0.0


def test_apply_values_spreads_beta():
    model, game = hpo.apply_values(dict(nlays=3, beta=0.4, rho=7), ModelConfig(), GameConfig())
    assert model.nlays == 3
    assert (game.beta1, game.beta2, game.beta3, game.rho) == (0.4, 0.4, 0.4, 7)


def test_failed_trial_scores_infinite_forgetting():
    fm, pm = hpo.run_trial(None, ModelConfig(), GameConfig(), dict(nlays=0), 0)
    assert fm == math.inf and math.isnan(pm)


def test_top_quantile():
    records = [record(0, 0.3), record(1, 0.1), record(2, 0.2)]
    assert hpo.top_quantile(records, 1.0) == sorted(records, key=lambda r: r.FM)
    assert hpo.top_quantile(records, 0.33) == [records[1]]
    assert len(hpo.top_quantile(records, 0.5)) == 2

    top = hpo.top_quantile(records, 0.5)
    assert hpo.top_quantile(top, 1.0) == top


def test_top_quantile_skips_failures():
    records = [record(0, math.inf), record(1, 0.4), record(2, 0.2), record(3, 0.2)]
    assert [r.trial for r in hpo.top_quantile(records, 0.6)] == [2, 3]

    with pytest.raises(NoSuccessfulTrials):
        hpo.top_quantile([record(0, math.inf)], 0.5)
    with pytest.raises(InvalidConfig):
        hpo.top_quantile(records, 0.0)


def test_copula_of_independent_columns(rng):
    model = CopulaModel.fit(rng.uniform(size=(2000, 2)))
    assert abs(model.corr[0, 1]) < 0.08


def test_copula_of_identical_columns(rng):
    x = rng.normal(size=300)
    model = CopulaModel.fit(np.column_stack([x, x]))
    assert model.corr[0, 1] >= 0.99


def test_copula_point_mass(rng):
    data = np.column_stack([rng.normal(size=50), np.full(50, 3.5)])
    model = CopulaModel.fit(data)
    assert model.point_mass == [False, True]
    assert np.all(model.sample_array(200, rng)[:, 1] == 3.5)


def test_copula_preserves_marginals_and_ranks(rng):
    x = rng.exponential(size=2000)
    y = np.log1p(x) + 0.3 * rng.normal(size=2000)
    data = np.column_stack([x, y])

    samples = CopulaModel.fit(data).sample_array(1000, rng)
    for j in range(2):
        assert stats.ks_2samp(samples[:, j], data[:, j]).statistic <= 0.08
        assert data[:, j].min() <= samples[:, j].min() and samples[:, j].max() <= data[:, j].max()

    fitted = stats.spearmanr(data[:, 0], data[:, 1]).correlation
    sampled = stats.spearmanr(samples[:, 0], samples[:, 1]).correlation
    assert abs(fitted - sampled) < 0.1


def test_copula_needs_three_records():
    with pytest.raises(InvalidConfig):
        CopulaModel.fit(np.zeros((2, 1)))


def test_copula_samples_are_valid_configs(rng):
    space = HpoSpace.parse("hc:int[4,64] alpha_w:log[1e-5,1e-1] beta:real[0,1]")
    records = [record(n, 0.0, **space.sample(rng)) for n in range(30)]
    configs = hpo.copula_sample(hpo.copula_fit(records, space), 500, rng, space)

    assert len(configs) == 500
    assert all(space.contains(c) for c in configs)
    assert all(isinstance(c['hc'], int) for c in configs)


def stub_runner(stream, model_config, game_config, values, seed, method):
    return values['beta'], 1.0 - values['beta']


def test_random_search_with_stub_runner():
    space = HpoSpace.parse("rho:int[1,10] beta:real[0,1]")
    serial = hpo.random_search(space, 8, None, None, None, np.random.default_rng(5), runner=stub_runner)
    threaded = hpo.random_search(space, 8, None, None, None, np.random.default_rng(5), runner=stub_runner,
                                 workers=3)

    assert [r.trial for r in serial] == list(range(8))
    assert [(r.values, r.FM, r.seed) for r in serial] == [(r.values, r.FM, r.seed) for r in threaded]
    assert all(r.FM == r.values['beta'] for r in serial)

    frame = hpo.trials_frame(serial, space)
    assert list(frame.columns) == ['trial', 'rho', 'beta', 'FM', 'PM', 'seed', 'runtime_s']

    with pytest.raises(InvalidConfig):
        hpo.random_search(space, 0, None, None, None, np.random.default_rng(5), runner=stub_runner)


def test_interrupted_search_returns_finished_trials():
    calls = []

    def runner(*args):
        calls.append(args)
        if len(calls) == 3:
            raise KeyboardInterrupt
        return stub_runner(*args)

    space = HpoSpace.parse("beta:real[0,1]")
    records = hpo.random_search(space, 8, None, None, None, np.random.default_rng(5), runner=runner)
    assert records.interrupted
    assert [r.trial for r in records] == [0, 1]
