import numpy as np
import pytest

from gclgame import diagnostics, graph, toys
from gclgame.errors import BoundViolation, InsufficientGrid, InvalidConfig
from gclgame.game import GameConfig, PlayerU, TrainTrace, train_task
from gclgame.gnn import ModelConfig
from gclgame.replay import Minibatch

GRID = [10, 30, 100, 300, 1000]


def test_fit_recovers_exact_power_law():
    grid = np.array(GRID, dtype=float)
    fit = diagnostics.fit_rate(grid, 3.0 / np.sqrt(grid))
    assert fit.slope == pytest.approx(-0.5, abs=1e-10)
    assert fit.intercept == pytest.approx(np.log(3.0), abs=1e-10)
    assert fit.ok
    np.testing.assert_allclose(fit.predicted(), 3.0 / np.sqrt(grid), rtol=1e-9)


def test_flat_data_fails_the_rate_check():
    fit = diagnostics.fit_rate(GRID, [0.2] * 5)
    assert fit.slope == pytest.approx(0.0, abs=1e-12)
    assert not fit.ok
    assert fit.as_dict()['ok'] is False


@pytest.mark.parametrize("grid, values", [
    ([10, 100, 1000], [1.0, 0.5, 0.2]),
    ([10, 20, 30, 40], [1.0, 0.9, 0.8, 0.7]),
    ([10, 100, 50, 1000], [1.0, 0.9, 0.8, 0.7]),
    ([10, 30, 100, 1000], [1.0, 0.0, 0.8, 0.7]),
])
def test_insufficient_grid(grid, values):
    with pytest.raises(InsufficientGrid):
        diagnostics.fit_rate(grid, values)


def test_running_minima():
    np.testing.assert_array_equal(diagnostics.running_minima([3, 1, 2, 0.5]), [3, 1, 1, 0.5])


def test_constants_of_quadratic():
    problem = toys.QuadraticToy([0.0, 0.0])
    batch = Minibatch(toys.toy_items(2))
    c = diagnostics.estimate_constants(problem, batch, np.zeros(2), GameConfig(), 50, np.random.default_rng(0))
    assert c.L_w == pytest.approx(1.0)
    assert c.M == 0.0
    assert 0.0 < c.G_w <= 2.0
    assert c.N == 2


def test_constants_grow_with_samples():
    problem, items, params = toys.tiny_gnn(0)
    batch = Minibatch(items[:4])
    config = GameConfig()
    short = diagnostics.estimate_constants(problem, batch, params.values, config, 5, np.random.default_rng(3))
    long = diagnostics.estimate_constants(problem, batch, params.values, config, 10, np.random.default_rng(3))
    for a, b in zip(short[:7], long[:7]):
        assert b >= a


def test_constants_need_samples():
    problem, items, params = toys.tiny_gnn(0)
    with pytest.raises(InvalidConfig):
        diagnostics.estimate_constants(problem, Minibatch(items), params.values, GameConfig(), 1,
                                       np.random.default_rng(0))


def test_logged_gradients_respect_triangle_bounds():
    problem, items, params = toys.tiny_gnn(1)
    config = toys.rate_game(rho=3, zeta=3, beta1=0.3, beta2=0.6, beta3=0.9)
    _, trace = train_task(problem, params.values, items, None, config, np.random.default_rng(0))

    constants = diagnostics.estimate_constants(problem, Minibatch(items[:4]), params.values, config, 5,
                                               np.random.default_rng(0))
    report = diagnostics.check_gradient_bounds(trace, constants)
    assert report.steps == 12
    assert 0.0 < report.u_ratio <= 1.0 + diagnostics.BOUND_TOLERANCE
    assert 0.0 < report.w_ratio <= 1.0 + diagnostics.BOUND_TOLERANCE
    assert report.u_vs_constants is not None


def test_zero_betas_give_zero_ascent_gradient():
    problem, items, params = toys.tiny_gnn(0)
    config = toys.rate_game(rho=2, zeta=2, beta1=0.0, beta2=0.0, beta3=0.0)
    _, trace = train_task(problem, params.values, items, None, config, np.random.default_rng(0))
    assert all(r['g_u_norm'] == 0.0 for r in trace.inner)
    assert diagnostics.check_gradient_bounds(trace).u_ratio == 0.0


def test_tampered_trace_is_a_violation():
    problem, items, params = toys.tiny_gnn(0)
    config = toys.rate_game(rho=1, zeta=1)
    _, trace = train_task(problem, params.values, items, None, config, np.random.default_rng(0))
    rec = trace.outer[0]
    rec['g_w_norm'] = 2.0 * (1.0 + 3.0 * config.beta) * max(rec['w_term0'], rec['w_term1'], rec['w_term2'],
                                                          rec['w_term3']) + 1.0
    with pytest.raises(BoundViolation):
        diagnostics.check_gradient_bounds(trace)


def test_zero_radius_has_no_residual():
    problem, items, params = toys.tiny_gnn(0)
    batch = Minibatch(items[:4])
    report = diagnostics.equilibrium_residual(params.values, PlayerU.zeros(problem.param_size), problem, batch,
                                              toys.rate_game(zeta=2), 0.0, 0.0, 10, np.random.default_rng(0))
    assert report.res_u == 0.0 and report.res_w == 0.0
    assert report.bound_u == 0.0 and report.eps_u is None


def test_saddle_residuals_within_bounds():
    problem, config = toys.saddle_game(rho=200)
    w, u, batch = diagnostics.find_saddle(problem, toys.toy_items(2), np.zeros(2), config,
                                          np.random.default_rng(0))

    for delta in (0.1, 0.01):
        report = diagnostics.equilibrium_residual(w, u, problem, batch, config, delta, delta, 30,
                                                  np.random.default_rng(1))
        assert report.res_u <= report.bound_u
        assert report.res_w <= report.bound_w


def test_epsilons_from_constants():
    c = diagnostics.TheoryConstants(M=1.0, L_w=1.0, G=1.0, G_x=0.5, G_phi=0.5, G_w=1.0, G_bar=2.0, beta=0.0,
                                    b=1, N=1)
    # beta = 0 and b = N = 1 drop every beta term
    assert diagnostics.epsilon_u(c, 0.1) == pytest.approx(0.01 + 4.0 * 0.5 * 4.0)
    assert diagnostics.epsilon_uw(c, 0.1, 0.1) == pytest.approx(0.01 + 0.5 + 2.0 + 0.01 + 4.0 * 0.5)
    assert diagnostics.epsilon_uw(c, 1.0, 0.1) == pytest.approx(0.01 + 0.5 + 2.0 + 1.0 + 4.0 * 0.5)
    assert diagnostics.rate_bound_u(c, 2.0, 1, 0.1) == np.inf
    assert diagnostics.rate_bound_w(c, 0.1, 100, 0.1, 0.1) > 0.0


def ablation_setup():
    stream = graph.synth_verg_stream(
        graph.SynthConfig(num_tasks=2, classes_per_task=2, universe_size=30, vertices_per_task=12, feature_dim=3,
                          p_in=0.3, p_out=0.05),
        3,
    )
    return stream, ModelConfig.for_stream(stream, nlays=1, hc=4)


def test_ablation_rows():
    stream, model = ablation_setup()
    config = GameConfig(rho=3, zeta=2, batch_b=4, buffer_capacity=6, alpha_w=0.1, alpha_u=0.1)
    report = diagnostics.run_ablation(stream, model, config, [0, 1])

    frame = report.to_frame()
    assert len(frame) == 6
    assert list(frame['variant'][:3]) == list(diagnostics.ABLATION_VARIANTS)
    assert list(report.summary()['variant']) == list(diagnostics.ABLATION_VARIANTS)
    assert set(report.win_rates()) == {(a, b) for a in diagnostics.ABLATION_VARIANTS
                                       for b in diagnostics.ABLATION_VARIANTS if a != b}


def test_ablation_variants_agree_without_game_terms():
    stream, model = ablation_setup()
    config = GameConfig(rho=3, zeta=2, batch_b=4, buffer_capacity=6, alpha_w=0.1, beta1=0.0, beta2=0.0, beta3=0.0)
    report = diagnostics.run_ablation(stream, model, config, [0, 1], workers=2)

    for seed in (0, 1):
        fms = [r['FM'] for r in report.records if r['seed'] == seed]
        assert fms[0] == fms[1] == fms[2]
    assert report.win_rate('game', 'replay') == 0.0


def test_ablation_needs_two_seeds():
    stream, model = ablation_setup()
    with pytest.raises(InvalidConfig):
        diagnostics.run_ablation(stream, model, GameConfig(rho=1), [0])


def test_ablation_keeps_finished_runs_on_interrupt(monkeypatch):
    stream, model = ablation_setup()
    run = diagnostics.continual.run_continual
    calls = []

    def interrupted_run(*args, **kw):
        calls.append(args)
        if len(calls) == 4:
            raise KeyboardInterrupt
        return run(*args, **kw)

    monkeypatch.setattr(diagnostics.continual, 'run_continual', interrupted_run)
    report = diagnostics.run_ablation(stream, model, GameConfig(rho=2, zeta=1, batch_b=4, buffer_capacity=6), [0, 1])

    assert report.interrupted
    assert [(r['seed'], r['variant']) for r in report.records] == [(0, 'game'), (0, 'nogame'), (0, 'replay')]


def test_empty_trace_is_refused():
    with pytest.raises(InvalidConfig):
        diagnostics.check_gradient_bounds(TrainTrace(GameConfig()))


@pytest.mark.slow
def test_ablation_on_drift_stream():
    stream = toys.drift_stream(0)
    model, config = toys.drift_game(stream)
    report = diagnostics.run_ablation(stream, model, config, range(20), workers=4)

    fm = report.summary().set_index('variant')['FM_mean']
    assert fm['game'] <= fm['nogame'] <= fm['replay']
    assert report.win_rate('game', 'replay') >= 0.8


RATE_GRID = [100, 1000, 10000, 100000]


@pytest.mark.slow
def test_ascent_rate_on_tiny_network():
    problem, items, params = toys.tiny_gnn(0)
    fit = diagnostics.ascent_rate(problem, items, params.values, toys.rate_game(), RATE_GRID, range(10))
    assert fit.ok, fit.as_dict()


@pytest.mark.slow
def test_descent_rate_on_tiny_network():
    problem, items, params = toys.tiny_gnn(0)
    fit = diagnostics.descent_rate(problem, items, params.values, toys.rate_game(zeta=2), RATE_GRID, range(10))
    assert fit.ok, fit.as_dict()
