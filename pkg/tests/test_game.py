import numpy as np
import pytest

from gclgame import game, gnn, toys
from gclgame import tensor as T
from gclgame.errors import Divergence, EmptyTask, InvalidConfig
from gclgame.game import GameConfig, PlayerU
from gclgame.problem import GnnProblem
from gclgame.replay import Minibatch, ReplayItem


@pytest.fixture
def tiny():
    problem, items, params = toys.tiny_gnn(0)
    return problem, Minibatch(items[:5]), params.values


def random_u(problem, batch, seed, scale=0.1):
    rng = np.random.default_rng(seed)
    u = PlayerU.zeros(problem.param_size).ensure(problem.inputs(batch))
    for blocks in (u.delta_x, u.delta_phi):
        for k in blocks:
            blocks[k] = scale * rng.normal(size=blocks[k].shape)
    u.delta_w = scale * rng.normal(size=u.delta_w.shape)
    return u


def test_defaults():
    config = GameConfig()
    assert (config.rho, config.zeta, config.buffer_capacity, config.batch_b) == (1000, 10, 500, 32)
    assert (config.alpha_w, config.alpha_u) == (1e-3, 1e-7)
    assert config.ascent_lr == pytest.approx(1e-7 / np.sqrt(10))
    assert config.descent_lr == pytest.approx(1e-3 / np.sqrt(1000))


@pytest.mark.parametrize("change", [dict(beta1=1.5), dict(rho=0), dict(batch_b=1), dict(alpha_u=0.0),
                                    dict(optimizer='lbfgs'), dict(zeta=-1), dict(tau=1)])
def test_config_validation(change):
    with pytest.raises(InvalidConfig):
        GameConfig(**change)


def test_project_scales_onto_ball():
    u = game.project(PlayerU({}, {}, [3.0, 4.0]), (1.0, 1.0, 1.0))
    np.testing.assert_allclose(u.delta_w, [0.6, 0.8])
    assert game.project(u, (1.0, 1.0, 1.0)) == u


def test_project_leaves_inner_points(tiny):
    problem, batch, _ = tiny
    u = random_u(problem, batch, 0, scale=0.01)
    assert game.project(u, (1.0, 1.0, 1.0)) == u


def test_h_with_zero_betas_is_j(tiny):
    problem, batch, w = tiny
    config = GameConfig(beta1=0.0, beta2=0.0, beta3=0.0)
    u = random_u(problem, batch, 1)
    assert game.h_cost(problem, w, u, batch, config) == pytest.approx(problem.value(w, batch), abs=1e-12)


def test_h_at_zero_perturbation(tiny):
    problem, batch, w = tiny
    config = GameConfig(beta1=0.2, beta2=0.3, beta3=0.4)
    u = PlayerU.zeros(problem.param_size)
    assert game.h_cost(problem, w, u, batch, config) == pytest.approx(1.9 * problem.value(w, batch), abs=1e-12)


def test_no_edge_game_ignores_edge_perturbation(tiny):
    problem, batch, w = tiny
    config = game.reduce_no_edge(GameConfig(beta1=0.5, beta2=0.5, beta3=0.5))
    assert config.beta2 == 0.0 and not config.perturb_phi

    u = random_u(problem, batch, 2)
    v = u.copy()
    for k in v.delta_phi:
        v.delta_phi[k] = v.delta_phi[k] + 0.3
    assert game.h_cost(problem, w, u, batch, config) == pytest.approx(game.h_cost(problem, w, v, batch, config),
                                                                      abs=1e-12)
    assert all(np.all(g == 0) for g in game.evaluate(problem, w, u, batch, config).grad_u.delta_phi.values())


def assert_h_gradients(problem, batch, w, u, config):
    ev = game.evaluate(problem, w, u, batch, config)

    def h_w(v):
        return game.h_cost(problem, v, u, batch, config)

    def h_dw(v):
        shifted = u.copy()
        shifted.delta_w = v
        return game.h_cost(problem, w, shifted, batch, config)

    assert T.relative_error(ev.grad_w, T.fd_gradient(h_w, w)) < 1e-6
    assert T.relative_error(ev.grad_u.delta_w, T.fd_gradient(h_dw, u.delta_w)) < 1e-6

    for blocks, grads in ((u.delta_x, ev.grad_u.delta_x), (u.delta_phi, ev.grad_u.delta_phi)):
        for key in blocks:
            def h_block(v, blocks=blocks, key=key):
                old = blocks[key]
                blocks[key] = v
                try:
                    return game.h_cost(problem, w, u, batch, config)
                finally:
                    blocks[key] = old

            assert T.relative_error(grads[key], T.fd_gradient(h_block, blocks[key].copy())) < 1e-6


@pytest.mark.parametrize("seed", range(3))
def test_h_gradients_match_finite_differences(seed):
    problem, items, params = toys.tiny_gnn(seed)
    batch = Minibatch(items[:4])
    config = GameConfig(beta1=0.3, beta2=0.5, beta3=0.7)
    assert_h_gradients(problem, batch, params.values, random_u(problem, batch, seed), config)


@pytest.mark.slow
def test_h_gradients_over_random_models():
    rng = np.random.default_rng(2024)
    for seed in range(200):
        snapshot = toys.tiny_snapshot(seed, num_vertices=int(rng.integers(7, 9)),
                                      feature_dim=int(rng.integers(1, 4)), num_classes=3)
        config = gnn.ModelConfig(nlays=int(rng.integers(1, 3)), hc=int(rng.integers(1, 5)),
                                 in_dim=snapshot.vertex_features.shape[1], out_dim=3, edge_dim=1)
        problem = GnnProblem(config)
        items = [ReplayItem(0, 0, snapshot, p) for p in range(snapshot.num_vertices)]
        batch = Minibatch(items[:int(rng.integers(1, snapshot.num_vertices + 1))])
        betas = rng.uniform(size=3)
        game_config = GameConfig(beta1=betas[0], beta2=betas[1], beta3=betas[2])

        assert_h_gradients(problem, batch, gnn.init_params(config, seed).values,
                           random_u(problem, batch, seed), game_config)


def test_ascent_increases_h(tiny):
    problem, batch, w = tiny
    config = GameConfig(beta1=1.0, beta2=1.0, beta3=1.0)
    u = PlayerU.zeros(problem.param_size)
    before = game.h_cost(problem, w, u, batch, config)
    u = game.ascent_step(problem, u, w, batch, 1e-2, config)
    assert game.h_cost(problem, w, u, batch, config) > before


def test_descent_decreases_h(tiny):
    problem, batch, w = tiny
    config = GameConfig(beta1=1.0, beta2=1.0, beta3=1.0)
    u = random_u(problem, batch, 3, scale=0.01)
    before = game.h_cost(problem, w, u, batch, config)
    w2 = game.descent_step(problem, w, u, batch, 1e-2, config)
    assert game.h_cost(problem, w2, u, batch, config) < before


def test_saddle_toy_reaches_closed_form_point():
    problem, config = toys.saddle_game(rho=200)
    w, trace = game.train_task(problem, np.zeros(2), toys.toy_items(2), None, config, np.random.default_rng(0))
    u_star, w_star = problem.saddle(config.beta1)
    np.testing.assert_allclose(w, w_star, atol=1e-3)
    np.testing.assert_allclose(trace.last_u.delta_x[toys.TOY_KEY].reshape(-1), u_star, atol=1e-3)
    np.testing.assert_array_equal(trace.last_u.delta_w, np.zeros(2))


@pytest.mark.slow
def test_saddle_toy_with_documented_rates():
    problem, config = toys.saddle_game()
    w, trace = game.train_task(problem, np.zeros(2), toys.toy_items(2), None, config, np.random.default_rng(0))
    u_star, w_star = problem.saddle(config.beta1)
    np.testing.assert_allclose(w, w_star, atol=1e-3)
    np.testing.assert_allclose(trace.last_u.delta_x[toys.TOY_KEY].reshape(-1), u_star, atol=1e-3)


def toy_ascent(lr, steps):
    """Full-batch projected ascent on the saddle toy at a fixed w; returns the iterates and u*."""
    problem, config = toys.saddle_game()
    batch = Minibatch(toys.toy_items(2))
    w = np.array([0.4, 0.1])
    u = PlayerU.zeros(2)
    iterates = []
    for _ in range(steps):
        u = game.ascent_step(problem, u, w, batch, lr, config)
        iterates.append((u, game.h_cost(problem, w, u, batch, config)))
    return iterates, problem.a * w


def test_full_batch_ascent_is_monotone():
    iterates, _ = toy_ascent(0.3, 20)
    values = [h for _, h in iterates]
    assert all(b >= a for a, b in zip(values, values[1:]))


def test_ascent_contracts_geometrically():
    iterates, u_star = toy_ascent(0.5, 100)
    u, _ = iterates[-1]
    assert np.linalg.norm(u.delta_x[toys.TOY_KEY].reshape(-1) - u_star) < 1e-10


@pytest.mark.parametrize("seed", range(5))
def test_projection_is_idempotent(tiny, seed):
    problem, batch, _ = tiny
    once = game.project(random_u(problem, batch, seed, scale=3.0), (0.5, 1.0, 2.0))
    assert game.project(once, (0.5, 1.0, 2.0)) == once
    assert all(n <= r * (1.0 + game.PROJECTION_SLACK) for n, r in zip(once.norms(), (0.5, 1.0, 2.0)))


def test_zero_betas_make_zeta_irrelevant():
    problem, items, params = toys.tiny_gnn(0)
    base = GameConfig(beta1=0.0, beta2=0.0, beta3=0.0, rho=5, batch_b=4, alpha_w=0.1)
    results = [
        game.train_task(problem, params.values, items, None, base.replace(zeta=zeta), np.random.default_rng(4))[0]
        for zeta in (0, 3)
    ]
    np.testing.assert_array_equal(results[0], results[1])


def test_trace_records_every_step():
    problem, items, params = toys.tiny_gnn(0)
    config = toys.rate_game(rho=3, zeta=4)
    _, trace = game.train_task(problem, params.values, items, None, config, np.random.default_rng(0), task_id=2)

    frame = trace.to_frame()
    assert len(trace.inner) == 12 and len(trace.outer) == 3
    assert list(frame.columns[:6]) == list(game.TrainTrace.COLUMNS)
    assert set(frame['task_id']) == {2}
    assert frame['inner_i'].isna().sum() == 3
    minima = [r['min_g_u_sq'] for r in trace.inner[:4]]
    assert minima == sorted(minima, reverse=True)


def test_adam_trains():
    problem, items, params = toys.tiny_gnn(0)
    config = toys.rate_game(rho=5, zeta=2, optimizer='adam', alpha_w=0.01, alpha_u=0.01)
    w, _ = game.train_task(problem, params.values, items, None, config, np.random.default_rng(0))
    assert np.all(np.isfinite(w))
    assert not np.array_equal(w, params.values)


def test_divergence_names_the_step():
    problem = toys.QuadraticToy([0.5, -0.5], x0=[1.0, 1.0])
    config = GameConfig(beta1=0.0, beta2=0.0, beta3=0.0, zeta=0, rho=500, alpha_w=1e3, schedule='constant',
                        batch_b=2, buffer_capacity=0)
    with pytest.raises(Divergence) as e:
        game.train_task(problem, np.ones(2), toys.toy_items(2), None, config, np.random.default_rng(0), task_id=1)
    assert e.value.task_id == 1
    assert e.value.outer_j is not None


def test_empty_task():
    problem, _, params = toys.tiny_gnn(0)
    with pytest.raises(EmptyTask):
        game.train_task(problem, params.values, [], None, GameConfig(), np.random.default_rng(0))
