import numpy as np
import pytest

from gclgame import continual, diagnostics, metrics, toys
from gclgame.errors import InvalidConfig
from gclgame.game import GameConfig
from gclgame.gnn import ModelConfig


def test_method_configs():
    base = GameConfig(beta1=0.2, beta2=0.3, beta3=0.4, zeta=7, buffer_capacity=9)
    assert continual.method_config(base, 'game') is base

    nogame = continual.method_config(base, 'nogame')
    assert (nogame.beta1, nogame.beta2, nogame.beta3, nogame.zeta) == (0.2, 0.3, 0.0, 0)

    replay = continual.method_config(base, 'replay')
    assert (replay.beta, replay.zeta, replay.buffer_capacity) == (0.0, 0, 9)
    assert continual.method_config(base, 'finetune').buffer_capacity == 0

    with pytest.raises(InvalidConfig):
        continual.method_config(base, 'ewc')


def test_run_fills_the_lower_triangle(small_stream):
    model = ModelConfig.for_stream(small_stream, nlays=1, hc=4)
    config = GameConfig(rho=3, zeta=2, batch_b=4, buffer_capacity=6, alpha_w=0.1, alpha_u=0.1)
    result = continual.run_continual(small_stream, model, config, 'game', 1)

    T = len(small_stream.tasks)
    assert result.matrix.num_tasks == T
    assert all(np.isfinite(result.matrix.R[k, :k + 1]).all() for k in range(T))
    assert len(result.trace.outer) == 3 * T
    assert len(result.buffer) == 6


def square(job):
    if job == 2:
        raise KeyboardInterrupt
    return job * job


@pytest.mark.parametrize("workers", [1, 3])
def test_jobs_stop_at_interrupt(workers):
    done = continual.run_jobs(square, range(6), workers)
    assert list(done) == [0, 1]
    assert done.interrupted


def test_jobs_without_interrupt():
    done = continual.run_jobs(abs, [-2, 3, -4], 2)
    assert list(done) == [2, 3, 4]
    assert not done.interrupted


@pytest.mark.slow
def test_replay_forgets_less_than_finetuning():
    stream = toys.drift_stream(0)
    model, config = toys.drift_game(stream)

    wins = 0
    for seed in range(20):
        replay = continual.run_continual(stream, model, config, 'replay', seed).matrix
        finetune = continual.run_continual(stream, model, config, 'finetune', seed).matrix
        wins += metrics.fm(replay) < metrics.fm(finetune)
    assert wins >= 16


@pytest.mark.slow
def test_no_bound_violations_over_a_continual_run():
    stream = toys.drift_stream(1)
    model, config = toys.drift_game(stream, rho=200, zeta=10, beta1=0.3, beta2=0.3, beta3=0.3)
    result = continual.run_continual(stream, model, config, 'game', 0)

    report = diagnostics.check_gradient_bounds(result.trace)
    assert report.steps == 3 * 200 * (10 + 1)
    assert report.u_ratio <= 1.0 + diagnostics.BOUND_TOLERANCE
    assert report.w_ratio <= 1.0 + diagnostics.BOUND_TOLERANCE
