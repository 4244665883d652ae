import numpy as np
import pytest

from gclgame import graph


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow acceptance tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return

    skip = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_config():
    return graph.SynthConfig(
        num_tasks=3,
        classes_per_task=2,
        universe_size=40,
        vertices_per_task=16,
        feature_dim=4,
        p_in=0.3,
        p_out=0.05,
    )


@pytest.fixture
def small_stream(small_config):
    return graph.synth_verg_stream(small_config, 7)
