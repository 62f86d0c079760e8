import numpy as np
import pytest

from dbmc import ModelConfig, build_database


@pytest.fixture(scope="session")
def tiny_model():
    return ModelConfig(lattice_size=8, n_steps=50, dt=0.01)


@pytest.fixture(scope="session")
def small_model():
    # long enough for paths at 1.2 and 1.4 to decorrelate noticeably
    return ModelConfig(lattice_size=8, n_steps=400, dt=0.01)


@pytest.fixture(scope="session")
def tiny_db(tiny_model):
    return build_database(tiny_model, [1.2, 1.35], "P3", 256, master_seed=77)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
