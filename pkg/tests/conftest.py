import numpy as np
import pytest

from chanpred.channel_model import ArrayGeometry, ScenarioConfig
from chanpred.config import EvalConfig, ExperimentConfig
from chanpred.estimation import PilotConfig
from chanpred.neural import TrainConfig


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_geometry():
    return ArrayGeometry(bs_rows=2, bs_cols=2, ue_antennas=1)


@pytest.fixture
def small_scenario():
    return ScenarioConfig(num_subcarriers=8, num_paths=6)


@pytest.fixture
def tiny_experiment():
    """A config that trains every predictor in well under a second."""
    return ExperimentConfig(
        scenario=ScenarioConfig(num_subcarriers=8, num_paths=6),
        geometry=ArrayGeometry(bs_rows=2, bs_cols=2, ue_antennas=1),
        pilot=PilotConfig(),
        predictors=("AL-AD", "AL-FD", "SL-AD", "SL-FD", "OUT"),
        num_slots=8,
        train=TrainConfig(epochs=3),
        eval=EvalConfig(gap_slots=4, eval_slots=5),
        num_seeds=2,
    )


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
