import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def wave_split():
    """200 train / 100 test synthetic windows, L=64, C=2, standardized."""
    from tinysweep.datapipe import channel_stats, standardize
    from tinysweep.synthetic import wave_dataset
    tr = wave_dataset(200, seed=7)
    te = wave_dataset(100, seed=8)
    mean, std = channel_stats(tr)
    return standardize(tr, mean, std), standardize(te, mean, std)


@pytest.fixture(scope="session")
def wave_model(wave_split):
    from tinysweep.nn import ModelSpec, TrainConfig, train
    tr, te = wave_split
    spec = ModelSpec.sepconv_classifier(64, 2, 2)
    return train(spec, tr, te, TrainConfig(epochs=20, seed=7))


@pytest.fixture
def rng():
    return np.random.default_rng(0)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
