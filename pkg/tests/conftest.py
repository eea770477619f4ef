import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", max_examples=200, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("dev", max_examples=15, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def biased_split():
    """Standardized train/test split of the default synthetic biased data (n=2000, d=6)."""
    from xai_attacks.tabular import generate_synthetic_biased, preprocess, split

    ds = generate_synthetic_biased(2000, 5, 0.8, seed=0)
    pair = split(ds, 0.2, seed=0)
    train, stats, _ = preprocess(pair.train)
    test, _, _ = preprocess(pair.test, fit_stats=stats)
    return train, test


@pytest.fixture(scope="session")
def logistic_model(biased_split):
    from xai_attacks.models import ModelConfig, train_model

    return train_model(ModelConfig("logistic"), biased_split[0])


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_KEY] = []


@pytest.fixture()
def criterion(request):
    """Record one acceptance line: ``criterion(number, name, passed, detail)``."""
    lines = request.config.stash[ACCEPTANCE_KEY]

    def record(number, name, passed, detail=""):
        lines.append((number, f"{'PASS' if passed else 'FAIL'}  C{number:<2} {name}: {detail}"))
        return passed
    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
