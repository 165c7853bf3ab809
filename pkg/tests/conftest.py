import numpy as np
import pytest

from trendbands.domain import ObservedSeries


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run Monte Carlo reproductions")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def gappy_series():
    """n=120 noisy linear trend with roughly a quarter of the values missing."""
    rng = np.random.default_rng(7)
    n = 120
    tau = np.arange(1, n + 1) / n
    values = 1.0 + 2.0 * tau + 0.3 * rng.standard_normal(n)
    observed = rng.random(n) > 0.25
    observed[[0, -1]] = True
    return ObservedSeries(values=values, observed=observed)
