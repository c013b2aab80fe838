import numpy as np
import pytest

from qkforecast.timeseries import RegionSeries


def make_series(y, x=None, start_hour=0, region="r", names=None):
    y = np.asarray(y, dtype=float)
    if x is None:
        x = np.zeros((len(y), 0))
    x = np.asarray(x, dtype=float)
    if names is None:
        names = tuple(f"c{j}" for j in range(x.shape[1]))
    t = (start_hour + np.arange(len(y))) * 60
    return RegionSeries(region, t, y, x, tuple(names))


@pytest.fixture
def series_factory():
    return make_series


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
