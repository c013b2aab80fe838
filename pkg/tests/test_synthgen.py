import numpy as np
import pytest

from qkforecast.errors import ConfigError
from qkforecast.synthgen import (
    BASE_COVARIATES,
    REGIME_COVARIATE,
    GenConfig,
    diurnal_envelope,
    gen_mixed,
    gen_solar,
    gen_wind,
    generate,
    power_curve,
)
from qkforecast.timeseries import harmonize_hourly, series_to_csv


def acf(v, lag):
    v = v - v.mean()
    return float(np.dot(v[:-lag], v[lag:]) / np.dot(v, v))


def hod(series):
    return series.hours % 24


def test_config_validation():
    with pytest.raises(ConfigError):
        GenConfig(1, 47, "solar")
    with pytest.raises(ConfigError):
        GenConfig(1, 100, "tidal")
    with pytest.raises(ConfigError):
        gen_solar(GenConfig(1, 100, "wind"))


@pytest.mark.parametrize("kind", ["solar", "wind", "mixed"])
def test_deterministic_and_valid(kind):
    a = generate(GenConfig(5, 400, kind))
    b = generate(GenConfig(5, 400, kind))
    assert series_to_csv(a) == series_to_csv(b)
    assert np.all((a.y >= 0) & (a.y <= 1))
    assert harmonize_hourly(a) is a
    assert a.covariate_names[:6] == BASE_COVARIATES
    assert series_to_csv(generate(GenConfig(6, 400, kind))) != series_to_csv(a)


def test_solar_night_is_zero():
    s = gen_solar(GenConfig(3, 500, "solar"))
    assert np.all(s.y[np.isin(hod(s), [0, 1, 2, 3])] == 0)
    assert np.all(diurnal_envelope(np.array([0.0, 1.0, 2.0, 3.0])) == 0)


def test_solar_seed7_daytime_maximum():
    s = gen_solar(GenConfig(7, 336, "solar"))
    assert 0.5 <= s.y.max() <= 1.0


def test_solar_cloud_bounds():
    c = gen_solar(GenConfig(2, 2000, "solar")).covariate("cloudiness")
    assert c.min() >= 0.3 and c.max() <= 1.0


def test_power_curve():
    w = np.array([0.0, 2.9, 3.0, 7.5, 12.0, 20.0, 25.0, 25.1])
    y = power_curve(w)
    np.testing.assert_allclose(y, [0, 0, 0, 0.125, 1, 1, 1, 0])
    assert np.all(power_curve(np.linspace(0, 2.99, 50)) == 0)


def test_wind_persistence_exceeds_cloud_noise():
    w = gen_wind(GenConfig(7, 3000, "wind"))
    cloud = gen_solar(GenConfig(7, 3000, "solar")).covariate("cloudiness")
    assert acf(w.y, 24) > acf(np.diff(cloud), 24)
    np.testing.assert_array_equal(w.y, power_curve(w.covariate("wind_speed")))


def test_mixed_regimes():
    s = gen_mixed(GenConfig(11, 4000, "mixed"))
    assert s.covariate_names[-1] == REGIME_COVARIATE
    reg = s.covariate(REGIME_COVARIATE)
    assert set(np.unique(reg)) == {0.0, 1.0}
    inc = np.diff(s.covariate("wind_speed"))
    assert inc[reg[1:] == 1].var() > inc[reg[1:] == 0].var()
    w = s.covariate("wind_speed")
    assert w[reg == 1].var() > w[reg == 0].var()


def test_mixed_zero_when_both_constituents_zero():
    s = gen_mixed(GenConfig(4, 3000, "mixed"))
    quiet = np.isin(hod(s), [0, 1, 2, 3]) & (power_curve(s.covariate("wind_speed")) == 0)
    assert quiet.any()
    assert np.all(s.y[quiet] == 0)
