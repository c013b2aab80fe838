import json

import numpy as np
import pytest

from qkforecast.baselines import (
    ArModel,
    GbtConfig,
    LstmConfig,
    fine_tune_lstm,
    fit_ar,
    fit_gbt,
    fit_lstm,
    fit_persistence,
    load_model,
    residuals,
    rolling_forecast,
    save_model,
)
from qkforecast.baselines.ar import fit_ar_array, solve_normal_equations
from qkforecast.baselines.gbt import fit_gbt_features, gbt_feature_names
from qkforecast.baselines.lstm import init_params, loss_and_grads
from qkforecast.errors import InsufficientData, InsufficientHistory, IrregularCadence, SingularSystem
from qkforecast.synthgen import GenConfig, generate

from conftest import make_series


def ar2_series(n=500):
    y = np.empty(n)
    y[0], y[1] = 0.6, 0.55
    for t in range(2, n):
        y[t] = 0.03 + 1.5 * y[t - 1] - 0.56 * y[t - 2]
    return y


def gradcheck(params, Z, target, layers, n_checks=100, seed=0, h=1e-5):
    _, grads = loss_and_grads(params, Z, target, layers)
    rng = np.random.default_rng(seed)
    keys = sorted(params)
    sizes = np.array([params[k].size for k in keys])
    flat = rng.choice(sizes.sum(), size=n_checks, replace=False)
    worst = 0.0
    for f in flat:
        k = int(np.searchsorted(np.cumsum(sizes), f, side="right"))
        key, idx = keys[k], f - (np.cumsum(sizes)[k] - sizes[k])
        p = params[key].reshape(-1)
        old = p[idx]
        p[idx] = old + h
        up, _ = loss_and_grads(params, Z, target, layers)
        p[idx] = old - h
        down, _ = loss_and_grads(params, Z, target, layers)
        p[idx] = old
        num = (up - down) / (2 * h)
        ana = grads[key].reshape(-1)[idx]
        worst = max(worst, abs(num - ana) / max(abs(num), abs(ana), 1e-8))
    return worst


class TestPersistence:
    def test_returns_last_value(self):
        m = fit_persistence(make_series([0.1]))
        assert m.predict_one_step(np.array([0.3, 0.42]), np.zeros((2, 0))) == 0.42

    def test_rolling(self):
        s = make_series([0.4, 0.5, 0.7])
        pred = rolling_forecast(fit_persistence(s), s[1:], s[:1])
        np.testing.assert_array_equal(pred, [0.4, 0.5])

    def test_rolling_equals_previous_truth(self):
        s = make_series([0.1, 0.2, 0.3, 0.6])
        np.testing.assert_array_equal(rolling_forecast(fit_persistence(s), s[1:], s[:1]),
                                      s.y[:-1])

    def test_constant_series_zero_error(self):
        s = make_series(np.full(20, 0.37))
        pred = rolling_forecast(fit_persistence(s), s[5:], s[:5])
        assert np.all(pred == s.y[5:])

    def test_residual_subtraction(self):
        s = make_series([0.1, 0.3])
        r = residuals(fit_persistence(s), s)
        assert len(r) == 1 and abs(r.eps[0] - 0.2) < 1e-15


class TestRolling:
    def test_empty_test(self):
        s = make_series([0.1, 0.2])
        assert rolling_forecast(fit_persistence(s), None, s).size == 0

    def test_insufficient_history(self):
        s = make_series(np.linspace(0.1, 0.9, 40))
        ar = fit_ar(s, 3)
        with pytest.raises(InsufficientHistory):
            rolling_forecast(ar, s[2:], s[:2])

    def test_warm_history_must_be_contiguous(self):
        s = make_series(np.linspace(0.1, 0.9, 40))
        with pytest.raises(IrregularCadence):
            rolling_forecast(fit_persistence(s), s[20:], s[:10])

    def test_perfect_model_zero_residual(self):
        y = ar2_series(80)
        s = make_series(y)
        r = residuals(fit_ar(s, 2), s)
        assert len(r) == len(s) - 2
        assert np.max(np.abs(r.eps)) < 1e-9


class TestAr:
    def test_ar1_recovery(self):
        y = 0.9 ** np.arange(200)
        m = fit_ar_array(y, 1)
        assert abs(m.coeffs[0] - 0.9) < 1e-6
        assert abs(m.intercept) < 1e-6

    def test_ar2_recovery(self):
        m = fit_ar(make_series(ar2_series()), 2)
        np.testing.assert_allclose(m.coeffs, [1.5, -0.56], atol=1e-6)

    def test_insufficient_data(self):
        with pytest.raises(InsufficientData):
            fit_ar(make_series(np.full(24, 0.5)), 24)

    def test_constant_series_uses_jitter(self):
        m = fit_ar(make_series(np.full(60, 0.4)), 3)
        assert abs(m.predict_one_step(np.full(3, 0.4), np.zeros((3, 0))) - 0.4) < 1e-6

    def test_singular_system(self):
        with pytest.raises(SingularSystem):
            solve_normal_equations(np.full((5, 2), np.nan), np.ones(5))
        # an all-zero design is repaired by the jitter, not rejected
        np.testing.assert_array_equal(solve_normal_equations(np.zeros((5, 2)), np.ones(5)), 0.0)

    def test_coeff_count(self):
        m = fit_ar(generate(GenConfig(1, 300, "wind")), 24)
        assert m.coeffs.shape == (24,)


class TestGbt:
    def test_step_function_fit(self):
        rng = np.random.default_rng(0)
        X = rng.uniform(size=(300, 3))
        target = np.where(X[:, 0] > 0.5, 0.8, 0.2)
        m = fit_gbt_features(X, target, GbtConfig(n_trees=200))
        assert np.mean((m.predict_features(X) - target) ** 2) < 1e-4

    def test_zero_trees_is_train_mean(self):
        s = generate(GenConfig(2, 200, "wind"))
        m = fit_gbt(s, GbtConfig(n_trees=0))
        X = np.random.default_rng(0).normal(size=(5, 24 + s.d))
        np.testing.assert_array_equal(m.predict_features(X), np.full(5, s.y[24:].mean()))

    def test_depth_and_determinism(self):
        s = generate(GenConfig(3, 300, "solar"))
        cfg = GbtConfig(n_trees=15, max_depth=3)
        a, b = fit_gbt(s, cfg), fit_gbt(s, cfg)
        assert json.dumps(a.to_dict()) == json.dumps(b.to_dict())
        assert max(t.depth() for t in a.trees) <= 3

    def test_min_leaf(self):
        rng = np.random.default_rng(1)
        X = rng.uniform(size=(60, 2))
        m = fit_gbt_features(X, rng.uniform(size=60), GbtConfig(n_trees=5, min_samples_leaf=5))
        for tree in m.trees:
            leaves = tree.predict(X)
            _, counts = np.unique(leaves, return_counts=True)
            assert counts.min() >= 5

    def test_insufficient_data(self):
        with pytest.raises(InsufficientData):
            fit_gbt(make_series(np.full(24, 0.5)))

    def test_one_step_matches_vectorised(self):
        s = generate(GenConfig(3, 300, "mixed"))
        m = fit_gbt(s[:250], GbtConfig(n_trees=10))
        X = np.hstack([s.y[249:225:-1][None], s.x[249:250]])
        assert m.predict_one_step(s.y[226:250], s.x[226:250]) == pytest.approx(
            float(np.clip(m.predict_features(X)[0], 0, 1)), abs=1e-12)

    def test_feature_names(self):
        names = gbt_feature_names(("a", "b"), 3)
        assert names == ["lag_1", "lag_2", "lag_3", "a", "b"]


class TestLstm:
    def test_gradient_check(self):
        rng = np.random.default_rng(5)
        cfg = LstmConfig(hidden=4, layers=2, lookback=6, seed=3)
        params = init_params(3, cfg)
        Z = rng.normal(size=(7, 6, 3))
        target = rng.uniform(size=7)
        assert gradcheck(params, Z, target, 2) < 1e-4

    def test_init_forget_bias_and_bounds(self):
        p = init_params(3, LstmConfig(hidden=4))
        assert np.all(p["b0"][4:8] == 1.0) and np.all(p["b0"][:4] == 0.0)
        assert np.abs(p["W0"]).max() <= np.sqrt(6 / (3 + 4 + 16))

    def test_constant_target_converges(self):
        s = make_series(np.full(200, 0.6), np.zeros((200, 1)))
        m = fit_lstm(s, LstmConfig(hidden=8, lookback=6, epochs=60, learning_rate=1e-2))
        pred = rolling_forecast(m, s[150:], s[:150])
        assert np.max(np.abs(pred - 0.6)) < 0.05

    def test_determinism_and_fine_tune(self):
        s = generate(GenConfig(4, 200, "wind"))
        cfg = LstmConfig(hidden=4, lookback=8, epochs=2)
        a, b = fit_lstm(s, cfg), fit_lstm(s, cfg)
        for k in a.params:
            np.testing.assert_array_equal(a.params[k], b.params[k])
        tuned = fine_tune_lstm(a, s[:100], epochs=1)
        assert tuned.epochs_trained == 3 and a.epochs_trained == 2
        assert not np.array_equal(tuned.params["W0"], a.params["W0"])

    def test_insufficient_data(self):
        with pytest.raises(InsufficientData):
            fit_lstm(make_series(np.full(25, 0.5)), LstmConfig(lookback=24))


def test_no_lookahead_for_every_model():
    s = generate(GenConfig(8, 260, "mixed"))
    train, test = s[:200], s[200:]
    models = [fit_persistence(train), fit_ar(train, 24), fit_gbt(train, GbtConfig(n_trees=5)),
              fit_lstm(train, LstmConfig(hidden=4, epochs=1))]
    y2 = test.y.copy()
    y2[30:] = 1.0 - y2[30:]
    x2 = test.x.copy()
    x2[30:] += 5.0
    from qkforecast.timeseries import RegionSeries
    mutated = RegionSeries(test.region_id, test.t, y2, x2, test.covariate_names)
    for m in models:
        a = rolling_forecast(m, test, train)
        b = rolling_forecast(m, mutated, train)
        np.testing.assert_array_equal(a[:31], b[:31])


def test_model_io_round_trip(tmp_path):
    s = generate(GenConfig(4, 200, "wind"))
    models = [fit_persistence(s), fit_ar(s, 24), fit_gbt(s, GbtConfig(n_trees=3)),
              fit_lstm(s, LstmConfig(hidden=3, epochs=1))]
    for m in models:
        path = tmp_path / f"{m.kind}.json"
        save_model(m, path)
        doc = json.loads(path.read_text())
        assert doc["format"] == "qkforecast.model" and doc["kind"] == m.kind
        again = load_model(path)
        np.testing.assert_array_equal(rolling_forecast(again, s[150:], s[:150]),
                                      rolling_forecast(m, s[150:], s[:150]))


def test_ar_from_dict():
    m = ArModel(2, [0.5, 0.1], 0.05)
    again = ArModel.from_dict(m.to_dict())
    np.testing.assert_array_equal(again.coeffs, m.coeffs)
