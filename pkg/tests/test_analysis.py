import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from qkforecast.analysis import (
    AttributionVector,
    MetricsRecord,
    center_gram,
    crps_surrogate,
    decision_regret,
    evaluate,
    fisher_ratio,
    kernel_pca,
    measure_latency,
    nrmse,
    permutation_attribution,
    permutation_indices,
)
from qkforecast.baselines import GbtConfig, fit_gbt, fit_persistence
from qkforecast.errors import (
    DegenerateSigma,
    DegenerateVariance,
    EmptyInput,
    InvalidR,
    LengthMismatch,
    MissingClass,
    NonSymmetric,
)
from qkforecast.synthgen import GenConfig, generate
from qkforecast.vqkernel import RbfKernel, SurrogateKernel, gram_matrix

unit = arrays(float, st.integers(1, 30), elements=st.floats(0, 1))


class TestMetrics:
    @settings(max_examples=40, deadline=None)
    @given(unit)
    def test_perfect_forecast(self, y):
        assert nrmse(y, y) == crps_surrogate(y, y) == decision_regret(y, y) == 0.0

    def test_nrmse_value(self):
        assert nrmse([1, 0], [0, 0]) == pytest.approx(np.sqrt(0.5), abs=1e-12)

    def test_mae(self):
        assert crps_surrogate([0.5, 0.5], [0.4, 0.8]) == pytest.approx(0.2, abs=1e-15)

    def test_regret_asymmetry(self):
        assert decision_regret([0.5], [0.3]) == pytest.approx(0.4, abs=1e-15)
        assert decision_regret([0.3], [0.5]) == pytest.approx(0.2, abs=1e-15)

    @settings(max_examples=40, deadline=None)
    @given(unit, st.floats(0.1, 5), st.integers(0, 2**31))
    def test_regret_symmetric_is_scaled_mae(self, y, a, seed):
        p = np.random.default_rng(seed).uniform(size=y.size)
        assert abs(decision_regret(y, p, a, a) - a * crps_surrogate(y, p)) < 1e-12

    @settings(max_examples=40, deadline=None)
    @given(unit, st.integers(0, 2**31))
    def test_permutation_and_shift_invariance(self, y, seed):
        rng = np.random.default_rng(seed)
        p = rng.uniform(size=y.size)
        order = rng.permutation(y.size)
        assert nrmse(y[order], p[order]) == pytest.approx(nrmse(y, p), abs=1e-12)
        assert crps_surrogate(y + 3, p + 3) == pytest.approx(crps_surrogate(y, p), abs=1e-12)
        assert min(nrmse(y, p), crps_surrogate(y, p), decision_regret(y, p)) >= 0

    def test_errors(self):
        with pytest.raises(LengthMismatch):
            nrmse([0.1, 0.2], [0.1])
        with pytest.raises(EmptyInput):
            nrmse([], [])
        with pytest.raises(LengthMismatch):
            decision_regret([0.1], [0.1, 0.2])

    def test_record(self):
        r = evaluate([0.5, 0.5], [0.3, 0.7], 0.01)
        assert MetricsRecord.from_dict(r.to_dict()) == r
        assert "latency_ms" not in r.to_dict(include_latency=False)
        with pytest.raises(ValueError):
            MetricsRecord(-1.0, 0.0, 0.0)


def test_latency_positive_and_ordered():
    s = generate(GenConfig(7, 400, "mixed"))
    train, test = s[:300], s[300:]
    pers = fit_persistence(train)
    gbt = fit_gbt(train, GbtConfig(n_trees=200))
    lp = measure_latency(pers, test, train)
    lg = measure_latency(gbt, test, train)
    assert 0 < lp < lg
    again = measure_latency(gbt, test, train)
    assert 0.1 < again / lg < 10


class TestKernelPca:
    def test_identity_2x2(self):
        np.testing.assert_allclose(center_gram(np.eye(2)), [[0.5, -0.5], [-0.5, 0.5]])
        emb = kernel_pca(np.eye(2), 2)
        np.testing.assert_allclose(emb.eigenvalues, [1.0, 0.0], atol=1e-12)
        lead = emb.projections[:, 0]
        np.testing.assert_allclose(np.abs(lead), [np.sqrt(0.5)] * 2, atol=1e-12)
        assert lead[0] * lead[1] < 0

    def test_centered_rows_sum_to_zero(self, rng):
        K = gram_matrix(rng.normal(size=(20, 3)), RbfKernel(0.5)).values
        assert np.max(np.abs(center_gram(K).sum(axis=1))) < 1e-10

    def test_descending_and_projection_scale(self, rng):
        K = gram_matrix(rng.normal(size=(25, 3)), RbfKernel(0.3)).values
        emb = kernel_pca(K, 5)
        assert np.all(np.diff(emb.eigenvalues) <= 0)
        np.testing.assert_allclose((emb.projections ** 2).sum(axis=0), emb.eigenvalues, atol=1e-10)

    def test_relabeling_invariance(self, rng):
        K = gram_matrix(rng.normal(size=(15, 2)), RbfKernel(1.0)).values
        perm = rng.permutation(15)
        inv = np.argsort(perm)
        a = kernel_pca(K, 2).projections
        b = kernel_pca(K[np.ix_(perm, perm)], 2).projections[inv]
        for c in range(2):
            assert min(np.max(np.abs(a[:, c] - b[:, c])), np.max(np.abs(a[:, c] + b[:, c]))) < 1e-8

    def test_non_symmetric(self):
        with pytest.raises(NonSymmetric):
            kernel_pca(np.array([[1.0, 0.2], [0.0, 1.0]]))

    def test_indefinite_warning(self, rng):
        X = rng.normal(size=(30, 4))
        emb = kernel_pca(gram_matrix(X, SurrogateKernel()), 2)
        assert emb.warnings and np.all(emb.eigenvalues >= 0)


class TestFisher:
    def test_hand_value(self):
        assert abs(fisher_ratio([0, 2, 4, 6], [0, 0, 1, 1]) - 8.0) < 1e-12

    @settings(max_examples=40, deadline=None)
    @given(st.floats(-50, 50).filter(lambda c: abs(c) > 1e-3), st.floats(-100, 100),
           st.integers(0, 2**31))
    def test_affine_invariance(self, c, s, seed):
        rng = np.random.default_rng(seed)
        v = rng.normal(size=20)
        lab = np.r_[np.zeros(10), np.ones(10)]
        assert fisher_ratio(c * v + s, lab) == pytest.approx(fisher_ratio(v, lab), rel=1e-9)

    def test_equal_means(self):
        assert fisher_ratio([0, 2, -1, 3], [0, 0, 1, 1]) == 0.0

    def test_errors(self):
        with pytest.raises(MissingClass):
            fisher_ratio([1, 2, 3], [0, 0, 0])
        with pytest.raises(DegenerateVariance):
            fisher_ratio([1, 1, 2, 2], [0, 0, 1, 1])


class TestAttribution:
    def test_ignored_feature(self, rng):
        X = rng.normal(size=(40, 3))
        vec = permutation_attribution(lambda Z: 2 * Z[:, 0], X, rng.normal(size=40), R=4)
        assert vec.importances[1] < 1e-12 and vec.importances[2] < 1e-12
        assert vec.importances[0] > 0

    def test_identity_brute_force(self, rng):
        X = rng.normal(size=(5, 2))
        y = rng.normal(size=5)
        R, seed = 3, 17
        vec = permutation_attribution(lambda Z: Z[:, 1].copy(), X, y, R=R, seed=seed)
        sigma = np.sqrt(np.mean((y - y.mean()) ** 2))
        total = 0.0
        for r in range(R):
            perm = permutation_indices(seed, 1, r, 5)
            total += sum(abs(X[perm[i], 1] - X[i, 1]) for i in range(5)) / 5
        assert abs(vec.importances[1] - total / R / sigma) < 1e-12

    def test_informative_beats_constant(self, rng):
        X = np.column_stack([rng.normal(size=50), np.full(50, 3.0)])
        vec = permutation_attribution(lambda Z: Z[:, 0] + Z[:, 1], X, rng.normal(size=50))
        assert vec.importances[0] > vec.importances[1] and vec.importances[1] < 1e-9

    def test_deterministic_and_threads(self, rng):
        X = rng.normal(size=(30, 4))
        y = rng.normal(size=30)
        f = lambda Z: np.tanh(Z @ np.arange(1.0, 5.0))
        a = permutation_attribution(f, X, y, R=5, seed=3)
        b = permutation_attribution(f, X, y, R=5, seed=3, threads=4)
        assert a.importances.tobytes() == b.importances.tobytes()
        again = AttributionVector.from_dict(a.to_dict())
        assert np.array_equal(again.importances, a.importances)

    def test_errors(self, rng):
        X = rng.normal(size=(5, 2))
        with pytest.raises(DegenerateSigma):
            permutation_attribution(lambda Z: Z[:, 0], X, np.ones(5))
        for bad in (0, 1.5):
            with pytest.raises(InvalidR):
                permutation_attribution(lambda Z: Z[:, 0], X, rng.normal(size=5), R=bad)

    def test_permutations_are_permutations(self):
        for j, r in itertools.product(range(3), range(3)):
            assert sorted(permutation_indices(1, j, r, 7)) == list(range(7))
