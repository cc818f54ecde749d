import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sgdinf.plugin import PluginAccumulator, threshold_eigen


class TestThresholdEigen:
    def test_above_threshold_unchanged_exactly(self):
        a = np.eye(3)
        out = threshold_eigen(a, 1.0)
        assert np.array_equal(out, a)

    def test_clamps_one_eigenvalue(self):
        out = threshold_eigen(np.diag([0.1, 2.0]), 1.0)
        np.testing.assert_allclose(out, np.diag([0.5, 2.0]), atol=1e-12)

    def test_rejects_asymmetric(self):
        with pytest.raises(ValueError):
            threshold_eigen(np.array([[1.0, 0.5], [0.0, 1.0]]), 1.0)

    def test_rejects_nonpositive_lambda(self):
        with pytest.raises(ValueError):
            threshold_eigen(np.eye(2), 0.0)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1), st.floats(0.1, 4.0))
    def test_output_dominates_input_and_respects_floor(self, seed, lam):
        rng = np.random.default_rng(seed)
        m = rng.standard_normal((5, 5))
        a = 0.5 * (m + m.T)
        out = threshold_eigen(a, lam)
        # thresholding only raises the spectrum
        assert np.linalg.eigvalsh(out - a).min() >= -1e-10
        assert np.linalg.eigvalsh(out).min() >= lam / 2 - 1e-10
        # rotation-invariant construction keeps symmetry
        assert np.abs(out - out.T).max() < 1e-12


class TestPluginAccumulator:
    def test_single_scalar_observation(self):
        acc = PluginAccumulator(1, lambda_a=1.0)
        acc.observe(1, np.zeros(1), np.array([2.0]), np.array([[3.0]]))
        assert acc.a_n[0, 0] == 3.0
        assert acc.s_n[0, 0] == 4.0

    def test_two_observations_hand_arithmetic(self):
        acc = PluginAccumulator(2, lambda_a=1.0)
        acc.observe(1, np.zeros(2), np.array([1.0, 0.0]), np.eye(2))
        acc.observe(2, np.zeros(2), np.array([0.0, 1.0]), np.eye(2))
        np.testing.assert_allclose(acc.a_n, np.eye(2))
        np.testing.assert_allclose(acc.s_n, np.eye(2) / 2)

    def test_identity_sandwich(self):
        acc = PluginAccumulator(2, lambda_a=1.0)
        acc.observe(1, np.zeros(2), np.array([1.0, 0.0]), np.eye(2))
        acc.observe(2, np.zeros(2), np.array([0.0, 1.0]), np.eye(2))
        acc.observe(3, np.zeros(2), np.array([1.0, 0.0]), np.eye(2))
        acc.observe(4, np.zeros(2), np.array([0.0, 1.0]), np.eye(2))
        est = acc.finalize()
        np.testing.assert_allclose(est.matrix, np.eye(2) / 2, atol=1e-12)
        assert est.estimator == "plugin"
        assert est.n == 4

    def test_scalar_sandwich_a_twice_identity(self):
        # A_n = 2I, S_n = I  ->  estimate = I/4
        acc = PluginAccumulator(2, lambda_a=1.0)
        acc.observe(1, np.zeros(2), np.array([np.sqrt(2), 0.0]), 2 * np.eye(2))
        acc.observe(2, np.zeros(2), np.array([0.0, np.sqrt(2)]), 2 * np.eye(2))
        est = acc.finalize()
        np.testing.assert_allclose(est.matrix, np.eye(2) / 4, atol=1e-12)

    def test_dimension_mismatch(self):
        acc = PluginAccumulator(3, lambda_a=1.0)
        with pytest.raises(ValueError):
            acc.observe(1, np.zeros(3), np.zeros(2), np.eye(3))
        with pytest.raises(ValueError):
            acc.observe(1, np.zeros(3), np.zeros(3), np.eye(2))

    def test_requires_hessian(self):
        acc = PluginAccumulator(2, lambda_a=1.0)
        with pytest.raises(ValueError):
            acc.observe(1, np.zeros(2), np.zeros(2), None)

    def test_finalize_empty_rejected(self):
        with pytest.raises(ValueError):
            PluginAccumulator(2, lambda_a=1.0).finalize()

    def test_streaming_equals_trace_replay(self, rng):
        # dense recomputation from a stored trace is the oracle
        d, n = 5, 1000
        acc = PluginAccumulator(d, lambda_a=0.5)
        grads, hessians = [], []
        for i in range(1, n + 1):
            g = rng.standard_normal(d)
            m = rng.standard_normal((d, d))
            h = 0.5 * (m + m.T)
            grads.append(g)
            hessians.append(h)
            acc.observe(i, np.zeros(d), g, h)
        est = acc.finalize()

        a_n = np.mean(hessians, axis=0)
        a_n = 0.5 * (a_n + a_n.T)
        s_n = np.mean([np.outer(g, g) for g in grads], axis=0)
        w, psi = np.linalg.eigh(a_n)
        w = np.maximum(w, 0.25)
        inv = (psi / w) @ psi.T
        expected = inv @ s_n @ inv
        assert np.abs(est.matrix - expected).max() < 1e-10

    def test_inverse_operator_norm_bound(self, rng):
        # ||A~^-1|| <= 2/lambda_A even when the raw mean is near-singular
        d = 4
        lam = 0.8
        acc = PluginAccumulator(d, lambda_a=lam)
        for i in range(1, 100):
            a = rng.standard_normal(d)
            h = 1e-6 * np.outer(a, a)      # nearly singular Hessian mean
            acc.observe(i, np.zeros(d), rng.standard_normal(d), h)
        est = acc.finalize()
        s_n = acc.s_n
        bound = (2 / lam) ** 2 * np.linalg.eigvalsh(s_n).max()
        assert np.linalg.eigvalsh(est.matrix).max() <= bound + 1e-10

    def test_output_symmetric_psd(self, rng):
        d = 5
        acc = PluginAccumulator(d, lambda_a=1.0)
        for i in range(1, 300):
            a = rng.standard_normal(d)
            acc.observe(i, np.zeros(d), rng.standard_normal(d), np.outer(a, a))
        est = acc.finalize()
        assert np.abs(est.matrix - est.matrix.T).max() < 1e-14
        assert np.linalg.eigvalsh(est.matrix).min() >= -1e-12


class TestMatrixPerturbationBound:
    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1))
    def test_inverse_perturbation_inequality(self, seed):
        # ||B^-1 - A^-1|| <= 2 ||E|| ||A^-1||^2 whenever ||A^-1 E|| < 1/2
        rng = np.random.default_rng(seed)
        d = int(rng.integers(2, 8))
        m = rng.standard_normal((d, d))
        a = m @ m.T + d * np.eye(d)
        a_inv = np.linalg.inv(a)
        e = rng.standard_normal((d, d))
        e *= 0.4 / (np.linalg.norm(a_inv, 2) * np.linalg.norm(e, 2))
        assert np.linalg.norm(a_inv @ e, 2) < 0.5
        b_inv = np.linalg.inv(a + e)
        lhs = np.linalg.norm(b_inv - a_inv, 2)
        rhs = 2 * np.linalg.norm(e, 2) * np.linalg.norm(a_inv, 2) ** 2
        assert lhs <= rhs + 1e-10
