"""Streaming plug-in estimator of the sandwich covariance.

Accumulates the running means of per-sample Hessians and gradient outer
products, clamps the Hessian-mean spectrum away from zero, and returns
Ã⁻¹ S_n Ã⁻¹.
"""

from __future__ import annotations

import numpy as np

from .estimates import CovarianceEstimate
from .sgd import EstimatorSink


def threshold_eigen(a_n: np.ndarray, lambda_a: float) -> np.ndarray:
    """Clamp the eigenvalues of a symmetric matrix below at lambda_a/2.

    Returns the input unchanged (up to a copy) when it already satisfies
    A_n ⪰ (λ_A/2)·I, so the no-op case is exact.
    """
    a_n = np.asarray(a_n, dtype=float)
    scale = max(1.0, float(np.abs(a_n).max()))
    if np.abs(a_n - a_n.T).max() > 1e-8 * scale:
        raise ValueError("threshold_eigen requires a symmetric matrix")
    if lambda_a <= 0:
        raise ValueError("lambda_a must be positive")
    w, psi = np.linalg.eigh(0.5 * (a_n + a_n.T))
    floor = lambda_a / 2.0
    if w.min() >= floor:
        return a_n.copy()
    w_clamped = np.maximum(w, floor)
    out = (psi * w_clamped) @ psi.T
    return 0.5 * (out + out.T)


class PluginAccumulator(EstimatorSink):
    """Streaming accumulator for A_n (Hessian mean) and S_n (gradient
    outer-product mean); finalize() yields Ã⁻¹ S_n Ã⁻¹."""

    needs_hessian = True

    def __init__(self, d: int, lambda_a: float):
        if lambda_a <= 0:
            raise ValueError("lambda_a must be positive")
        self.d = d
        self.lambda_a = lambda_a
        self.sum_h = np.zeros((d, d))
        self.sum_g = np.zeros((d, d))
        self.count = 0

    def observe(self, i, x, g, h=None):
        if h is None:
            raise ValueError("plug-in accumulator needs the per-sample Hessian")
        if g.shape != (self.d,) or h.shape != (self.d, self.d):
            raise ValueError("dimension mismatch in plug-in observe")
        self.sum_g += np.outer(g, g)
        self.sum_h += h
        self.count += 1

    @property
    def a_n(self) -> np.ndarray:
        """Sample Hessian mean, symmetrized against accumulation drift."""
        m = self.sum_h / self.count
        return 0.5 * (m + m.T)

    @property
    def s_n(self) -> np.ndarray:
        m = self.sum_g / self.count
        return 0.5 * (m + m.T)

    def finalize(self) -> CovarianceEstimate:
        if self.count < 1:
            raise ValueError("no observations accumulated")
        floor = self.lambda_a / 2.0
        w, psi = np.linalg.eigh(self.a_n)
        w = np.maximum(w, floor)
        inv = (psi / w) @ psi.T
        est = inv @ self.s_n @ inv
        est = 0.5 * (est + est.T)
        return CovarianceEstimate(
            matrix=est, estimator="plugin", n=self.count,
            params={"lambda_a": self.lambda_a})
