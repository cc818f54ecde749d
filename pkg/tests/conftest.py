"""Shared test helpers: an independent reference SGD used to cross-check
the streaming implementation, and small fixtures."""

import numpy as np
import pytest

from sgdinf import models


def reference_sgd_trace(model, a_all, b_all, eta, alpha, x0=None):
    """Straight-line re-implementation of the recursion, kept independent of
    the package's run loop. Returns the full iterate trace (n, d)."""
    n, d = a_all.shape
    x = np.zeros(d) if x0 is None else np.array(x0, dtype=float)
    xs = model.xs
    rows = np.empty((n, d))
    for i in range(1, n + 1):
        a = a_all[i - 1]
        b = b_all[i - 1]
        if model.kind is models.ModelKind.LINEAR:
            g = (a @ x - b) * a
        else:
            t = -b * (a @ x)
            phi = 1.0 / (1.0 + np.exp(-t)) if t < 0 else 1.0 - 1.0 / (1.0 + np.exp(t))
            g = -phi * b * a
        x = x - eta * i ** (-alpha) * g
        rows[i - 1] = x
    return rows


def reference_sgd_many(model, n, eta, alpha, n_reps, seed, checkpoints=()):
    """Vectorized-over-replications reference SGD (identity-design models).

    Returns dict checkpoint -> array (n_reps, d) of iterates x_n, plus the
    final averages. Used for Monte-Carlo property oracles where looping the
    streaming implementation would be slow.
    """
    d = model.d
    rng = np.random.default_rng(seed)
    x = np.zeros((n_reps, d))
    xbar = np.zeros((n_reps, d))
    xs = model.xs
    out = {}
    checkpoints = set(checkpoints)
    factor = np.linalg.cholesky(models.make_covariance(model.design))
    for i in range(1, n + 1):
        a = rng.standard_normal((n_reps, d))
        if model.design.kind is not models.DesignKind.IDENTITY:
            a = a @ factor.T
        mean = a @ xs
        if model.kind is models.ModelKind.LINEAR:
            b = mean + model.sigma * rng.standard_normal(n_reps)
            r = np.einsum("ij,ij->i", a, x) - b
        else:
            b = np.where(rng.random(n_reps) < 1 / (1 + np.exp(-mean)), 1.0, -1.0)
            t = np.clip(-b * np.einsum("ij,ij->i", a, x), -700, 700)
            r = -b / (1.0 + np.exp(-t))
        x = x - (eta * i ** (-alpha)) * r[:, None] * a
        xbar += (x - xbar) / i
        if i in checkpoints:
            out[i] = x.copy()
    return out, xbar


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
