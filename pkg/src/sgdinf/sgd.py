"""Averaged SGD driver with pluggable streaming estimator sinks.

The driver makes one pass over fresh samples, keeps the running
(Polyak-Ruppert) average of the iterates, and feeds every registered sink
one observation per iteration: the new iterate, the stochastic gradient
that produced it, and — only if some sink asks for it — the per-sample
Hessian at the pre-step iterate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import models
from .estimates import CovarianceEstimate


class DivergenceError(RuntimeError):
    """The iterate left the finite range; carries the failing iteration."""

    def __init__(self, iteration: int):
        super().__init__(f"non-finite iterate at iteration {iteration}")
        self.iteration = iteration


class SinkFinalizeError(RuntimeError):
    """One or more sinks failed to finalize; .errors maps sink -> exception."""

    def __init__(self, errors: dict):
        super().__init__("sink finalize failed: " +
                         "; ".join(f"{k}: {v}" for k, v in errors.items()))
        self.errors = errors


@dataclass(frozen=True)
class StepSchedule:
    """Polynomially decaying steps η·i^(−α), α restricted to [1/2, 1)."""

    eta: float
    alpha: float

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        if not 0.5 <= self.alpha < 1.0:
            raise ValueError(f"alpha must lie in [0.5, 1), got {self.alpha}")

    def step(self, i: int) -> float:
        return self.eta * i ** (-self.alpha)


@dataclass
class SgdState:
    """Current iterate, running average and iteration count."""

    n: int
    x: np.ndarray
    x_bar: np.ndarray
    x0: np.ndarray

    @classmethod
    def initial(cls, x0) -> "SgdState":
        x0 = np.asarray(x0, dtype=float).copy()
        return cls(n=0, x=x0.copy(), x_bar=np.zeros_like(x0), x0=x0)


def sgd_step(state: SgdState, schedule: StepSchedule, g: np.ndarray) -> SgdState:
    """One descent step plus the incremental average update (pure)."""
    i = state.n + 1
    x = state.x - schedule.step(i) * np.asarray(g, dtype=float)
    if not np.isfinite(x).all():
        raise DivergenceError(i)
    x_bar = state.x_bar + (x - state.x_bar) / i
    return SgdState(n=i, x=x, x_bar=x_bar, x0=state.x0)


class EstimatorSink:
    """Streaming consumer interface for the SGD loop.

    observe() is called exactly once per iteration with increasing i; the
    arrays passed in are only valid during the call. Set needs_hessian on
    subclasses that require the per-sample Hessian.
    """

    needs_hessian = False

    def observe(self, i: int, x: np.ndarray, g: np.ndarray,
                h: np.ndarray | None = None) -> None:
        raise NotImplementedError

    def finalize(self) -> CovarianceEstimate:
        raise NotImplementedError


class TraceSink(EstimatorSink):
    """Diagnostics sink recording every k-th iterate for offline inspection."""

    def __init__(self, every: int = 1):
        if every < 1:
            raise ValueError("every must be >= 1")
        self.every = every
        self.indices: list[int] = []
        self._rows: list[np.ndarray] = []

    def observe(self, i, x, g, h=None):
        if i % self.every == 0:
            self.indices.append(i)
            self._rows.append(x.copy())

    @property
    def trace(self) -> np.ndarray:
        return np.array(self._rows)

    def finalize(self):
        return None

    def save_csv(self, path) -> None:
        trace = self.trace
        with open(path, "w") as fh:
            fh.write("iteration," + ",".join(f"x{j}" for j in range(trace.shape[1])) + "\n")
            for i, row in zip(self.indices, trace):
                fh.write(f"{i}," + ",".join(f"{v:.17g}" for v in row) + "\n")

    def save_npy(self, path) -> None:
        np.save(path, self.trace)


def run(model: models.ModelSpec, n: int, schedule: StepSchedule,
        x0=None, sinks=(), rng: np.random.Generator | None = None,
        data=None):
    """Run n SGD steps on a model, streaming into the sinks.

    Samples are drawn from `rng` unless an explicit `data = (A, b)` pair of
    arrays is supplied. Returns (final SgdState, list of finalized
    estimates aligned with `sinks`).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    d = model.d
    if x0 is None:
        x0 = np.zeros(d)
    x = np.asarray(x0, dtype=float).copy()
    x0 = x.copy()
    x_bar = np.zeros(d)
    sinks = list(sinks)
    want_h = any(s.needs_hessian for s in sinks)
    linear = model.kind is models.ModelKind.LINEAR
    xs = model.xs

    if data is not None:
        a_all, b_all = data
        a_all = np.asarray(a_all, dtype=float)
        b_all = np.asarray(b_all, dtype=float)
        if a_all.shape != (n, d) or b_all.shape != (n,):
            raise ValueError("data arrays do not match (n, d)")
    else:
        if rng is None:
            raise ValueError("either rng or data must be provided")
        a_all, b_all = models.sample_dataset(model, n, rng)

    eta, alpha = schedule.eta, schedule.alpha
    # overflow inside the loop is the divergence we detect and raise on
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(1, n + 1):
            a = a_all[i - 1]
            b = b_all[i - 1]
            if linear:
                g = (a @ x - b) * a
                h = np.outer(a, a) if want_h else None
            else:
                t = a @ x
                g = (-models.sigmoid(-b * t) * b) * a
                if want_h:
                    w = models.sigmoid(t) * models.sigmoid(-t)
                    h = w * np.outer(a, a)
                else:
                    h = None
            x -= (eta * i ** (-alpha)) * g
            if not math.isfinite(float(x @ x)):
                raise DivergenceError(i)
            x_bar += (x - x_bar) / i
            for s in sinks:
                s.observe(i, x, g, h)

    estimates = []
    errors = {}
    for s in sinks:
        try:
            estimates.append(s.finalize())
        except Exception as exc:  # collected per sink, reported together
            errors[type(s).__name__] = exc
            estimates.append(None)
    state = SgdState(n=n, x=x.copy(), x_bar=x_bar.copy(), x0=x0)
    if errors:
        raise SinkFinalizeError(errors)
    return state, estimates
