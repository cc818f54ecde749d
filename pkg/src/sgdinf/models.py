"""Loss models for streaming inference: linear and logistic regression.

A model bundles a covariate design (identity / Toeplitz / equi-correlated
Gaussian), the true parameter vector, per-sample gradient and Hessian
kernels, and the closed-form or Monte-Carlo oracle covariance used to
benchmark the streaming estimators.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .inference import z_quantile


class InvalidDesignError(ValueError):
    """Design parameters outside the positive-definite range."""


class OracleError(RuntimeError):
    """Oracle covariance could not be formed (numerically singular Hessian)."""


class DesignKind(str, enum.Enum):
    IDENTITY = "identity"
    TOEPLITZ = "toeplitz"
    EQUICORR = "equicorr"


class ModelKind(str, enum.Enum):
    LINEAR = "linear"
    LOGISTIC = "logistic"


@dataclass(frozen=True)
class DesignSpec:
    """Covariance family for the Gaussian covariates a ~ N(0, Σ)."""

    kind: DesignKind
    d: int
    rho: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", DesignKind(self.kind))
        if self.d < 1:
            raise InvalidDesignError(f"dimension must be positive, got {self.d}")
        if self.kind is not DesignKind.IDENTITY and not 0.0 <= self.rho < 1.0:
            raise InvalidDesignError(
                f"rho must lie in [0, 1) for {self.kind.value}, got {self.rho}")

    def to_config(self) -> dict:
        return {"design": self.kind.value, "d": self.d, "rho": self.rho}

    @classmethod
    def from_config(cls, cfg: dict) -> "DesignSpec":
        return cls(kind=DesignKind(cfg["design"]), d=int(cfg["d"]),
                   rho=float(cfg.get("rho", 0.0)))


def make_covariance(spec: DesignSpec) -> np.ndarray:
    """The exact design covariance matrix Σ for a spec."""
    d = spec.d
    if spec.kind is DesignKind.IDENTITY:
        return np.eye(d)
    if spec.kind is DesignKind.TOEPLITZ:
        idx = np.arange(d)
        return spec.rho ** np.abs(idx[:, None] - idx[None, :])
    # equi-correlated: ones on the diagonal, rho elsewhere
    return np.full((d, d), spec.rho) + (1.0 - spec.rho) * np.eye(d)


_CHOL_CACHE: dict[DesignSpec, np.ndarray] = {}


def _design_cholesky(spec: DesignSpec) -> np.ndarray:
    """Lower Cholesky factor of Σ, cached per spec (sampling is O(d²) after)."""
    factor = _CHOL_CACHE.get(spec)
    if factor is None:
        factor = np.linalg.cholesky(make_covariance(spec))
        _CHOL_CACHE[spec] = factor
    return factor


def default_x_star(d: int) -> np.ndarray:
    """Coordinates linearly spaced over [0, 1] inclusive."""
    if d == 1:
        return np.array([1.0])
    return np.linspace(0.0, 1.0, d)


@dataclass(frozen=True)
class ModelSpec:
    """A fully specified estimation problem.

    kappa is the covariance-expansion order: 2 for the quadratic loss,
    1 for logistic. sigma is the noise s.d. and only applies to the
    linear model.
    """

    kind: ModelKind
    design: DesignSpec
    x_star: tuple
    sigma: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", ModelKind(self.kind))
        object.__setattr__(self, "x_star", tuple(float(v) for v in self.x_star))
        if len(self.x_star) != self.design.d:
            raise ValueError("x_star length does not match design dimension")
        if self.kind is ModelKind.LINEAR:
            # sigma = 0 is allowed as the degenerate noiseless case
            if self.sigma is None or self.sigma < 0:
                raise ValueError("linear model requires a nonnegative sigma")
        elif self.sigma is not None:
            raise ValueError("sigma applies to the linear model only")

    @property
    def d(self) -> int:
        return self.design.d

    @property
    def kappa(self) -> int:
        return 2 if self.kind is ModelKind.LINEAR else 1

    @property
    def xs(self) -> np.ndarray:
        return np.asarray(self.x_star)

    def to_config(self) -> dict:
        cfg = {"kind": self.kind.value, **self.design.to_config(),
               "x_star": list(self.x_star)}
        if self.sigma is not None:
            cfg["sigma"] = self.sigma
        return cfg

    @classmethod
    def from_config(cls, cfg: dict) -> "ModelSpec":
        design = DesignSpec.from_config(cfg)
        x_star = cfg.get("x_star")
        if x_star is None:
            x_star = default_x_star(design.d)
        sigma = cfg.get("sigma")
        kind = ModelKind(cfg["kind"])
        if kind is ModelKind.LINEAR and sigma is None:
            sigma = 1.0
        return cls(kind=kind, design=design, x_star=tuple(x_star),
                   sigma=float(sigma) if sigma is not None else None)


@dataclass
class DataPoint:
    a: np.ndarray
    b: float


def sigmoid(t):
    """Numerically stable 1/(1+exp(-t)); no overflow for any float input."""
    t = np.asarray(t, dtype=float)
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    et = np.exp(t[~pos])
    out[~pos] = et / (1.0 + et)
    if out.ndim == 0:
        return float(out)
    return out


def sample_point(model: ModelSpec, rng: np.random.Generator) -> DataPoint:
    """Draw one (a, b) pair from the model distribution."""
    factor = _design_cholesky(model.design)
    z = rng.standard_normal(model.d)
    a = z if model.design.kind is DesignKind.IDENTITY else factor @ z
    if model.kind is ModelKind.LINEAR:
        b = float(a @ model.xs + model.sigma * rng.standard_normal())
    else:
        p_plus = sigmoid(a @ model.xs)
        b = 1.0 if rng.random() < p_plus else -1.0
    return DataPoint(a=a, b=b)


def sample_dataset(model: ModelSpec, n: int, rng: np.random.Generator,
                   covariates: np.ndarray | None = None):
    """Vectorized draw of n points; returns (A, b) with A of shape (n, d).

    When `covariates` is given only the responses are drawn (fixed-design
    replications).
    """
    if covariates is None:
        z = rng.standard_normal((n, model.d))
        if model.design.kind is DesignKind.IDENTITY:
            a = z
        else:
            a = z @ _design_cholesky(model.design).T
    else:
        a = covariates
        if a.shape != (n, model.d):
            raise ValueError("covariate array has wrong shape")
    mean = a @ model.xs
    if model.kind is ModelKind.LINEAR:
        b = mean + model.sigma * rng.standard_normal(n)
    else:
        b = np.where(rng.random(n) < sigmoid(mean), 1.0, -1.0)
    return a, b


# Per-sample loss, gradient and Hessian. The array-argument kernels are the
# hot path used by the SGD loop; the DataPoint wrappers are the public
# single-point surface.

def loss_ab(model: ModelSpec, x: np.ndarray, a: np.ndarray, b: float) -> float:
    if model.kind is ModelKind.LINEAR:
        r = a @ x - b
        return 0.5 * r * r
    return float(np.logaddexp(0.0, -b * (a @ x)))


def grad_ab(model: ModelSpec, x: np.ndarray, a: np.ndarray, b: float) -> np.ndarray:
    if model.kind is ModelKind.LINEAR:
        return (a @ x - b) * a
    return (-sigmoid(-b * (a @ x)) * b) * a


def hessian_ab(model: ModelSpec, x: np.ndarray, a: np.ndarray) -> np.ndarray:
    if model.kind is ModelKind.LINEAR:
        return np.outer(a, a)
    t = a @ x
    w = sigmoid(t) * sigmoid(-t)
    return w * np.outer(a, a)


def loss(model: ModelSpec, x: np.ndarray, p: DataPoint) -> float:
    return loss_ab(model, np.asarray(x, float), p.a, p.b)


def grad(model: ModelSpec, x: np.ndarray, p: DataPoint) -> np.ndarray:
    return grad_ab(model, np.asarray(x, float), p.a, p.b)


def hessian(model: ModelSpec, x: np.ndarray, p: DataPoint) -> np.ndarray:
    return hessian_ab(model, np.asarray(x, float), p.a)


class OracleMethod(str, enum.Enum):
    CLOSED_FORM = "closed_form"
    MONTE_CARLO_HESSIAN = "monte_carlo_hessian"


@dataclass
class OracleCovariance:
    """The true asymptotic covariance A⁻¹SA⁻¹ of √n(x̄_n − x*)."""

    matrix: np.ndarray
    method: OracleMethod

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        scale = max(1.0, float(np.abs(m).max()))
        if np.abs(m - m.T).max() > 1e-12 * scale:
            raise OracleError("oracle covariance is not symmetric")
        if np.any(np.diag(m) <= 0):
            raise OracleError("oracle covariance has non-positive diagonal")
        self.matrix = m


def population_hessian(model: ModelSpec, mc_samples: int = 1_000_000,
                       rng: np.random.Generator | None = None) -> np.ndarray:
    """A = ∇²F(x*): exact Σ for the linear model, Monte-Carlo mean of the
    per-sample Hessian at x* for logistic."""
    if model.kind is ModelKind.LINEAR:
        return make_covariance(model.design)
    if rng is None:
        rng = np.random.default_rng(np.random.SeedSequence(987654321))
    d = model.d
    factor = _design_cholesky(model.design)
    acc = np.zeros((d, d))
    remaining = mc_samples
    chunk = min(mc_samples, max(1, 8_000_000 // max(d, 1)))
    while remaining > 0:
        m = min(chunk, remaining)
        a = rng.standard_normal((m, d))
        if model.design.kind is not DesignKind.IDENTITY:
            a = a @ factor.T
        t = a @ model.xs
        w = sigmoid(t) * sigmoid(-t)
        acc += (a * w[:, None]).T @ a
        remaining -= m
    return acc / mc_samples


def oracle_covariance(model: ModelSpec, mc_samples: int = 1_000_000,
                      rng: np.random.Generator | None = None) -> OracleCovariance:
    """True A⁻¹SA⁻¹.

    Linear: σ²Σ⁻¹ in closed form (A = Σ, S = σ²Σ). Logistic: the model is
    well-specified so S = A and the sandwich collapses to Â⁻¹ with Â a
    Monte-Carlo Hessian average at x*.
    """
    if model.kind is ModelKind.LINEAR:
        sig = make_covariance(model.design)
        matrix = model.sigma ** 2 * np.linalg.inv(sig)
        matrix = 0.5 * (matrix + matrix.T)
        return OracleCovariance(matrix=matrix, method=OracleMethod.CLOSED_FORM)
    a_hat = population_hessian(model, mc_samples=mc_samples, rng=rng)
    if np.linalg.cond(a_hat) > 1e12:
        raise OracleError("Monte-Carlo Hessian is numerically singular")
    matrix = np.linalg.inv(a_hat)
    matrix = 0.5 * (matrix + matrix.T)
    return OracleCovariance(matrix=matrix, method=OracleMethod.MONTE_CARLO_HESSIAN)


def oracle_ci_length(oracle: OracleCovariance, j: int, n: int, q: float) -> float:
    """Length of the ideal interval for coordinate j: 2·z_{q/2}·sqrt(V_jj/n)."""
    if not 0.0 < q < 1.0:
        raise ValueError("q must be in (0, 1)")
    z = z_quantile(1.0 - q / 2.0)
    return 2.0 * z * math.sqrt(oracle.matrix[j, j] / n)
