"""One-pass inference for sparse linear regression.

Pipeline: a multi-epoch annealed solver for l1-regularized least squares
(radii R_i = R_{i-1}/sqrt(2), per-epoch regularization from
lambda_i^2 = c * R_i * sqrt(log d) / (s * sqrt(T)), feasible sets
||x - y_i||_p <= R_i with p = 2L/(2L-1), L = max(log d, 1)), node-wise
regressions for every coordinate to assemble a precision-matrix estimate
Omega = T C, a one-step debiasing correction, and per-coordinate normal
confidence intervals.

The solver consumes each sample exactly once, follow-the-leader style: the
stream is folded into running second-moment statistics (Gram and
cross-moment), and at each epoch boundary the accumulated l1-regularized
quadratic is approximately minimized over the shrinking ball around the
prox center by proximal-gradient iterations. For quadratic losses this
keeps the one-pass contract while giving each epoch the full statistical
strength of every sample seen so far.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .inference import CiReport, z_quantile


class RadarConfigError(ValueError):
    """Iteration budget cannot accommodate a single epoch."""


class DegenerateResidualError(RuntimeError):
    """A node-wise residual inner product came out non-positive."""


SQRT2 = math.sqrt(2.0)


def lp_geometry(dim: int):
    """(p, q) exponents for the ball geometry in dimension `dim`."""
    log_d = max(math.log(max(dim, 2)), 1.0)
    q = 2.0 * log_d
    p = q / (q - 1.0)
    return p, q


def pball_norm(u: np.ndarray, p: float) -> float:
    m = np.abs(u).max()
    if m == 0.0:
        return 0.0
    w = np.abs(u) / m
    return float(m * (w ** p).sum() ** (1.0 / p))


def pball_project(u: np.ndarray, radius: float, p: float) -> np.ndarray:
    """Radial scaling of an offset onto the p-ball of a given radius."""
    if radius <= 0.0:
        return np.zeros_like(u)
    norm = pball_norm(u, p)
    if norm > radius:
        return u * (radius / norm)
    return u


def soft_threshold(z: np.ndarray, thr) -> np.ndarray:
    return np.sign(z) * np.maximum(np.abs(z) - thr, 0.0)


@dataclass(frozen=True)
class RadarConfig:
    """Solver parameters.

    r1 bounds ||x* - y_1||_1 from above; s_bound is the assumed sparsity;
    total_n the sample budget. c_epoch scales the theoretical epoch length
    c_epoch*s^2*log(d)/R_i^2 and t_min floors it while radii are large;
    c_lambda multiplies the squared-regularization rule. inner_iters caps
    the proximal-gradient sweeps closing each epoch.

    t_min should grow with log(d) when the budget allows (around 16 for
    d in the several hundreds): radii halve every epoch regardless of
    progress, so early epochs must carry enough samples to move the
    center or the annealing locks in their noise.
    """

    r1: float
    s_bound: int
    total_n: int
    c_epoch: float = 1.0
    c_lambda: float = 1.0
    t_min: int = 8
    inner_iters: int = 120
    max_epochs: int = 40

    def __post_init__(self):
        if self.r1 < 0 or self.total_n < 1 or self.t_min < 1:
            raise RadarConfigError("invalid radar configuration")


@dataclass
class Epoch:
    index: int
    length: int
    radius: float


def epoch_plan(config: RadarConfig, dim: int) -> list[Epoch]:
    """Split the budget into epochs with R_{i+1} = R_i/sqrt(2).

    Epoch i gets max(t_min, ceil(c_epoch*s^2*log(d)/R_i^2)) samples; the
    leftover budget is absorbed into the final epoch (also when the epoch
    cap is hit). Raises when the budget cannot cover the first epoch.
    """
    log_d = max(math.log(max(dim, 2)), 1.0)
    s = max(config.s_bound, 1)
    radius = config.r1
    epochs: list[Epoch] = []
    used = 0
    while used < config.total_n:
        if radius > 0:
            t_i = max(config.t_min,
                      math.ceil(config.c_epoch * s * s * log_d / radius ** 2))
        else:
            t_i = config.t_min
        if used + t_i > config.total_n or len(epochs) == config.max_epochs:
            if not epochs:
                raise RadarConfigError(
                    f"budget {config.total_n} cannot cover one epoch of length {t_i}")
            epochs[-1].length += config.total_n - used
            used = config.total_n
            break
        epochs.append(Epoch(index=len(epochs) + 1, length=t_i, radius=radius))
        used += t_i
        radius = radius / SQRT2
    return epochs


def epoch_lambda(config: RadarConfig, radius: float, samples_seen: int,
                 dim: int) -> float:
    """lambda_i from lambda^2 = c * R_i * sqrt(log d) / (s * sqrt(T)),
    with T the accumulated sample count feeding the epoch's solve."""
    log_d = max(math.log(max(dim, 2)), 1.0)
    s = max(config.s_bound, 1)
    lam2 = config.c_lambda * radius * math.sqrt(log_d) / (s * math.sqrt(samples_seen))
    return math.sqrt(max(lam2, 0.0))


def _prox_gradient_ball(gram, rhs, y, radius, lam, p, n_iters, on_step=None,
                        epoch=None, tol=1e-10):
    """Approximately minimize 1/2 x'Gx - r'x + lam|x|_1 over the p-ball
    around y by ISTA sweeps with radial feasibility projection."""
    lip = float(np.linalg.eigvalsh(gram).max())
    if lip <= 0.0:
        return y.copy()
    x = y.copy()
    for _ in range(n_iters):
        z = x - (gram @ x - rhs) / lip
        u = pball_project(soft_threshold(z, lam / lip) - y, radius, p)
        x_new = y + u
        if on_step is not None:
            on_step(epoch, x_new, y)
        delta = float(np.abs(x_new - x).max())
        x = x_new
        if delta < tol * max(1.0, float(np.abs(x).max())):
            break
    return x


def radar_solve(covariates: np.ndarray, targets: np.ndarray,
                config: RadarConfig, y1=None, on_epoch=None,
                on_step=None) -> np.ndarray:
    """Multi-epoch annealed l1 solver over a least-squares sample stream.

    `covariates`/`targets` are the stream in arrival order; exactly
    config.total_n rows are consumed. Returns the final prox center.
    """
    n, d = covariates.shape
    if config.total_n > n:
        raise RadarConfigError("sample stream shorter than the iteration budget")
    p, _ = lp_geometry(d)
    epochs = epoch_plan(config, d)
    y = np.zeros(d) if y1 is None else np.asarray(y1, dtype=float).copy()
    gram_sum = np.zeros((d, d))
    cross_sum = np.zeros(d)
    row = 0
    for ep in epochs:
        block = covariates[row:row + ep.length]
        tgt = targets[row:row + ep.length]
        row += ep.length
        gram_sum += block.T @ block
        cross_sum += block.T @ tgt
        seen = row
        lam = epoch_lambda(config, ep.radius, seen, d)
        y = _prox_gradient_ball(gram_sum / seen, cross_sum / seen, y, ep.radius,
                                lam, p, config.inner_iters, on_step=on_step,
                                epoch=ep)
        if on_epoch is not None:
            on_epoch(ep, y)
    return y


def radar_lasso(D: np.ndarray, b: np.ndarray, config: RadarConfig,
                on_epoch=None, on_step=None) -> np.ndarray:
    """Solve the l1-regularized regression of b on the rows of D."""
    return radar_solve(D, b, config, on_epoch=on_epoch, on_step=on_step)


def nodewise_fit(j: int, D: np.ndarray, config: RadarConfig) -> np.ndarray:
    """Node-wise regression of column j on the others, one stream pass.

    Targets (gamma^j)* = -Omega_jj^{-1} (Omega_{j,-j})^T; returns a length
    d-1 coefficient vector.
    """
    return radar_solve(np.delete(D, j, axis=1), D[:, j], config)


def nodewise_fit_all(D: np.ndarray, config: RadarConfig,
                     r1_rows=None, s_rows=None) -> np.ndarray:
    """All d node-wise fits over the same replayed stream, sharing one
    accumulated Gram matrix.

    Row j of the returned (d, d-1) array is gamma^j. Epoch lengths are
    planned from the largest per-row radius/sparsity so the rows share
    sample blocks; radii and regularization stay per-row.
    """
    n, d = D.shape
    if config.total_n > n:
        raise RadarConfigError("sample stream shorter than the iteration budget")
    if r1_rows is None:
        r1_rows = np.full(d, config.r1, dtype=float)
    else:
        r1_rows = np.asarray(r1_rows, dtype=float)
    if s_rows is None:
        s_rows = np.full(d, max(config.s_bound, 1))
    s_rows = np.maximum(np.asarray(s_rows, dtype=float), 1.0)

    p, _ = lp_geometry(d - 1)
    log_d = max(math.log(max(d - 1, 2)), 1.0)
    plan_cfg = RadarConfig(
        r1=float(r1_rows.max()), s_bound=int(s_rows.max()),
        total_n=config.total_n, c_epoch=config.c_epoch,
        c_lambda=config.c_lambda, t_min=config.t_min,
        inner_iters=config.inner_iters, max_epochs=config.max_epochs)
    epochs = epoch_plan(plan_cfg, d - 1)

    radii = r1_rows.copy()
    y = np.zeros((d, d))          # row j: gamma^j embedded, zero at column j
    gram_sum = np.zeros((d, d))
    row = 0
    for ep in epochs:
        block = D[row:row + ep.length]
        row += ep.length
        gram_sum += block.T @ block
        gram = gram_sum / row
        lam_rows = np.sqrt(config.c_lambda * radii * math.sqrt(log_d)
                           / (s_rows * math.sqrt(row)))
        lip = float(np.linalg.eigvalsh(gram).max())
        x = y.copy()
        for _ in range(config.inner_iters):
            grad = x @ gram - gram     # row j: gradient of its own objective
            z = x - grad / lip
            xc = soft_threshold(z, lam_rows[:, None] / lip)
            np.fill_diagonal(xc, 0.0)
            u = xc - y
            norms = _rows_pnorm(u, p)
            over = norms > radii
            scale = np.ones(d)
            np.divide(radii, norms, out=scale, where=over)
            u *= scale[:, None]
            u[radii <= 0.0] = 0.0
            x_new = y + u
            if np.abs(x_new - x).max() < 1e-10:
                x = x_new
                break
            x = x_new
        y = x
        radii = radii / SQRT2

    gammas = np.empty((d, d - 1))
    for j in range(d):
        gammas[j] = np.delete(y[j], j)
    return gammas


def _rows_pnorm(u: np.ndarray, p: float) -> np.ndarray:
    m = np.abs(u).max(axis=1)
    safe = np.where(m > 0, m, 1.0)
    w = np.abs(u) / safe[:, None]
    return m * (w ** p).sum(axis=1) ** (1.0 / p)


def tau_hat(j: int, D: np.ndarray, gamma_j: np.ndarray) -> float:
    """Estimate of 1/Omega_jj: (1/n)(D_j - D_{-j} gamma_j)^T D_j."""
    n = D.shape[0]
    d_j = D[:, j]
    resid = d_j - np.delete(D, j, axis=1) @ gamma_j
    val = float(resid @ d_j) / n
    if val <= 0:
        raise DegenerateResidualError(f"tau_hat_{j} = {val:.3e} <= 0")
    return val


@dataclass
class PrecisionEstimate:
    """Node-wise precision estimate Omega = T C (rows need not be symmetric)."""

    gamma: np.ndarray    # (d, d-1) node-wise coefficients
    tau: np.ndarray      # (d,) positive scalars
    omega: np.ndarray    # (d, d)

    @property
    def dim(self) -> int:
        return self.omega.shape[0]

    def to_json(self) -> str:
        import json
        return json.dumps({"tau": self.tau.tolist(),
                           "gamma": self.gamma.tolist(),
                           "omega": self.omega.tolist()})

    def save_csv(self, path) -> None:
        np.savetxt(path, self.omega, delimiter=",", fmt="%.17g")


def build_omega(gammas: np.ndarray, taus: np.ndarray) -> PrecisionEstimate:
    """Assemble Omega = T C from node-wise coefficients and tau estimates."""
    gammas = np.asarray(gammas, dtype=float)
    taus = np.asarray(taus, dtype=float)
    d = taus.size
    if np.any(taus <= 0):
        raise DegenerateResidualError("all tau_j must be positive")
    c = np.eye(d)
    for j in range(d):
        mask = np.arange(d) != j
        c[j, mask] = -gammas[j]
    omega = c / taus[:, None]
    return PrecisionEstimate(gamma=gammas, tau=taus, omega=omega)


def debias(x_hat: np.ndarray, omega, D: np.ndarray, b: np.ndarray) -> np.ndarray:
    """One-step correction x_hat + (1/n) Omega D^T (b - D x_hat)."""
    omega_m = omega.omega if isinstance(omega, PrecisionEstimate) else np.asarray(omega)
    n = D.shape[0]
    resid = b - D @ x_hat
    return x_hat + omega_m @ (D.T @ resid) / n


def highdim_ci(x_d: np.ndarray, omega, D: np.ndarray, sigma: float, q: float,
               truth=None) -> CiReport:
    """Intervals x_d_j ± z_{q/2}·sigma·sqrt((Omega A Omega^T)_jj / n)."""
    omega_m = omega.omega if isinstance(omega, PrecisionEstimate) else np.asarray(omega)
    n = D.shape[0]
    a_hat = D.T @ D / n
    quad = omega_m @ a_hat @ omega_m.T
    z = z_quantile(1.0 - q / 2.0)
    half = z * sigma * np.sqrt(np.maximum(np.diag(quad), 0.0) / n)
    return CiReport(q=q, center=np.asarray(x_d, float), half_width=half, truth=truth)


def load_design_csv(path):
    """Read a design/response CSV with columns a_1..a_d,b (header optional)."""
    try:
        raw = np.loadtxt(path, delimiter=",")
    except ValueError:
        raw = np.loadtxt(path, delimiter=",", skiprows=1)
    if raw.ndim == 1:
        raw = raw[None, :]
    return raw[:, :-1], raw[:, -1]


@dataclass
class DebiasedLassoFit:
    x_hat: np.ndarray
    x_debiased: np.ndarray
    precision: PrecisionEstimate
    report: CiReport


def fit_debiased_lasso(D: np.ndarray, b: np.ndarray, main_config: RadarConfig,
                       node_config: RadarConfig, sigma: float, q: float,
                       truth=None, node_r1_rows=None, node_s_rows=None) -> DebiasedLassoFit:
    """Full pipeline on stored data: main fit, d node-wise fits replaying
    the same stream, Omega assembly, debiasing, intervals."""
    x_hat = radar_lasso(D, b, main_config)
    gammas = nodewise_fit_all(D, node_config, r1_rows=node_r1_rows, s_rows=node_s_rows)
    taus = np.array([tau_hat(j, D, gammas[j]) for j in range(D.shape[1])])
    precision = build_omega(gammas, taus)
    x_d = debias(x_hat, precision, D, b)
    report = highdim_ci(x_d, precision, D, sigma, q, truth=truth)
    return DebiasedLassoFit(x_hat=x_hat, x_debiased=x_d,
                            precision=precision, report=report)
