"""Empirical risk minimization: least squares, quantile (pinball) regression,
and the interval set-function learner built on the median fit.

Quantile fitting uses projected subgradient descent with Polyak averaging and
multiple restarts, followed by exact coordinate-descent polish steps (pinball
loss restricted to one coordinate is piecewise linear, so the minimizing step
has a closed form via a weighted-quantile search).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .core import Dataset, IntervalFunction, LinearModel


@dataclass(frozen=True)
class FitConfig:
    max_iters: int = 1500
    step_rule: str = "decay"  # "fixed" or "decay" (init_step / sqrt(t))
    init_step: float = 1.0
    tolerance: float = 1e-6
    seed: int = 0
    restarts: int = 2
    polish_sweeps: int = 8

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.init_step <= 0:
            raise ValueError("init_step must be positive")
        if self.step_rule not in ("fixed", "decay"):
            raise ValueError(f"unknown step_rule {self.step_rule!r}")


@dataclass(frozen=True)
class Loss:
    """Per-example loss selector used by the good-model machinery."""

    kind: str  # "squared", "pinball" or "miss"
    tau: float | None = None
    half_width: float | None = None

    def __post_init__(self):
        if self.kind not in ("squared", "pinball", "miss"):
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if self.kind == "pinball":
            if self.tau is None or not 0.0 < self.tau < 1.0:
                raise ValueError("pinball loss needs tau in (0, 1)")
        if self.kind == "miss" and (self.half_width is None or self.half_width < 0):
            raise ValueError("miss loss needs a nonnegative half_width")

    @staticmethod
    def squared() -> "Loss":
        return Loss("squared")

    @staticmethod
    def pinball(tau: float) -> "Loss":
        return Loss("pinball", tau=tau)

    @staticmethod
    def miss(half_width: float) -> "Loss":
        return Loss("miss", half_width=half_width)

    def per_example(self, predictions: np.ndarray, labels: np.ndarray) -> np.ndarray:
        residuals = np.asarray(labels, dtype=float) - np.asarray(predictions, dtype=float)
        if self.kind == "squared":
            return residuals**2
        if self.kind == "pinball":
            return pinball_loss(residuals, self.tau)
        return (np.abs(residuals) > self.half_width).astype(float)


def pinball_loss(residual, tau: float):
    """Asymmetric absolute loss: tau*r for r >= 0 and (tau-1)*r otherwise."""
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must lie in (0, 1), got {tau}")
    residual = np.asarray(residual, dtype=float)
    out = np.where(residual >= 0.0, tau * residual, (tau - 1.0) * residual)
    if out.ndim == 0:
        return float(out)
    return out


def empirical_loss(model, data: Dataset, loss: Loss) -> float:
    """Arithmetic mean of per-example losses of a linear model on a sample."""
    predictions = model.predict(data.features)
    return float(loss.per_example(predictions, data.labels).mean())


def _project_ball(beta: np.ndarray, norm_bound: float) -> np.ndarray:
    norm = np.linalg.norm(beta)
    if norm > norm_bound:
        return beta * (norm_bound / norm)
    return beta


def fit_least_squares(data: Dataset, norm_bound: float, cfg: FitConfig = FitConfig()) -> LinearModel:
    """Norm-constrained least squares.

    The unconstrained minimizer comes from the normal equations; if it violates
    the l2 budget the Lagrange multiplier of the ball constraint is found by
    bisection on the ridge path (the constrained solution norm is monotone in
    the ridge weight).
    """
    X, y = data.features, data.labels
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    if np.linalg.norm(beta) <= norm_bound:
        return LinearModel(beta, norm_bound)

    XtX = X.T @ X
    Xty = X.T @ y
    eye = np.eye(data.d)

    def ridge_norm(lam: float) -> float:
        return float(np.linalg.norm(np.linalg.solve(XtX + lam * eye, Xty)))

    lo, hi = 0.0, 1.0
    while ridge_norm(hi) > norm_bound:
        hi *= 2.0
        if hi > 1e18:
            raise RuntimeError("ridge bisection failed to bracket the norm bound")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if ridge_norm(mid) > norm_bound:
            lo = mid
        else:
            hi = mid
    beta = np.linalg.solve(XtX + hi * eye, Xty)
    return LinearModel(_project_ball(beta, norm_bound), norm_bound)


def _pinball_objective(X: np.ndarray, y: np.ndarray, beta: np.ndarray, tau: float) -> float:
    return float(pinball_loss(y - X @ beta, tau).mean())


def _coordinate_polish(
    X: np.ndarray, y: np.ndarray, beta: np.ndarray, tau: float, sweeps: int
) -> np.ndarray:
    """Cyclic exact minimization of the pinball loss one coordinate at a time.

    Along coordinate j the loss is piecewise linear in the step with
    breakpoints r_i / X_ij; the minimizer is the breakpoint where the
    accumulated subgradient changes sign.
    """
    beta = beta.copy()
    n, d = X.shape
    residual = y - X @ beta
    for _ in range(sweeps):
        moved = 0.0
        for j in range(d):
            a = X[:, j]
            nz = a != 0.0
            if not nz.any():
                continue
            a_nz = a[nz]
            breaks = residual[nz] / a_nz
            order = np.argsort(breaks)
            jumps = np.abs(a_nz)[order]
            # subgradient of the summed loss as the step approaches -inf
            g = -tau * a_nz[a_nz > 0].sum() + (tau - 1.0) * (-a_nz[a_nz < 0]).sum()
            cum = g + np.cumsum(jumps)
            k = int(np.searchsorted(cum, 0.0))
            if k >= len(jumps):
                k = len(jumps) - 1
            step = breaks[order][k]
            if step != 0.0:
                beta[j] += step
                residual -= step * a
                moved = max(moved, abs(step))
        if moved == 0.0:
            break
    return beta


def _subgradient_quantile(
    X: np.ndarray,
    y: np.ndarray,
    start: np.ndarray,
    tau: float,
    norm_bound: float,
    cfg: FitConfig,
) -> tuple[np.ndarray, float]:
    n = X.shape[0]
    scale = max(float(np.std(y)), 1e-8)
    beta = _project_ball(start.copy(), norm_bound)
    avg = beta.copy()
    best_beta = beta.copy()
    best_loss = _pinball_objective(X, y, beta, tau)
    for t in range(1, cfg.max_iters + 1):
        residual = y - X @ beta
        sign = np.where(residual >= 0.0, tau, tau - 1.0)
        grad = -(X.T @ sign) / n
        step = cfg.init_step * scale
        if cfg.step_rule == "decay":
            step /= np.sqrt(t)
        beta = _project_ball(beta - step * grad, norm_bound)
        avg += (beta - avg) / t
        if t % 50 == 0 or t == cfg.max_iters:
            for cand in (avg, beta):
                loss = _pinball_objective(X, y, cand, tau)
                if loss < best_loss - 1e-15:
                    best_loss = loss
                    best_beta = cand.copy()
    return best_beta, best_loss


def fit_quantile(
    data: Dataset, tau: float, norm_bound: float, cfg: FitConfig = FitConfig()
) -> LinearModel:
    """Linear conditional-quantile fit by pinball-loss minimization over the
    l2 ball, via projected subgradient descent plus coordinate polish."""
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must lie in (0, 1), got {tau}")
    X, y = data.features, data.labels
    rng = np.random.default_rng(cfg.seed)

    starts = [fit_least_squares(data, norm_bound).coefficients.copy()]
    if cfg.restarts >= 1:
        starts.append(np.zeros(data.d))
    for _ in range(max(cfg.restarts - 1, 0)):
        starts.append(rng.normal(scale=1.0, size=data.d))

    best_beta, best_loss = None, np.inf
    for start in starts:
        beta, _ = _subgradient_quantile(X, y, start, tau, norm_bound, cfg)
        beta = _coordinate_polish(X, y, beta, tau, cfg.polish_sweeps)
        beta = _project_ball(beta, norm_bound)
        loss = _pinball_objective(X, y, beta, tau)
        if loss < best_loss:
            best_loss, best_beta = loss, beta
    return LinearModel(best_beta, norm_bound)


class IntervalFit(NamedTuple):
    interval: IntervalFunction
    miss_rate: float  # fraction of training labels outside the interval


def fit_interval_function(
    data: Dataset,
    target_miss: float,
    norm_bound: float,
    cfg: FitConfig = FitConfig(),
) -> IntervalFit:
    """Center-plus-width interval learner.

    The center is the median (tau = 0.5) quantile fit; the half width is the
    smallest value whose empirical miss rate does not exceed ``target_miss``,
    found directly from the order statistics of the absolute residuals.
    """
    if not 0.0 <= target_miss < 1.0:
        raise ValueError(f"target_miss must lie in [0, 1), got {target_miss}")
    center = fit_quantile(data, 0.5, norm_bound, cfg)
    abs_residuals = np.sort(np.abs(data.labels - center.predict(data.features)))
    n = data.n
    allowed = int(np.floor(target_miss * n))
    half_width = float(abs_residuals[n - allowed - 1])
    miss_rate = float(np.mean(abs_residuals > half_width))
    return IntervalFit(IntervalFunction(center, half_width), miss_rate)
