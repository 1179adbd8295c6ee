"""Shared domain types and the portfolio decision problem.

All types are immutable after construction (arrays are copied and marked
read-only), so instances can be shared freely across threads and processes.
"""

from __future__ import annotations

import abc
from dataclasses import dataclass, field

import numpy as np

FEASIBILITY_TOL = 1e-9
SOLVER_KKT_TOL = 1e-6

NORM_SLACK = 1e-9


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Dataset:
    """Training sample: feature rows paired with scalar labels."""

    features: np.ndarray  # (n, d)
    labels: np.ndarray  # (n,)

    def __post_init__(self):
        object.__setattr__(self, "features", _frozen_array(self.features))
        object.__setattr__(self, "labels", _frozen_array(self.labels))
        if self.features.ndim != 2:
            raise ValueError("features must be a 2-d array")
        if self.labels.ndim != 1:
            raise ValueError("labels must be a 1-d array")
        n, d = self.features.shape
        if n < 1 or d < 1:
            raise ValueError("need at least one example and one feature")
        if self.labels.shape[0] != n:
            raise ValueError("labels length does not match feature rows")
        if not (np.isfinite(self.features).all() and np.isfinite(self.labels).all()):
            raise ValueError("dataset entries must be finite")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def with_intercept(self) -> "Dataset":
        """Append a constant-one feature column (intercept stays in the linear class)."""
        ones = np.ones((self.n, 1))
        return Dataset(np.hstack([self.features, ones]), self.labels)


@dataclass(frozen=True)
class QueryBatch:
    """Feature vectors of the situations the decision must be robust to."""

    features: np.ndarray  # (m, d)

    def __post_init__(self):
        object.__setattr__(self, "features", _frozen_array(self.features))
        if self.features.ndim != 2:
            raise ValueError("query features must be a 2-d array")
        if self.features.shape[0] < 1:
            raise ValueError("need at least one query")
        if not np.isfinite(self.features).all():
            raise ValueError("query entries must be finite")

    @property
    def m(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def with_intercept(self) -> "QueryBatch":
        ones = np.ones((self.m, 1))
        return QueryBatch(np.hstack([self.features, ones]))


@dataclass(frozen=True)
class LinearModel:
    """Linear predictor with an explicit l2 norm budget."""

    coefficients: np.ndarray  # (d,)
    norm_bound: float

    def __post_init__(self):
        object.__setattr__(self, "coefficients", _frozen_array(self.coefficients))
        object.__setattr__(self, "norm_bound", float(self.norm_bound))
        if self.coefficients.ndim != 1:
            raise ValueError("coefficients must be a 1-d array")
        if not np.isfinite(self.coefficients).all():
            raise ValueError("coefficients must be finite")
        if self.norm_bound <= 0:
            raise ValueError("norm_bound must be positive")
        norm = float(np.linalg.norm(self.coefficients))
        if norm > self.norm_bound + NORM_SLACK:
            raise ValueError(
                f"coefficient norm {norm:.6g} exceeds bound {self.norm_bound:.6g}"
            )

    @property
    def d(self) -> int:
        return self.coefficients.shape[0]

    def predict(self, features: np.ndarray) -> np.ndarray:
        features = np.asarray(features, dtype=float)
        return features @ self.coefficients


@dataclass(frozen=True)
class IntervalFunction:
    """Symmetric interval-valued predictor: center(x) +/- half_width."""

    center: LinearModel
    half_width: float

    def __post_init__(self):
        object.__setattr__(self, "half_width", float(self.half_width))
        if self.half_width < 0:
            raise ValueError("half_width must be nonnegative")

    def bounds(self, features: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        mid = self.center.predict(features)
        return mid - self.half_width, mid + self.half_width

    def contains(self, features: np.ndarray, labels: np.ndarray) -> np.ndarray:
        lo, hi = self.bounds(features)
        labels = np.asarray(labels, dtype=float)
        return (labels >= lo) & (labels <= hi)


@dataclass(frozen=True)
class BoxUncertaintySet:
    """Product of per-coordinate closed intervals."""

    lower: np.ndarray  # (m,)
    upper: np.ndarray  # (m,)

    def __post_init__(self):
        object.__setattr__(self, "lower", _frozen_array(self.lower))
        object.__setattr__(self, "upper", _frozen_array(self.upper))
        if self.lower.shape != self.upper.shape or self.lower.ndim != 1:
            raise ValueError("lower and upper must be 1-d arrays of equal length")
        if not (np.isfinite(self.lower).all() and np.isfinite(self.upper).all()):
            raise ValueError("box limits must be finite")
        if np.any(self.lower > self.upper):
            raise ValueError("lower limit exceeds upper limit")

    @property
    def m(self) -> int:
        return self.lower.shape[0]

    @property
    def widths(self) -> np.ndarray:
        return self.upper - self.lower

    def contains(self, point: np.ndarray, tol: float = 0.0) -> bool:
        point = np.asarray(point, dtype=float)
        return bool(
            np.all(point >= self.lower - tol) and np.all(point <= self.upper + tol)
        )

    def contains_box(self, other: "BoxUncertaintySet", tol: float = 0.0) -> bool:
        return bool(
            np.all(self.lower <= other.lower + tol)
            and np.all(self.upper >= other.upper - tol)
        )


class DecisionProblem(abc.ABC):
    """Minimal contract a decision problem exposes to the robust solvers."""

    @abc.abstractmethod
    def objective(self, decision: np.ndarray, realization: np.ndarray) -> float:
        ...

    @abc.abstractmethod
    def feasible(
        self, decision: np.ndarray, realization: np.ndarray, tol: float = FEASIBILITY_TOL
    ) -> bool:
        ...

    @property
    @abc.abstractmethod
    def dimension(self) -> int:
        ...


@dataclass(frozen=True)
class PortfolioProblem(DecisionProblem):
    """Minimum-variance allocation with a floor on realized return.

    Objective pi' Sigma pi; constraints sum(pi) = 1 and y' pi >= min_return,
    optionally pi >= 0.
    """

    covariance: np.ndarray  # (m, m)
    min_return: float
    long_only: bool = False

    def __post_init__(self):
        object.__setattr__(self, "covariance", _frozen_array(self.covariance))
        object.__setattr__(self, "min_return", float(self.min_return))
        cov = self.covariance
        if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
            raise ValueError("covariance must be square")
        if not np.isfinite(cov).all():
            raise ValueError("covariance must be finite")
        if np.max(np.abs(cov - cov.T)) > 1e-10:
            raise ValueError("covariance must be symmetric within 1e-10")
        eigvals = np.linalg.eigvalsh(cov)
        if eigvals.min() < -1e-10:
            raise ValueError("covariance must be positive semidefinite")

    @property
    def dimension(self) -> int:
        return self.covariance.shape[0]

    def objective(self, decision: np.ndarray, realization: np.ndarray = None) -> float:
        decision = np.asarray(decision, dtype=float)
        return float(decision @ self.covariance @ decision)

    def feasible(
        self, decision: np.ndarray, realization: np.ndarray, tol: float = FEASIBILITY_TOL
    ) -> bool:
        return portfolio_feasible(self, decision, realization, tol)


def portfolio_feasible(
    problem: PortfolioProblem,
    weights: np.ndarray,
    returns: np.ndarray,
    tol: float = FEASIBILITY_TOL,
) -> bool:
    """Check budget, return-floor and (optional) long-only constraints."""
    weights = np.asarray(weights, dtype=float)
    returns = np.asarray(returns, dtype=float)
    m = problem.dimension
    if weights.shape != (m,) or returns.shape != (m,):
        raise ValueError(
            f"expected weights and returns of shape ({m},), "
            f"got {weights.shape} and {returns.shape}"
        )
    if abs(float(weights.sum()) - 1.0) > tol:
        return False
    if float(returns @ weights) < problem.min_return - tol:
        return False
    if problem.long_only and np.any(weights < -tol):
        return False
    return True
