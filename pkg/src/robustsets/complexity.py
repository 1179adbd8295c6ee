"""Empirical Rademacher averages and analytic complexity bounds.

For the l2-bounded linear class the inner supremum over models has the closed
form sup_{||b|| <= B} |sum_i s_i b'x_i| = B * ||sum_i s_i x_i||_2 (dual norm),
so the Monte Carlo estimator is exact conditional on the sign draws.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Dataset


@dataclass(frozen=True)
class RademacherEstimate:
    value: float
    std_error: float
    draws: int
    method: str  # "monte_carlo", "analytic_linear" or "analytic_kernel"

    def __post_init__(self):
        if self.value < 0 or self.std_error < 0:
            raise ValueError("value and std_error must be nonnegative")
        if self.draws < 1:
            raise ValueError("draws must be positive")


def empirical_rademacher_linear(
    data: Dataset,
    norm_bound: float,
    draws: int,
    seed: int = 0,
    partitions: int = 1,
) -> RademacherEstimate:
    """Monte Carlo estimate of the empirical Rademacher average of the
    l2-bounded linear class on a fixed sample.

    Sign draws are split across ``partitions`` independent streams spawned
    from the seed, so the merged result is deterministic given
    (seed, draws, partitions) regardless of how partitions are executed.
    """
    if draws < 1:
        raise ValueError("draws must be >= 1")
    if partitions < 1 or partitions > draws:
        raise ValueError("partitions must lie in [1, draws]")
    X = data.features
    n = data.n

    counts = [draws // partitions] * partitions
    for k in range(draws % partitions):
        counts[k] += 1
    streams = np.random.SeedSequence(seed).spawn(partitions)

    total = 0.0
    total_sq = 0.0
    for count, stream in zip(counts, streams):
        if count == 0:
            continue
        rng = np.random.default_rng(stream)
        sigma = rng.integers(0, 2, size=(count, n)) * 2 - 1
        values = norm_bound / n * np.linalg.norm(sigma @ X, axis=1)
        total += float(values.sum())
        total_sq += float((values**2).sum())

    mean = total / draws
    if draws > 1:
        var = max(total_sq / draws - mean**2, 0.0) * draws / (draws - 1)
        std_error = float(np.sqrt(var / draws))
    else:
        std_error = 0.0
    return RademacherEstimate(mean, std_error, draws, "monte_carlo")


def contraction_bound(lipschitz: float, base: RademacherEstimate) -> RademacherEstimate:
    """Complexity of a Lipschitz loss composed with a base class: both the
    value and its sampling error scale by 2 * lipschitz."""
    if lipschitz <= 0:
        raise ValueError("lipschitz must be positive")
    factor = 2.0 * lipschitz
    return RademacherEstimate(
        factor * base.value, factor * base.std_error, base.draws, base.method
    )


def population_rademacher(
    base: RademacherEstimate, loss_bound: float, n: int, delta: float
) -> RademacherEstimate:
    """Upper bound on the population Rademacher average from the empirical
    one, via the concentration slack M * sqrt(log(1/delta) / (2n))."""
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    slack = loss_bound * np.sqrt(np.log(1.0 / delta) / (2.0 * n))
    return RademacherEstimate(
        base.value + float(slack), base.std_error, base.draws, base.method
    )


def linear_class_bounds(X_b: float, B_b: float, n: int) -> tuple[float, float]:
    """Distribution-free bounds for the l2 linear class: the base class bound
    X_b*B_b/sqrt(n) and the squared-loss composition bound 8*(X_b*B_b)^2/sqrt(n)."""
    if X_b <= 0 or B_b <= 0:
        raise ValueError("X_b and B_b must be positive")
    if n < 1:
        raise ValueError("n must be >= 1")
    r_base = X_b * B_b / np.sqrt(n)
    r_sq_loss = 8.0 * (X_b * B_b) ** 2 / np.sqrt(n)
    return float(r_base), float(r_sq_loss)


def kernel_class_bound(
    gram_diagonal: np.ndarray, B_b: float, lipschitz: float, n: int
) -> float:
    """Bound for kernel classes with a Lipschitz loss:
    2 * L * (B_b / n) * sqrt(trace of the Gram matrix)."""
    gram_diagonal = np.asarray(gram_diagonal, dtype=float)
    if np.any(gram_diagonal < 0):
        raise ValueError("Gram diagonal entries must be nonnegative")
    return float(2.0 * lipschitz * B_b / n * np.sqrt(gram_diagonal.sum()))
