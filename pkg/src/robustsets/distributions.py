"""Gaussian, chi-square and F distribution functions built from regularized
incomplete gamma/beta evaluations, with quantiles by bisection.

Self-contained on purpose: the quantile plumbing is part of the artifact and
is verified in the tests against independently tabulated values.
"""

from __future__ import annotations

from math import exp, lgamma, log, sqrt

_MAX_ITER = 500
_EPS = 1e-15
_TINY = 1e-300


def regularized_gamma_p(a: float, x: float) -> float:
    """Regularized lower incomplete gamma P(a, x)."""
    if a <= 0:
        raise ValueError("a must be positive")
    if x < 0:
        raise ValueError("x must be nonnegative")
    if x == 0.0:
        return 0.0
    if x < a + 1.0:
        return _gamma_series(a, x)
    return 1.0 - _gamma_continued_fraction(a, x)


def _gamma_series(a: float, x: float) -> float:
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * exp(-x + a * log(x) - lgamma(a))


def _gamma_continued_fraction(a: float, x: float) -> float:
    # modified Lentz evaluation of the upper-tail continued fraction
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER + 1):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return h * exp(-x + a * log(x) - lgamma(a))


def regularized_beta(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    front = exp(
        lgamma(a + b) - lgamma(a) - lgamma(b) + a * log(x) + b * log(1.0 - x)
    )
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_continued_fraction(a, b, x) / a
    return 1.0 - front * _beta_continued_fraction(b, a, 1.0 - x) / b


def _beta_continued_fraction(a: float, b: float, x: float) -> float:
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, _MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return h


def normal_cdf(x: float, mean: float = 0.0, sd: float = 1.0) -> float:
    if sd <= 0:
        raise ValueError("sd must be positive")
    z = (x - mean) / sd
    if z == 0.0:
        return 0.5
    tail = 0.5 * regularized_gamma_p(0.5, 0.5 * z * z)
    return 0.5 + tail if z > 0 else 0.5 - tail


def chi2_cdf(x: float, dof: int) -> float:
    if dof < 1:
        raise ValueError("dof must be >= 1")
    if x <= 0.0:
        return 0.0
    return regularized_gamma_p(0.5 * dof, 0.5 * x)


def f_cdf(x: float, dof1: int, dof2: int) -> float:
    if dof1 < 1 or dof2 < 1:
        raise ValueError("degrees of freedom must be >= 1")
    if x <= 0.0:
        return 0.0
    z = dof1 * x / (dof1 * x + dof2)
    return regularized_beta(0.5 * dof1, 0.5 * dof2, z)


def quantile_by_bisection(cdf, p: float, lo: float, hi: float, tol: float = 1e-10) -> float:
    """Invert a monotone CDF by bisection, expanding the bracket if needed."""
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    span = max(hi - lo, 1.0)
    for _ in range(200):
        if cdf(lo) <= p:
            break
        lo -= span
        span *= 2.0
    span = max(hi - lo, 1.0)
    for _ in range(200):
        if cdf(hi) >= p:
            break
        hi += span
        span *= 2.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if cdf(mid) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def normal_quantile(p: float, mean: float = 0.0, sd: float = 1.0) -> float:
    z = quantile_by_bisection(normal_cdf, p, -10.0, 10.0)
    return mean + sd * z


def chi2_quantile(p: float, dof: int) -> float:
    return quantile_by_bisection(lambda x: chi2_cdf(x, dof), p, 0.0, dof + 10.0 * sqrt(2.0 * dof))


def f_quantile(p: float, dof1: int, dof2: int) -> float:
    return quantile_by_bisection(lambda x: f_cdf(x, dof1, dof2), p, 0.0, 100.0)
