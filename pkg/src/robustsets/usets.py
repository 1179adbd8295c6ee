"""Uncertainty-set construction.

Four builders are provided: interval set-function products (method 1),
quantile-pair boxes (method 2), good-model-set extremization with a residual
support margin (method 3), and the two-quantile good-model-set variant
(method 4).  The finite-class, PAC-Bayes and Gaussian-regression (GI) set
constructions are also here since they feed the same box pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy.optimize import linprog

from .complexity import RademacherEstimate
from .core import (
    BoxUncertaintySet,
    Dataset,
    IntervalFunction,
    LinearModel,
    QueryBatch,
)
from .distributions import chi2_quantile, f_quantile, normal_quantile
from .learners import Loss, empirical_loss

NORM_FLAG_SLACK = 1e-9


@dataclass(frozen=True)
class GoodModelSet:
    """Sublevel set of the empirical loss around a reference model."""

    reference_model: LinearModel
    loss: Loss
    threshold: float
    norm_bound: float
    source_data: Dataset

    def __post_init__(self):
        ref_loss = empirical_loss(self.reference_model, self.source_data, self.loss)
        if self.threshold < ref_loss - 1e-9:
            raise ValueError(
                f"threshold {self.threshold:.6g} is below the reference model's "
                f"empirical loss {ref_loss:.6g}; the set would be empty"
            )

    @property
    def reference_loss(self) -> float:
        return empirical_loss(self.reference_model, self.source_data, self.loss)


@dataclass(frozen=True)
class ResidualSupport:
    """Symmetric residual support [0, e] together with its escape probability."""

    half_width: float
    miss_prob: float

    def __post_init__(self):
        if self.half_width < 0:
            raise ValueError("half_width must be nonnegative")
        if not 0.0 <= self.miss_prob <= 1.0:
            raise ValueError("miss_prob must lie in [0, 1]")


class ExtremeInterval(NamedTuple):
    inf: float
    sup: float
    inf_norm_active: bool  # l2 ball binding at the minimizing model
    sup_norm_active: bool


def build_method1(ifun: IntervalFunction, queries: QueryBatch) -> BoxUncertaintySet:
    """Product of the learned interval function evaluated at each query."""
    if queries.d != ifun.center.d:
        raise ValueError("query dimension does not match the interval function")
    lo, hi = ifun.bounds(queries.features)
    return BoxUncertaintySet(lo, hi)


def build_method2(
    lo_model: LinearModel, hi_model: LinearModel, queries: QueryBatch
) -> BoxUncertaintySet:
    """Box between two fitted quantile models, ordered per coordinate."""
    if lo_model.d != hi_model.d:
        raise ValueError("quantile models have mismatched dimensions")
    if queries.d != lo_model.d:
        raise ValueError("query dimension does not match the models")
    a = lo_model.predict(queries.features)
    b = hi_model.predict(queries.features)
    return BoxUncertaintySet(np.minimum(a, b), np.maximum(a, b))


def good_set_threshold_rademacher(
    data: Dataset,
    reference_model: LinearModel,
    loss: Loss,
    M: float,
    delta: float,
    rad: RademacherEstimate,
    variant: str = "empirical",
) -> float:
    """Loss threshold that keeps the best-in-class model inside the set with
    probability 1 - delta.

    ``variant="empirical"`` uses the empirical Rademacher average with slack
    4M*sqrt(log(3/delta)/(2n)); ``variant="population"`` uses the population
    average (pass a population estimate) with slack 3M*sqrt(log(2/delta)/(2n)).
    """
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    if M <= 0:
        raise ValueError("M must be positive")
    n = data.n
    base = empirical_loss(reference_model, data, loss)
    if variant == "empirical":
        slack = 4.0 * M * np.sqrt(np.log(3.0 / delta) / (2.0 * n))
    elif variant == "population":
        slack = 3.0 * M * np.sqrt(np.log(2.0 / delta) / (2.0 * n))
    else:
        raise ValueError(f"unknown variant {variant!r}")
    return float(base + 2.0 * rad.value + slack)


def good_set_threshold_finite(
    data: Dataset,
    reference_model: LinearModel,
    loss: Loss,
    M: float,
    delta: float,
    class_size: int,
) -> float:
    """Threshold for a finite hypothesis class (union bound instead of a
    Rademacher term)."""
    if class_size < 1:
        raise ValueError("class_size must be >= 1")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    n = data.n
    base = empirical_loss(reference_model, data, loss)
    t1 = M * np.sqrt((np.log(class_size) + np.log(2.0 / delta)) / (2.0 * n))
    t2 = M * np.sqrt(np.log(2.0 / delta) / (2.0 * n))
    return float(base + t1 + t2)


def _extremize_squared(gset: GoodModelSet, query: np.ndarray) -> ExtremeInterval:
    X = gset.source_data.features
    Y = gset.source_data.labels
    n = gset.source_data.n
    XtX = X.T @ X
    if np.linalg.matrix_rank(XtX) < XtX.shape[0]:
        raise np.linalg.LinAlgError(
            "X'X is singular; refit on non-degenerate features or use a "
            "ridge-regularized pseudo-inverse fallback"
        )
    beta_hat = np.linalg.solve(XtX, X.T @ Y)
    sse = float(np.sum((X @ beta_hat - Y) ** 2))
    radius = n * gset.threshold - sse
    scale = max(abs(n * gset.threshold), abs(sse), 1.0)
    if radius < -1e-9 * scale:
        raise ValueError(
            f"threshold {gset.threshold:.6g} is below the attainable mean "
            f"squared loss {sse / n:.6g}"
        )
    radius = max(radius, 0.0)
    direction = np.linalg.solve(XtX, query)
    quad = float(query @ direction)
    center = float(beta_hat @ query)
    span = float(np.sqrt(radius * quad))
    if quad > 0 and radius > 0:
        shift = np.sqrt(radius / quad) * direction
        hi_norm = float(np.linalg.norm(beta_hat + shift))
        lo_norm = float(np.linalg.norm(beta_hat - shift))
    else:
        hi_norm = lo_norm = float(np.linalg.norm(beta_hat))
    bound = gset.norm_bound
    return ExtremeInterval(
        center - span,
        center + span,
        lo_norm > bound + NORM_FLAG_SLACK,
        hi_norm > bound + NORM_FLAG_SLACK,
    )


def _extremize_pinball(gset: GoodModelSet, query: np.ndarray) -> ExtremeInterval:
    """Exact LP extremization of b'query over the pinball sublevel set.

    Epigraph form: variables (b, u), u_i at least either pinball branch,
    mean(u) <= threshold, with the box |b_j| <= norm_bound keeping the
    feasible region polyhedral (the l2 ball is checked afterwards and
    flagged if it would have been binding).
    """
    X = gset.source_data.features
    Y = gset.source_data.labels
    n, d = X.shape
    tau = gset.loss.tau
    t = gset.threshold
    B = gset.norm_bound

    # columns: beta (d), u (n)
    c = np.concatenate([query, np.zeros(n)])
    eye_n = np.eye(n)
    rows_hi = np.hstack([tau * X, -eye_n])  # tau*(y - Xb) <= u
    rows_lo = np.hstack([(tau - 1.0) * X, -eye_n])  # (tau-1)*(y - Xb) <= u
    mean_row = np.concatenate([np.zeros(d), np.full(n, 1.0 / n)])
    A_ub = np.vstack([rows_hi, rows_lo, mean_row])
    b_ub = np.concatenate([tau * Y, (tau - 1.0) * Y, [t]])
    bounds = [(-B, B)] * d + [(None, None)] * n

    results = []
    for sign in (1.0, -1.0):
        res = linprog(sign * c, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs")
        if not res.success:
            raise RuntimeError(f"pinball extremization LP failed: {res.message}")
        beta = res.x[:d]
        results.append((float(beta @ query), float(np.linalg.norm(beta))))
    (lo_val, lo_norm), (hi_val, hi_norm) = results
    return ExtremeInterval(
        lo_val,
        hi_val,
        lo_norm > B + NORM_FLAG_SLACK,
        hi_norm > B + NORM_FLAG_SLACK,
    )


def extremize_prediction(gset: GoodModelSet, query: np.ndarray) -> ExtremeInterval:
    """Range of predictions at one query over all models in the good set."""
    query = np.asarray(query, dtype=float)
    if query.shape != (gset.source_data.d,):
        raise ValueError("query dimension does not match the training data")
    if gset.loss.kind == "squared":
        return _extremize_squared(gset, query)
    if gset.loss.kind == "pinball":
        return _extremize_pinball(gset, query)
    raise ValueError(f"extremization not defined for loss kind {gset.loss.kind!r}")


def build_method3(
    gset: GoodModelSet, queries: QueryBatch, resid: ResidualSupport
) -> BoxUncertaintySet:
    """Good-model prediction range widened by the residual support margin."""
    lo = np.empty(queries.m)
    hi = np.empty(queries.m)
    for j, query in enumerate(queries.features):
        interval = extremize_prediction(gset, query)
        lo[j] = interval.inf - resid.half_width
        hi[j] = interval.sup + resid.half_width
    return BoxUncertaintySet(lo, hi)


def build_method4(
    gset_p: GoodModelSet,
    gset_q: GoodModelSet,
    queries: QueryBatch,
    resid_p: ResidualSupport,
    resid_q: ResidualSupport,
) -> BoxUncertaintySet:
    """Union of two good quantile-model sets, widened by the larger residual
    support of the two."""
    if gset_p.source_data.d != gset_q.source_data.d:
        raise ValueError("good model sets have mismatched dimensions")
    margin = max(resid_p.half_width, resid_q.half_width)
    lo = np.empty(queries.m)
    hi = np.empty(queries.m)
    for j, query in enumerate(queries.features):
        int_p = extremize_prediction(gset_p, query)
        int_q = extremize_prediction(gset_q, query)
        lo[j] = min(int_p.inf, int_q.inf) - margin
        hi[j] = max(int_p.sup, int_q.sup) + margin
    return BoxUncertaintySet(lo, hi)


def build_pacbayes_set(
    data: Dataset,
    finite_models: Sequence[LinearModel],
    prior: np.ndarray,
    C: float,
    alpha: float,
    loss: Loss = Loss.squared(),
) -> list[LinearModel]:
    """Members of a finite class whose empirical loss clears the Gibbs
    posterior threshold (log prior mass - alpha) / (n C).

    The returned list may be empty; small prior masses make the threshold
    negative while the loss is nonnegative.
    """
    prior = np.asarray(prior, dtype=float)
    if prior.shape != (len(finite_models),):
        raise ValueError("prior length does not match the model list")
    if abs(float(prior.sum()) - 1.0) > 1e-9:
        raise ValueError("prior must sum to 1")
    if C <= 0:
        raise ValueError("C must be positive")
    # alpha is the log of the posterior-density level and is typically
    # negative; any real value is legal
    members = []
    for model, mass in zip(finite_models, prior):
        if mass <= 0.0:
            continue
        threshold = (np.log(mass) - alpha) / (data.n * C)
        if empirical_loss(model, data, loss) <= threshold + 1e-12:
            members.append(model)
    return members


def build_gi_baseline(
    data: Dataset,
    sigma: float | None,
    delta_e: float,
    confidence: float,
    queries: QueryBatch,
) -> tuple[BoxUncertaintySet, dict]:
    """Gaussian linear-regression baseline: ellipsoidal model set around the
    OLS fit sized by a chi-square (sigma known) or F (sigma estimated)
    quantile, plus a Gaussian residual margin.
    """
    if not 0.0 < confidence < 1.0:
        raise ValueError("confidence must lie in (0, 1)")
    if not 0.0 < delta_e < 1.0:
        raise ValueError("delta_e must lie in (0, 1)")
    X = data.features
    Y = data.labels
    n, d = X.shape
    XtX = X.T @ X
    if np.linalg.matrix_rank(XtX) < d:
        raise np.linalg.LinAlgError("X'X is singular; GI baseline needs full rank")
    beta_hat = np.linalg.solve(XtX, X.T @ Y)
    if sigma is None:
        if n <= d:
            raise ValueError("estimating sigma needs n > d")
        s2 = float(np.sum((Y - X @ beta_hat) ** 2) / (n - d))
        sigma_used = float(np.sqrt(s2))
        c = d * f_quantile(confidence, d, n - d)
    else:
        if sigma <= 0:
            raise ValueError("sigma must be positive")
        sigma_used = float(sigma)
        c = chi2_quantile(confidence, d)
    e = sigma_used * normal_quantile(1.0 - delta_e / 2.0)

    XtX_inv = np.linalg.inv(XtX)
    center = queries.features @ beta_hat
    quad = np.einsum("ij,jk,ik->i", queries.features, XtX_inv, queries.features)
    span = np.sqrt(np.maximum(c * sigma_used**2 * quad, 0.0))
    box = BoxUncertaintySet(center - span - e, center + span + e)
    diagnostics = {
        "ellipsoid_radius": float(c),
        "residual_half_width": float(e),
        "sigma": sigma_used,
        "sigma_estimated": sigma is None,
    }
    return box, diagnostics
