"""Guarantee validation: synthetic data, theorem bound values, best-in-class
oracles and the Monte Carlo feasibility harness.

The harness draws fresh training samples (outer trials), fits the chosen
uncertainty-set method, and for every inner trial draws a fresh query batch
with labels, rebuilds the box at those queries, re-solves the robust
portfolio problem and checks feasibility of the solution on the realized
labels.  Reported bounds can be vacuous (clamped at zero) at small sample
sizes; that is flagged, not failed.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .complexity import empirical_rademacher_linear, linear_class_bounds
from .core import Dataset, PortfolioProblem, QueryBatch, portfolio_feasible
from .learners import (
    FitConfig,
    Loss,
    empirical_loss,
    fit_interval_function,
    fit_least_squares,
    fit_quantile,
)
from .robust import solve_box_robust
from .usets import GoodModelSet, ResidualSupport, good_set_threshold_rademacher

SYNTH_KINDS = ("linear_gaussian", "heteroscedastic", "bimodal")


@dataclass(frozen=True)
class SynthSpec:
    kind: str
    d: int
    true_coefficients: np.ndarray
    noise_scale: float
    seed: int = 0
    bimodal_offset: float = 2.0

    def __post_init__(self):
        if self.kind not in SYNTH_KINDS:
            raise ValueError(f"unknown synthetic kind {self.kind!r}")
        coef = np.array(self.true_coefficients, dtype=float)
        coef.setflags(write=False)
        object.__setattr__(self, "true_coefficients", coef)
        if coef.shape != (self.d,):
            raise ValueError("true_coefficients must have length d")
        if self.noise_scale < 0:
            raise ValueError("noise_scale must be nonnegative")


def _draw_features(spec: SynthSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(-1.0, 1.0, size=(n, spec.d))


def draw_labels(spec: SynthSpec, features: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Labels conditional on given features, per the synthetic process."""
    features = np.asarray(features, dtype=float)
    n = features.shape[0]
    mean = features @ spec.true_coefficients
    g = rng.standard_normal(n)
    if spec.kind == "linear_gaussian":
        noise = spec.noise_scale * g
    elif spec.kind == "heteroscedastic":
        noise = spec.noise_scale * (1.0 + np.linalg.norm(features, axis=1)) * g
    else:  # bimodal
        signs = rng.integers(0, 2, size=n) * 2 - 1
        noise = spec.noise_scale * g + spec.bimodal_offset * signs
    return mean + noise


def generate(spec: SynthSpec, n: int, seed: int | None = None) -> Dataset:
    """Deterministic synthetic sample; ``seed`` overrides the spec's seed."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    features = _draw_features(spec, n, rng)
    labels = draw_labels(spec, features, rng)
    return Dataset(features, labels)


def r_minus_eps(z, eps: float):
    """Lower ramp surrogate of the indicator 1[z <= 0]."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    z = np.asarray(z, dtype=float)
    out = np.minimum(1.0, np.maximum(0.0, -z / eps))
    return float(out) if out.ndim == 0 else out


def r_plus_eps(z, eps: float):
    """Upper ramp surrogate of the indicator 1[z <= 0]."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    z = np.asarray(z, dtype=float)
    out = np.minimum(1.0, np.maximum(0.0, 1.0 - z / eps))
    return float(out) if out.ndim == 0 else out


def theorem1_bound(
    miss_rate: float, rad: float, n: int, delta: float, m: int, clamp: bool = True
) -> float:
    """Feasibility lower bound for the interval set-function method."""
    base = 1.0 - miss_rate - 2.0 * rad - np.sqrt(np.log(1.0 / delta) / (2.0 * n))
    if clamp:
        base = min(max(base, 0.0), 1.0)
    return float(base**m)


def theorem2_bound(
    data: Dataset,
    lo_model,
    hi_model,
    eps: float,
    rad_B0: float,
    n: int,
    delta: float,
    m: int,
    clamp: bool = True,
) -> float:
    """Feasibility lower bound for the quantile-pair method, using the ramp
    surrogates of the training residuals."""
    res_hi = data.labels - hi_model.predict(data.features)
    res_lo = data.labels - lo_model.predict(data.features)
    empirical = float(np.mean(r_minus_eps(res_hi, eps) - r_plus_eps(res_lo, eps)))
    base = empirical - (8.0 / eps) * rad_B0 - 2.0 * np.sqrt(np.log(2.0 / delta) / (2.0 * n))
    if clamp:
        base = min(max(base, 0.0), 1.0)
    return float(base**m)


def theorem3_bound(delta: float, delta_e: float, m: int, clamp: bool = True) -> float:
    """Feasibility lower bound for the single good-model-set method."""
    value = (1.0 - delta) * (1.0 - delta_e) ** m
    if clamp:
        value = min(max(value, 0.0), 1.0)
    return float(value)


def theorem5_bound(
    delta: float, de_p: float, de_q: float, dp: float, dq: float, m: int, clamp: bool = True
) -> float:
    """Feasibility lower bound for the two-quantile good-model-set method;
    the raw value can be negative, in which case it is clamped to zero."""
    value = (
        (1.0 - delta) * ((1.0 - de_p) ** m + (1.0 - de_q) ** m)
        + (dq - dp) ** m
        - 2.0
    )
    if clamp:
        value = min(max(value, 0.0), 1.0)
    return float(value)


def oracle_best_in_class(
    spec: SynthSpec,
    loss: Loss,
    norm_bound: float,
    N: int = 1_000_000,
    seed: int | None = None,
    intercept: bool = False,
):
    """Large-sample ERM approximating the population-loss minimizer.

    Diagnostic oracle only; it never enters a guarantee computation.
    """
    data = generate(spec, N, seed=spec.seed + 104729 if seed is None else seed)
    if intercept:
        data = data.with_intercept()
    if loss.kind == "squared":
        return fit_least_squares(data, norm_bound)
    if loss.kind == "pinball":
        cfg = FitConfig(max_iters=300, restarts=0, polish_sweeps=12)
        return fit_quantile(data, loss.tau, norm_bound, cfg)
    raise ValueError(f"oracle not defined for loss kind {loss.kind!r}")


def residual_support_estimate(
    spec: SynthSpec,
    model_oracle,
    delta_e: float,
    N: int = 200_000,
    seed: int | None = None,
) -> ResidualSupport:
    """Empirical (1 - delta_e) quantile of |y - model(x)| on fresh draws,
    standing in for the practitioner's Assumption-A knowledge."""
    if not 0.0 < delta_e < 1.0:
        raise ValueError("delta_e must lie in (0, 1)")
    rng = np.random.default_rng(spec.seed + 15485863 if seed is None else seed)
    features = _draw_features(spec, N, rng)
    labels = draw_labels(spec, features, rng)
    if model_oracle.d == spec.d + 1:
        features = np.hstack([features, np.ones((N, 1))])
    residuals = np.abs(labels - model_oracle.predict(features))
    e = float(np.quantile(residuals, 1.0 - delta_e))
    return ResidualSupport(e, delta_e)


def wilson_interval(successes: int, trials: int, z: float = 1.959963984540054) -> tuple[float, float]:
    """95% Wilson score interval for a binomial proportion."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    p = successes / trials
    denom = 1.0 + z**2 / trials
    center = (p + z**2 / (2 * trials)) / denom
    half = z * np.sqrt(p * (1 - p) / trials + z**2 / (4 * trials**2)) / denom
    return (max(center - half, 0.0), min(center + half, 1.0))


@dataclass(frozen=True)
class PipelineConfig:
    """Everything the Monte Carlo harness needs to run one method end to end."""

    method: str  # "m1", "m2", "m3" or "m4"
    synth: SynthSpec
    n: int
    m: int
    delta: float = 0.05
    eps: float = 0.1
    delta_p: float = 0.05
    delta_q: float = 0.95
    target_miss: float = 0.05
    norm_bound: float = 10.0
    loss_bound: float = 4.0  # M, range bound of the loss in the thresholds
    min_return: float = -10.0
    long_only: bool = True
    covariance: np.ndarray | None = None  # identity when omitted
    fit: FitConfig = field(default_factory=lambda: FitConfig(max_iters=300, restarts=0))
    rad_plugin: str = "analytic"  # or "monte_carlo"
    rad_draws: int = 200
    resid: ResidualSupport | None = None  # method 3 (Assumption A pair)
    resid_p: ResidualSupport | None = None  # method 4
    resid_q: ResidualSupport | None = None

    def __post_init__(self):
        if self.method not in ("m1", "m2", "m3", "m4"):
            raise ValueError(f"unknown method {self.method!r}")
        if not self.delta_p < self.delta_q:
            raise ValueError("delta_p must be below delta_q")
        if self.method == "m3" and self.resid is None:
            raise ValueError("method m3 needs a ResidualSupport")
        if self.method == "m4" and (self.resid_p is None or self.resid_q is None):
            raise ValueError("method m4 needs resid_p and resid_q")


@dataclass(frozen=True)
class GuaranteeReport:
    theorem_id: str  # "T1", "T2", "T3" or "T5"
    bound: float
    raw_bound: float
    empirical: float
    wilson_ci: tuple[float, float]
    outer_trials: int
    inner_trials: int
    passed: bool  # bound not significantly above the empirical estimate
    vacuous: bool
    solver_infeasible: int
    plugins: dict

    def to_json(self) -> str:
        payload = {
            "theorem_id": self.theorem_id,
            "bound": float(self.bound),
            "raw_bound": float(self.raw_bound),
            "empirical": float(self.empirical),
            "wilson_ci": [float(v) for v in self.wilson_ci],
            "outer_trials": int(self.outer_trials),
            "inner_trials": int(self.inner_trials),
            "pass": bool(self.passed),
            "vacuous": bool(self.vacuous),
            "solver_infeasible": int(self.solver_infeasible),
            "plugins": {k: float(v) for k, v in self.plugins.items()},
        }
        return json.dumps(payload, indent=2, sort_keys=True)


_THEOREM_OF_METHOD = {"m1": "T1", "m2": "T2", "m3": "T3", "m4": "T5"}


def _rad_base(config: PipelineConfig, data: Dataset) -> float:
    """Plug-in for the base-class Rademacher average R(B0)."""
    X_b = float(np.max(np.linalg.norm(data.features, axis=1)))
    if config.rad_plugin == "analytic":
        r_base, _ = linear_class_bounds(X_b, config.norm_bound, data.n)
        return r_base
    est = empirical_rademacher_linear(
        data, config.norm_bound, config.rad_draws, seed=config.synth.seed
    )
    return est.value


def _fit_for_trial(config: PipelineConfig, data: Dataset):
    """Fit the trial's models and compute the per-trial bound pieces.

    Returns (box_builder, bound, raw_bound, plugins) where box_builder maps an
    intercept-augmented query feature matrix to (lower, upper) arrays.
    """
    method = config.method
    n = data.n
    if method == "m1":
        fit = fit_interval_function(data, config.target_miss, config.norm_bound, config.fit)
        rad = _rad_base(config, data)
        raw = theorem1_bound(fit.miss_rate, rad, n, config.delta, config.m, clamp=False)
        bound = theorem1_bound(fit.miss_rate, rad, n, config.delta, config.m)
        plugins = {"miss_rate": fit.miss_rate, "rad": rad, "half_width": fit.interval.half_width}
        center = fit.interval.center
        w = fit.interval.half_width

        def builder(Xq):
            mid = center.predict(Xq)
            return mid - w, mid + w

        return builder, bound, raw, plugins

    if method == "m2":
        lo_model = fit_quantile(data, config.delta_p, config.norm_bound, config.fit)
        hi_model = fit_quantile(data, config.delta_q, config.norm_bound, config.fit)
        rad = _rad_base(config, data)
        raw = theorem2_bound(
            data, lo_model, hi_model, config.eps, rad, n, config.delta, config.m, clamp=False
        )
        bound = theorem2_bound(
            data, lo_model, hi_model, config.eps, rad, n, config.delta, config.m
        )
        plugins = {"rad": rad, "eps": config.eps}

        def builder(Xq):
            a = lo_model.predict(Xq)
            b = hi_model.predict(Xq)
            return np.minimum(a, b), np.maximum(a, b)

        return builder, bound, raw, plugins

    if method == "m3":
        model = fit_least_squares(data, config.norm_bound, config.fit)
        rad = _rad_base(config, data)
        # squared loss over the class is Lipschitz with constant 4*X_b*B_b
        X_b = float(np.max(np.linalg.norm(data.features, axis=1)))
        rad_loss = 2.0 * (4.0 * X_b * config.norm_bound) * rad
        from .complexity import RademacherEstimate

        threshold = good_set_threshold_rademacher(
            data,
            model,
            Loss.squared(),
            config.loss_bound,
            config.delta,
            RademacherEstimate(rad_loss, 0.0, 1, "analytic_linear"),
        )
        resid = config.resid
        raw = theorem3_bound(config.delta, resid.miss_prob, config.m, clamp=False)
        bound = theorem3_bound(config.delta, resid.miss_prob, config.m)
        plugins = {"threshold": threshold, "rad_loss": rad_loss, "resid_e": resid.half_width}

        X, Y = data.features, data.labels
        XtX = X.T @ X
        beta_hat = np.linalg.solve(XtX, X.T @ Y)
        radius = max(n * threshold - float(np.sum((X @ beta_hat - Y) ** 2)), 0.0)
        XtX_inv = np.linalg.inv(XtX)
        e = resid.half_width

        def builder(Xq):
            center = Xq @ beta_hat
            quad = np.einsum("ij,jk,ik->i", Xq, XtX_inv, Xq)
            span = np.sqrt(np.maximum(radius * quad, 0.0))
            return center - span - e, center + span + e

        return builder, bound, raw, plugins

    # method m4: pairs of good pinball-model sets, exact LP extremization
    from .usets import build_method4

    gsets = {}
    for tau in (config.delta_p, config.delta_q):
        model = fit_quantile(data, tau, config.norm_bound, config.fit)
        rad = _rad_base(config, data)
        lip = max(tau, 1.0 - tau)
        from .complexity import RademacherEstimate

        threshold = good_set_threshold_rademacher(
            data,
            model,
            Loss.pinball(tau),
            config.loss_bound,
            config.delta,
            RademacherEstimate(2.0 * lip * rad, 0.0, 1, "analytic_linear"),
        )
        gsets[tau] = GoodModelSet(
            model, Loss.pinball(tau), threshold, config.norm_bound, data
        )
    raw = theorem5_bound(
        config.delta,
        config.resid_p.miss_prob,
        config.resid_q.miss_prob,
        config.delta_p,
        config.delta_q,
        config.m,
        clamp=False,
    )
    bound = theorem5_bound(
        config.delta,
        config.resid_p.miss_prob,
        config.resid_q.miss_prob,
        config.delta_p,
        config.delta_q,
        config.m,
    )
    plugins = {
        "threshold_p": gsets[config.delta_p].threshold,
        "threshold_q": gsets[config.delta_q].threshold,
    }
    gset_p, gset_q = gsets[config.delta_p], gsets[config.delta_q]

    def builder(Xq):
        box = build_method4(
            gset_p, gset_q, QueryBatch(Xq), config.resid_p, config.resid_q
        )
        return box.lower, box.upper

    return builder, bound, raw, plugins


def _problem(config: PipelineConfig) -> PortfolioProblem:
    cov = np.eye(config.m) if config.covariance is None else config.covariance
    return PortfolioProblem(cov, config.min_return, config.long_only)


def _run_outer_trial(args):
    config, inner, trial_seed = args
    rng = np.random.default_rng(trial_seed)
    data = generate(config.synth, config.n, seed=int(rng.integers(2**63)))
    data = data.with_intercept()
    builder, bound, raw, plugins = _fit_for_trial(config, data)
    problem = _problem(config)

    successes = 0
    solver_infeasible = 0
    for _ in range(inner):
        Xq_raw = _draw_features(config.synth, config.m, rng)
        Xq = np.hstack([Xq_raw, np.ones((config.m, 1))])
        lower, upper = builder(Xq)
        lower, upper = np.minimum(lower, upper), np.maximum(lower, upper)
        from .core import BoxUncertaintySet

        solution = solve_box_robust(problem, BoxUncertaintySet(lower, upper))
        if solution.status != "optimal":
            solver_infeasible += 1
            continue
        labels = draw_labels(config.synth, Xq_raw, rng)
        if portfolio_feasible(problem, solution.weights, labels, tol=1e-8):
            successes += 1
    return successes, solver_infeasible, bound, raw, plugins


def monte_carlo_feasibility(
    config: PipelineConfig,
    outer: int,
    inner: int,
    seed: int = 0,
    jobs: int = 1,
) -> GuaranteeReport:
    """Estimate joint feasibility empirically and compare against the matching
    theorem bound.

    The per-trial bound depends on the drawn sample for theorems 1 and 2; the
    reported bound is (1 - delta) times the across-trial mean, which accounts
    for the delta-probability of samples on which the bound may not hold.
    """
    if outer < 1 or inner < 1:
        raise ValueError("outer and inner must be >= 1")
    seeds = np.random.SeedSequence(seed).spawn(outer)
    tasks = [(config, inner, s) for s in seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_outer_trial, tasks, chunksize=1))
    else:
        results = [_run_outer_trial(task) for task in tasks]

    successes = sum(r[0] for r in results)
    solver_infeasible = sum(r[1] for r in results)
    bounds = np.array([r[2] for r in results])
    raws = np.array([r[3] for r in results])
    plugins = {
        key: float(np.mean([r[4][key] for r in results])) for key in results[0][4]
    }
    plugins["per_trial_bound_mean"] = float(bounds.mean())
    plugins["per_trial_bound_min"] = float(bounds.min())

    if config.method in ("m1", "m2"):
        bound = float((1.0 - config.delta) * bounds.mean())
        raw_bound = float(raws.mean())
    else:
        bound = float(bounds.mean())
        raw_bound = float(raws.mean())

    trials = outer * inner
    empirical = successes / trials
    ci = wilson_interval(successes, trials)
    vacuous = raw_bound <= 0.0
    return GuaranteeReport(
        theorem_id=_THEOREM_OF_METHOD[config.method],
        bound=bound,
        raw_bound=raw_bound,
        empirical=empirical,
        wilson_ci=ci,
        outer_trials=outer,
        inner_trials=inner,
        passed=bool(bound <= ci[1]),
        vacuous=bool(vacuous),
        solver_infeasible=solver_infeasible,
        plugins=plugins,
    )
