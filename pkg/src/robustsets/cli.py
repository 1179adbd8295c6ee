"""Command-line interface: data generation, set construction, robust solving
and guarantee validation.

Every command is deterministic given its settings and seed.  Settings come
from built-in defaults, overridden by a flat key=value --config file,
overridden in turn by explicit command-line flags.  Exit codes: 0 for success
(including expected infeasibility), 1 for a guarantee failure, 2 for usage or
configuration errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from .complexity import RademacherEstimate, linear_class_bounds
from .core import BoxUncertaintySet, Dataset, PortfolioProblem, QueryBatch
from .learners import (
    FitConfig,
    Loss,
    empirical_loss,
    fit_interval_function,
    fit_least_squares,
    fit_quantile,
)
from .robust import solve_box_robust
from .usets import (
    GoodModelSet,
    ResidualSupport,
    build_gi_baseline,
    build_method1,
    build_method2,
    build_method3,
    build_method4,
    build_pacbayes_set,
    extremize_prediction,
    good_set_threshold_finite,
    good_set_threshold_rademacher,
)
from .validate import (
    PipelineConfig,
    SynthSpec,
    generate,
    monte_carlo_feasibility,
)
from .core import LinearModel

_FLOAT_FMT = "%.17g"

METHODS = ("m1", "m2", "m3", "m4", "finite", "pacbayes", "gi")


class UsageError(Exception):
    """Configuration or input problem; maps to exit code 2."""


def _load_config(path: str | None) -> dict[str, str]:
    if path is None:
        return {}
    settings = {}
    try:
        with open(path) as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise UsageError(f"{path}:{lineno}: expected key=value, got {line!r}")
                key, value = line.split("=", 1)
                settings[key.strip()] = value.strip()
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}") from exc
    return settings


def _setting(args, config: dict, key: str, cast, default):
    """CLI flag beats config file beats default."""
    flag = getattr(args, key.replace("-", "_"), None)
    if flag is not None:
        return flag
    if key in config:
        try:
            return cast(config[key])
        except (TypeError, ValueError) as exc:
            raise UsageError(f"config key {key}: {exc}") from exc
    return default


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_floats(text: str) -> np.ndarray:
    try:
        return np.array([float(tok) for tok in text.split(",") if tok.strip() != ""])
    except ValueError as exc:
        raise UsageError(f"bad float list {text!r}: {exc}") from exc


def _read_table(path: str, expect_label: bool):
    """CSV with header x1..xd[,y]; raises UsageError with the offending line."""
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            rows = list(reader)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise UsageError(f"{path}: empty file")
    header = rows[0]
    has_label = header and header[-1] == "y"
    if expect_label and not has_label:
        raise UsageError(f"{path}:1: expected a trailing 'y' column in the header")
    d = len(header) - (1 if has_label else 0)
    if d < 1:
        raise UsageError(f"{path}:1: no feature columns")
    data = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise UsageError(
                f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}"
            )
        try:
            data.append([float(tok) for tok in row])
        except ValueError as exc:
            raise UsageError(f"{path}:{lineno}: {exc}") from exc
    table = np.array(data, dtype=float)
    if table.shape[0] < 1:
        raise UsageError(f"{path}: no data rows")
    if has_label:
        return table[:, :d], table[:, d]
    return table, None


def _write_json(path: str, payload: dict) -> None:
    try:
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc}") from exc


def _synth_from(args, config) -> SynthSpec:
    kind = _setting(args, config, "kind", str, "linear_gaussian")
    d = _setting(args, config, "d", int, 2)
    coeffs_text = _setting(args, config, "coeffs", str, None)
    if coeffs_text is None:
        coeffs = np.ones(d)
    else:
        coeffs = _parse_floats(coeffs_text)
        if coeffs.shape[0] != d:
            raise UsageError(f"coeffs has {coeffs.shape[0]} entries but d={d}")
    noise = _setting(args, config, "noise", float, 1.0)
    seed = _setting(args, config, "seed", int, 0)
    offset = _setting(args, config, "bimodal-offset", float, 2.0)
    try:
        return SynthSpec(kind, d, coeffs, noise, seed=seed, bimodal_offset=offset)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def cmd_gen_data(args, config) -> int:
    spec = _synth_from(args, config)
    n = _setting(args, config, "n", int, 100)
    out = _setting(args, config, "out", str, None)
    if out is None:
        raise UsageError("gen-data needs --out")
    if n < 1:
        raise UsageError("n must be >= 1")
    data = generate(spec, n)
    header = ",".join([f"x{j + 1}" for j in range(spec.d)] + ["y"])
    table = np.hstack([data.features, data.labels[:, None]])
    try:
        np.savetxt(out, table, delimiter=",", header=header, comments="", fmt=_FLOAT_FMT)
    except OSError as exc:
        raise UsageError(f"cannot write {out}: {exc}") from exc
    print(f"gen-data: wrote {n} rows (d={spec.d}, kind={spec.kind}) to {out}")
    return 0


def _random_class(d: int, size: int, norm_bound: float, seed: int) -> list[LinearModel]:
    rng = np.random.default_rng(seed)
    models = []
    for _ in range(size):
        beta = rng.normal(size=d)
        norm = np.linalg.norm(beta)
        if norm > norm_bound:
            beta *= norm_bound / norm
        models.append(LinearModel(beta, norm_bound))
    return models


def _box_over_members(
    members: list[LinearModel], queries: QueryBatch, margin: float
) -> BoxUncertaintySet:
    preds = np.stack([model.predict(queries.features) for model in members])
    return BoxUncertaintySet(preds.min(axis=0) - margin, preds.max(axis=0) + margin)


def cmd_build_set(args, config) -> int:
    method = _setting(args, config, "method", str, None)
    if method not in METHODS:
        raise UsageError(
            f"unknown method {method!r}; choose one of {', '.join(METHODS)}"
        )
    out = _setting(args, config, "out", str, None)
    if out is None:
        raise UsageError("build-set needs --out")
    X, y = _read_table(args.train, expect_label=True)
    Q, _ = _read_table(args.query, expect_label=False)
    if Q.shape[1] != X.shape[1]:
        raise UsageError(
            f"query has {Q.shape[1]} feature columns but training data has {X.shape[1]}"
        )
    data = Dataset(X, y)
    queries = QueryBatch(Q)
    if _setting(args, config, "intercept", _parse_bool, True):
        data = data.with_intercept()
        queries = queries.with_intercept()

    norm_bound = _setting(args, config, "norm-bound", float, 10.0)
    delta = _setting(args, config, "delta", float, 0.05)
    delta_e = _setting(args, config, "delta-e", float, 0.05)
    delta_p = _setting(args, config, "delta-p", float, 0.05)
    delta_q = _setting(args, config, "delta-q", float, 0.95)
    target_miss = _setting(args, config, "target-miss", float, 0.05)
    loss_bound = _setting(args, config, "loss-bound", float, 4.0)
    resid_e = _setting(args, config, "resid-e", float, 0.0)
    seed = _setting(args, config, "seed", int, 0)
    class_size = _setting(args, config, "class-size", int, 50)
    for name, value in (
        ("delta", delta),
        ("delta-e", delta_e),
        ("delta-p", delta_p),
        ("delta-q", delta_q),
    ):
        if not 0.0 < value < 1.0:
            raise UsageError(f"{name} must lie in (0, 1)")
    if not delta_p < delta_q:
        raise UsageError("delta-p must be below delta-q")
    fit_cfg = FitConfig(max_iters=500, restarts=1, seed=seed)
    X_b = float(np.max(np.linalg.norm(data.features, axis=1)))
    diagnostics: dict = {}

    if method == "m1":
        fit = fit_interval_function(data, target_miss, norm_bound, fit_cfg)
        box = build_method1(fit.interval, queries)
        rad, _ = linear_class_bounds(X_b, norm_bound, data.n)
        diagnostics = {
            "miss_rate": fit.miss_rate,
            "half_width": fit.interval.half_width,
            "rademacher": rad,
        }
    elif method == "m2":
        lo_model = fit_quantile(data, delta_p, norm_bound, fit_cfg)
        hi_model = fit_quantile(data, delta_q, norm_bound, fit_cfg)
        box = build_method2(lo_model, hi_model, queries)
        rad, _ = linear_class_bounds(X_b, norm_bound, data.n)
        diagnostics = {"rademacher": rad}
    elif method == "m3":
        model = fit_least_squares(data, norm_bound, fit_cfg)
        rad_base, _ = linear_class_bounds(X_b, norm_bound, data.n)
        rad_loss = 2.0 * (4.0 * X_b * norm_bound) * rad_base
        threshold = good_set_threshold_rademacher(
            data,
            model,
            Loss.squared(),
            loss_bound,
            delta,
            RademacherEstimate(rad_loss, 0.0, 1, "analytic_linear"),
        )
        gset = GoodModelSet(model, Loss.squared(), threshold, norm_bound, data)
        box = build_method3(gset, queries, ResidualSupport(resid_e, delta_e))
        diagnostics = {"thresholds": [threshold], "rademacher": rad_loss}
    elif method == "m4":
        gsets = []
        for tau in (delta_p, delta_q):
            model = fit_quantile(data, tau, norm_bound, fit_cfg)
            rad_base, _ = linear_class_bounds(X_b, norm_bound, data.n)
            lip = max(tau, 1.0 - tau)
            threshold = good_set_threshold_rademacher(
                data,
                model,
                Loss.pinball(tau),
                loss_bound,
                delta,
                RademacherEstimate(2.0 * lip * rad_base, 0.0, 1, "analytic_linear"),
            )
            gsets.append(GoodModelSet(model, Loss.pinball(tau), threshold, norm_bound, data))
        resid = ResidualSupport(resid_e, delta_e)
        box = build_method4(gsets[0], gsets[1], queries, resid, resid)
        diagnostics = {"thresholds": [g.threshold for g in gsets]}
    elif method == "finite":
        models = _random_class(data.d, class_size, norm_bound, seed)
        best = min(models, key=lambda mdl: empirical_loss(mdl, data, Loss.squared()))
        threshold = good_set_threshold_finite(
            data, best, Loss.squared(), loss_bound, delta, class_size
        )
        members = [
            mdl
            for mdl in models
            if empirical_loss(mdl, data, Loss.squared()) <= threshold
        ]
        box = _box_over_members(members, queries, resid_e)
        diagnostics = {"thresholds": [threshold], "members": len(members)}
    elif method == "pacbayes":
        models = _random_class(data.d, class_size, norm_bound, seed)
        prior = np.full(class_size, 1.0 / class_size)
        C = _setting(args, config, "pacbayes-c", float, 1.0)
        alpha = _setting(args, config, "pacbayes-alpha", float, -5.0)
        members = build_pacbayes_set(data, models, prior, C, alpha)
        if not members:
            print(
                "build-set: PAC-Bayes set is empty at this (C, alpha); "
                "no box can be produced",
                file=sys.stderr,
            )
            return 1
        box = _box_over_members(members, queries, resid_e)
        diagnostics = {"members": len(members)}
    else:  # gi
        sigma_text = _setting(args, config, "sigma", str, None)
        sigma = None if sigma_text in (None, "", "estimate") else float(sigma_text)
        confidence = _setting(args, config, "confidence", float, 0.95)
        box, diagnostics = build_gi_baseline(data, sigma, delta_e, confidence, queries)

    payload = {
        "method": method,
        "lower": [float(v) for v in box.lower],
        "upper": [float(v) for v in box.upper],
        "diagnostics": diagnostics,
    }
    _write_json(out, payload)
    print(f"build-set: method={method} box over {box.m} queries written to {out}")
    return 0


def cmd_solve(args, config) -> int:
    out = _setting(args, config, "out", str, None)
    if out is None:
        raise UsageError("solve needs --out")
    try:
        with open(args.box) as fh:
            box_payload = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read box file {args.box}: {exc}") from exc
    try:
        box = BoxUncertaintySet(box_payload["lower"], box_payload["upper"])
    except (KeyError, ValueError) as exc:
        raise UsageError(f"bad box file {args.box}: {exc}") from exc

    if args.cov is not None:
        cov_table, _ = _read_table(args.cov, expect_label=False)
        cov = cov_table
    else:
        cov = np.eye(box.m)
    min_return = _setting(args, config, "min-return", float, 0.0)
    long_only = _setting(args, config, "long-only", _parse_bool, True)
    try:
        problem = PortfolioProblem(cov, min_return, long_only)
        solution = solve_box_robust(problem, box)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc

    payload = {
        "weights": [float(w) for w in solution.weights],
        "objective": None if np.isnan(solution.objective) else float(solution.objective),
        "status": solution.status,
        "kkt_residual": None
        if not np.isfinite(solution.kkt_residual)
        else float(solution.kkt_residual),
        "message": solution.message,
    }
    _write_json(out, payload)
    print(f"solve: status={solution.status} objective={payload['objective']} -> {out}")
    return 0


def cmd_validate(args, config) -> int:
    method = _setting(args, config, "method", str, "m1")
    if method not in ("m1", "m2", "m3", "m4"):
        raise UsageError("validate supports methods m1, m2, m3, m4")
    out = _setting(args, config, "out", str, None)
    if out is None:
        raise UsageError("validate needs --out (prefix for .json/.csv)")
    spec = _synth_from(args, config)
    sweep = _setting(args, config, "sweep-n", str, None)
    if sweep is not None:
        n_values = [int(v) for v in _parse_floats(sweep)]
    else:
        n_values = [_setting(args, config, "n", int, 2000)]
    m = _setting(args, config, "m", int, 3)
    delta = _setting(args, config, "delta", float, 0.05)
    eps = _setting(args, config, "eps", float, 0.1)
    delta_p = _setting(args, config, "delta-p", float, 0.05)
    delta_q = _setting(args, config, "delta-q", float, 0.95)
    target_miss = _setting(args, config, "target-miss", float, 0.05)
    norm_bound = _setting(args, config, "norm-bound", float, 10.0)
    loss_bound = _setting(args, config, "loss-bound", float, 4.0)
    min_return = _setting(args, config, "min-return", float, -10.0)
    long_only = _setting(args, config, "long-only", _parse_bool, True)
    outer = _setting(args, config, "outer", int, 50)
    inner = _setting(args, config, "inner", int, 100)
    seed = _setting(args, config, "seed", int, 0)
    jobs = _setting(args, config, "jobs", int, 1)
    resid_e = _setting(args, config, "resid-e", float, 0.0)
    delta_e = _setting(args, config, "delta-e", float, 0.05)

    resid = ResidualSupport(resid_e, delta_e)
    extra = {}
    if method == "m3":
        extra["resid"] = resid
    if method == "m4":
        extra["resid_p"] = resid
        extra["resid_q"] = resid

    reports = []
    for n in n_values:
        pipeline = PipelineConfig(
            method=method,
            synth=spec,
            n=n,
            m=m,
            delta=delta,
            eps=eps,
            delta_p=delta_p,
            delta_q=delta_q,
            target_miss=target_miss,
            norm_bound=norm_bound,
            loss_bound=loss_bound,
            min_return=min_return,
            long_only=long_only,
            fit=FitConfig(max_iters=300, restarts=0, seed=seed),
            **extra,
        )
        report = monte_carlo_feasibility(pipeline, outer, inner, seed=seed, jobs=jobs)
        reports.append((n, report))

    json_path, csv_path = out + ".json", out + ".csv"
    _write_json(
        json_path,
        {
            "method": method,
            "reports": [
                {"n": n, **json.loads(report.to_json())} for n, report in reports
            ],
        },
    )
    try:
        with open(csv_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["n", "bound", "empirical", "wilson_lo", "wilson_hi", "vacuous", "pass"]
            )
            for n, report in reports:
                writer.writerow(
                    [
                        n,
                        _FLOAT_FMT % report.bound,
                        _FLOAT_FMT % report.empirical,
                        _FLOAT_FMT % report.wilson_ci[0],
                        _FLOAT_FMT % report.wilson_ci[1],
                        int(report.vacuous),
                        int(report.passed),
                    ]
                )
    except OSError as exc:
        raise UsageError(f"cannot write {csv_path}: {exc}") from exc

    failures = [n for n, r in reports if not r.vacuous and not r.passed]
    summary = "; ".join(
        f"n={n}: bound={r.bound:.4f} empirical={r.empirical:.4f}"
        + (" (vacuous)" if r.vacuous else "" if r.passed else " FAIL")
        for n, r in reports
    )
    print(f"validate: method={method} {summary} -> {json_path}, {csv_path}")
    return 1 if failures else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="robustsets",
        description="Learned uncertainty sets and robust portfolio allocation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="flat key=value settings file")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--out", help="output path")

    p_gen = sub.add_parser("gen-data", help="write a synthetic CSV sample")
    add_common(p_gen)
    p_gen.add_argument("--kind", choices=("linear_gaussian", "heteroscedastic", "bimodal"))
    p_gen.add_argument("--d", type=int)
    p_gen.add_argument("--n", type=int)
    p_gen.add_argument("--coeffs", help="comma-separated true coefficients")
    p_gen.add_argument("--noise", type=float)
    p_gen.add_argument("--bimodal-offset", type=float)

    p_build = sub.add_parser("build-set", help="construct a box uncertainty set")
    add_common(p_build)
    p_build.add_argument("--train", required=True, help="training CSV (x1..xd,y)")
    p_build.add_argument("--query", required=True, help="query CSV (x1..xd)")
    p_build.add_argument("--method", choices=METHODS)
    p_build.add_argument("--norm-bound", type=float)
    p_build.add_argument("--delta", type=float)
    p_build.add_argument("--delta-e", type=float)
    p_build.add_argument("--delta-p", type=float)
    p_build.add_argument("--delta-q", type=float)
    p_build.add_argument("--target-miss", type=float)
    p_build.add_argument("--loss-bound", type=float)
    p_build.add_argument("--resid-e", type=float)
    p_build.add_argument("--class-size", type=int)
    p_build.add_argument("--pacbayes-c", type=float)
    p_build.add_argument("--pacbayes-alpha", type=float)
    p_build.add_argument("--sigma", help="noise sd for the gi method, or 'estimate'")
    p_build.add_argument("--confidence", type=float)
    p_build.add_argument("--intercept", type=_parse_bool)

    p_solve = sub.add_parser("solve", help="solve the robust portfolio problem")
    add_common(p_solve)
    p_solve.add_argument("--box", required=True, help="box JSON from build-set")
    p_solve.add_argument("--cov", help="covariance CSV; identity when omitted")
    p_solve.add_argument("--min-return", type=float)
    p_solve.add_argument("--long-only", type=_parse_bool)

    p_val = sub.add_parser("validate", help="Monte Carlo check of the guarantees")
    add_common(p_val)
    p_val.add_argument("--method", choices=("m1", "m2", "m3", "m4"))
    p_val.add_argument("--kind", choices=("linear_gaussian", "heteroscedastic", "bimodal"))
    p_val.add_argument("--d", type=int)
    p_val.add_argument("--coeffs")
    p_val.add_argument("--noise", type=float)
    p_val.add_argument("--n", type=int)
    p_val.add_argument("--sweep-n", help="comma-separated n values")
    p_val.add_argument("--m", type=int)
    p_val.add_argument("--delta", type=float)
    p_val.add_argument("--eps", type=float)
    p_val.add_argument("--delta-p", type=float)
    p_val.add_argument("--delta-q", type=float)
    p_val.add_argument("--delta-e", type=float)
    p_val.add_argument("--resid-e", type=float)
    p_val.add_argument("--target-miss", type=float)
    p_val.add_argument("--norm-bound", type=float)
    p_val.add_argument("--loss-bound", type=float)
    p_val.add_argument("--min-return", type=float)
    p_val.add_argument("--long-only", type=_parse_bool)
    p_val.add_argument("--outer", type=int)
    p_val.add_argument("--inner", type=int)
    p_val.add_argument("--jobs", type=int)

    return parser


_COMMANDS = {
    "gen-data": cmd_gen_data,
    "build-set": cmd_build_set,
    "solve": cmd_solve,
    "validate": cmd_validate,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors already; normalize other codes
        return 2 if exc.code not in (0,) else 0
    try:
        config = _load_config(args.config)
        return _COMMANDS[args.command](args, config)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
