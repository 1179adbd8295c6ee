"""Robust counterparts of the portfolio problem plus the samplers used by the
scenario route.

Quadratic programs are solved with cvxopt's interior point method; every
returned solution carries a KKT residual computed from the primal/dual pair,
and a solution is only reported optimal when that residual clears the module
tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from cvxopt import matrix as cvx_matrix
from cvxopt import solvers as cvx_solvers

from .core import BoxUncertaintySet, PortfolioProblem, SOLVER_KKT_TOL

_CVX_OPTIONS = {
    "show_progress": False,
    "abstol": 1e-10,
    "reltol": 1e-10,
    "feastol": 1e-9,
    "maxiters": 200,
}


@dataclass(frozen=True)
class RobustSolution:
    weights: np.ndarray
    objective: float
    status: str  # "optimal", "infeasible" or "max_iter"
    kkt_residual: float
    message: str = ""

    def __post_init__(self):
        object.__setattr__(self, "weights", np.array(self.weights, dtype=float))
        if self.status not in ("optimal", "infeasible", "max_iter"):
            raise ValueError(f"unknown status {self.status!r}")


def _kkt_residual(P, q, G, h, A, b, x, z, y) -> float:
    stationarity = P @ x + q + G.T @ z + A.T @ y
    slack = G @ x - h
    residual = max(
        float(np.max(np.abs(stationarity))),
        float(np.max(np.abs(A @ x - b))),
        float(max(np.max(slack), 0.0)),
        float(max(np.max(-z), 0.0)) if z.size else 0.0,
        float(np.max(np.abs(z * slack))) if z.size else 0.0,
    )
    return residual


def _solve_qp(P, q, G, h, A, b, kkt_tol: float = SOLVER_KKT_TOL):
    """cvxopt wrapper returning (x, z, y, status, kkt_residual, message)."""
    P_reg = P + 1e-12 * np.eye(P.shape[0])  # keeps the KKT system factorizable
    old = dict(cvx_solvers.options)
    cvx_solvers.options.update(_CVX_OPTIONS)
    try:
        sol = cvx_solvers.qp(
            cvx_matrix(P_reg),
            cvx_matrix(q),
            cvx_matrix(G),
            cvx_matrix(h),
            cvx_matrix(A),
            cvx_matrix(b),
        )
    except (ValueError, ZeroDivisionError, ArithmeticError) as exc:
        return None, None, None, "infeasible", np.inf, f"solver failure: {exc}"
    finally:
        cvx_solvers.options.clear()
        cvx_solvers.options.update(old)

    if sol["status"] == "primal infeasible":
        return None, None, None, "infeasible", np.inf, "primal infeasibility certificate"
    x = np.asarray(sol["x"]).ravel()
    z = np.asarray(sol["z"]).ravel()
    y = np.asarray(sol["y"]).ravel()
    residual = _kkt_residual(P, q, G, h, A, b, x, z, y)
    if sol["status"] == "optimal" and residual <= kkt_tol:
        return x, z, y, "optimal", residual, ""
    status = "max_iter" if sol["status"] in ("optimal", "unknown") else "infeasible"
    return x, z, y, status, residual, f"cvxopt status {sol['status']}"


def solve_box_robust(
    problem: PortfolioProblem, box: BoxUncertaintySet
) -> RobustSolution:
    """Exact counterpart for box uncertainty.

    The worst case of y'pi over the box is l'pi+ - u'pi- for the split
    pi = pi+ - pi-; with long-only weights it is simply l'pi.
    """
    m = problem.dimension
    if box.m != m:
        raise ValueError("box dimension does not match the problem")
    Sigma = problem.covariance
    c = problem.min_return
    lower, upper = box.lower, box.upper

    if problem.long_only:
        if lower.max() < c - 1e-12:
            return RobustSolution(
                np.full(m, np.nan),
                np.nan,
                "infeasible",
                np.inf,
                f"best single-asset worst-case return {lower.max():.6g} < c = {c:.6g}",
            )
        P = 2.0 * Sigma
        q = np.zeros(m)
        G = np.vstack([-np.eye(m), -lower])
        h = np.concatenate([np.zeros(m), [-c]])
        A = np.ones((1, m))
        b = np.ones(1)
        x, _, _, status, residual, message = _solve_qp(P, q, G, h, A, b)
        weights = x if x is not None else np.full(m, np.nan)
    else:
        # feasibility pre-check: maximize the worst-case return over the
        # budget set; if even that stays below c the problem is infeasible
        # (cvxopt cannot certify this reliably on the singular split QP)
        from scipy.optimize import linprog

        lp = linprog(
            np.concatenate([-lower, upper]),
            A_eq=np.concatenate([np.ones(m), -np.ones(m)]).reshape(1, -1),
            b_eq=[1.0],
            bounds=[(0.0, None)] * (2 * m),
            method="highs",
        )
        if lp.status == 0 and -lp.fun < c - 1e-9:
            return RobustSolution(
                np.full(m, np.nan),
                np.nan,
                "infeasible",
                np.inf,
                f"best achievable worst-case return {-lp.fun:.6g} < c = {c:.6g}",
            )
        P = 2.0 * np.block([[Sigma, -Sigma], [-Sigma, Sigma]])
        q = np.zeros(2 * m)
        worst_case_row = np.concatenate([-lower, upper])
        G = np.vstack([-np.eye(2 * m), worst_case_row])
        h = np.concatenate([np.zeros(2 * m), [-c]])
        A = np.concatenate([np.ones(m), -np.ones(m)]).reshape(1, -1)
        b = np.ones(1)
        x, _, _, status, residual, message = _solve_qp(P, q, G, h, A, b)
        weights = x[:m] - x[m:] if x is not None else np.full(m, np.nan)

    objective = problem.objective(weights) if status != "infeasible" else np.nan
    return RobustSolution(weights, objective, status, residual, message)


def solve_scenario_robust(
    problem: PortfolioProblem, scenarios: np.ndarray
) -> RobustSolution:
    """Sampled counterpart: one return-floor constraint per scenario row."""
    scenarios = np.atleast_2d(np.asarray(scenarios, dtype=float))
    m = problem.dimension
    if scenarios.shape[1] != m:
        raise ValueError("scenario dimension does not match the problem")
    c = problem.min_return
    P = 2.0 * problem.covariance
    q = np.zeros(m)
    G_rows = [-scenarios]
    h_parts = [np.full(scenarios.shape[0], -c)]
    if problem.long_only:
        G_rows.append(-np.eye(m))
        h_parts.append(np.zeros(m))
    G = np.vstack(G_rows)
    h = np.concatenate(h_parts)
    A = np.ones((1, m))
    b = np.ones(1)
    x, _, _, status, residual, message = _solve_qp(P, q, G, h, A, b)
    weights = x if x is not None else np.full(m, np.nan)
    objective = problem.objective(weights) if status != "infeasible" else np.nan
    return RobustSolution(weights, objective, status, residual, message)


def solve_nominal(problem: PortfolioProblem, returns: np.ndarray) -> RobustSolution:
    """Non-robust problem: a single known return vector."""
    return solve_scenario_robust(problem, np.asarray(returns, dtype=float)[None, :])


def sample_uniform_box(box: BoxUncertaintySet, count: int, seed: int = 0) -> np.ndarray:
    """I.i.d. per-coordinate uniform draws from the box."""
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    return rng.uniform(box.lower, box.upper, size=(count, box.m))


def _chord_end(membership, point: np.ndarray, direction: np.ndarray, tol: float) -> float:
    """Largest step along ``direction`` staying in the set, by doubling then
    bisection."""
    hi = 1.0
    for _ in range(120):
        if not membership(point + hi * direction):
            break
        hi *= 2.0
    else:
        raise RuntimeError("set appears unbounded along a sampled direction")
    lo = 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if membership(point + mid * direction):
            lo = mid
        else:
            hi = mid
    return lo


def hit_and_run(
    membership,
    start: np.ndarray,
    count: int,
    burn_in: int = 100,
    thin: int = 1,
    seed: int = 0,
    chord_tol: float = 1e-10,
) -> np.ndarray:
    """Geometric random walk over a bounded convex set given by a membership
    oracle: uniform direction on the sphere, then a uniform point on the chord
    through the current state.  Zero-width chords are redrawn.
    """
    start = np.asarray(start, dtype=float)
    if not membership(start):
        raise ValueError("start point is not a member of the set")
    if count < 1 or thin < 1 or burn_in < 0:
        raise ValueError("count >= 1, thin >= 1 and burn_in >= 0 required")
    rng = np.random.default_rng(seed)
    dim = start.shape[0]
    samples = np.empty((count, dim))
    x = start.copy()
    kept = 0
    steps = 0
    while kept < count:
        direction = rng.standard_normal(dim)
        norm = np.linalg.norm(direction)
        if norm == 0.0:
            continue
        direction /= norm
        t_hi = _chord_end(membership, x, direction, chord_tol)
        t_lo = -_chord_end(membership, x, -direction, chord_tol)
        if t_hi - t_lo <= chord_tol:
            continue  # degenerate chord; draw a fresh direction
        candidate = x + rng.uniform(t_lo, t_hi) * direction
        if not membership(candidate):
            continue  # boundary rounding; redraw
        x = candidate
        steps += 1
        if steps > burn_in and (steps - burn_in) % thin == 0:
            samples[kept] = x
            kept += 1
    return samples
