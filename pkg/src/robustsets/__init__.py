"""Learned uncertainty sets for robust decision problems.

The package fits interval, quantile and good-model-set descriptions of label
uncertainty from data, turns them into box uncertainty sets at query points,
solves robust minimum-variance portfolio problems against those sets, and
validates the accompanying probabilistic feasibility guarantees by Monte
Carlo.
"""

from .complexity import (
    RademacherEstimate,
    contraction_bound,
    empirical_rademacher_linear,
    kernel_class_bound,
    linear_class_bounds,
    population_rademacher,
)
from .core import (
    BoxUncertaintySet,
    Dataset,
    DecisionProblem,
    IntervalFunction,
    LinearModel,
    PortfolioProblem,
    QueryBatch,
    portfolio_feasible,
)
from .distributions import (
    chi2_cdf,
    chi2_quantile,
    f_cdf,
    f_quantile,
    normal_cdf,
    normal_quantile,
    quantile_by_bisection,
    regularized_beta,
    regularized_gamma_p,
)
from .learners import (
    FitConfig,
    IntervalFit,
    Loss,
    empirical_loss,
    fit_interval_function,
    fit_least_squares,
    fit_quantile,
    pinball_loss,
)
from .robust import (
    RobustSolution,
    hit_and_run,
    sample_uniform_box,
    solve_box_robust,
    solve_nominal,
    solve_scenario_robust,
)
from .usets import (
    ExtremeInterval,
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
    GuaranteeReport,
    PipelineConfig,
    SynthSpec,
    draw_labels,
    generate,
    monte_carlo_feasibility,
    oracle_best_in_class,
    r_minus_eps,
    r_plus_eps,
    residual_support_estimate,
    theorem1_bound,
    theorem2_bound,
    theorem3_bound,
    theorem5_bound,
    wilson_interval,
)

__version__ = "0.1.0"
