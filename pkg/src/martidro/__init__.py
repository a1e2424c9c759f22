"""Optimal-transport DRO with exact and relaxed martingale coupling constraints."""

from .core import (
    Dataset,
    LogisticLoss,
    QuadraticLoss,
    RobustnessConfig,
    encode_regression,
    regression_beta,
    regression_coef,
)
from .dual import (
    DualityReport,
    DualPoint,
    TwoPointCoupling,
    dual_value,
    primal_lower_bound,
    quadratic_inner_sup,
    verify_duality,
)
from .estimators import AdversarialMLPClassifier, MartingaleDRORegressor
from .mnorm import WeightMatrix
from .objectives import (
    ObjectiveReport,
    conventional_dro_value,
    convex_loss_bounds,
    empirical_risk,
    exact_martingale_value,
    perturbed_value,
)
from .regularizer import (
    SplitSolution,
    slack_penalty,
    slack_penalty_subgrad,
    solve_l1_l2_split,
)
from .solver import SolveTrace, full_subgradient, ols_solution, ridge_solution, solve

__version__ = "0.1.0"

__all__ = [
    "AdversarialMLPClassifier",
    "Dataset",
    "DualPoint",
    "DualityReport",
    "LogisticLoss",
    "MartingaleDRORegressor",
    "ObjectiveReport",
    "QuadraticLoss",
    "RobustnessConfig",
    "SolveTrace",
    "SplitSolution",
    "TwoPointCoupling",
    "WeightMatrix",
    "conventional_dro_value",
    "convex_loss_bounds",
    "dual_value",
    "empirical_risk",
    "encode_regression",
    "exact_martingale_value",
    "full_subgradient",
    "ols_solution",
    "perturbed_value",
    "primal_lower_bound",
    "quadratic_inner_sup",
    "regression_beta",
    "regression_coef",
    "ridge_solution",
    "slack_penalty",
    "slack_penalty_subgrad",
    "solve",
    "solve_l1_l2_split",
    "verify_duality",
]
