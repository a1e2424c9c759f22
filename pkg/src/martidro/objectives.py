"""Closed-form worst-case objective values for linear models.

For a quadratic loss with curvature ``gamma`` the worst-case expected loss
over a transport ball of radius ``rho`` around the sample admits closed forms
depending on the coupling constraint:

* mean-preserving coupling enforced exactly:
  ``empirical + (gamma*rho/2) * dual_norm(beta)^2``  (a Tikhonov penalty);
* no coupling constraint:
  ``(sqrt(empirical) + sqrt(gamma*rho/2) * dual_norm(beta))^2``;
* slack ``epsilon`` in between: the Tikhonov form plus the exact penalty
  from :mod:`martidro.regularizer`, which interpolates the two extremes.

For merely convex losses only a curvature sandwich is available.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._validation import as_vector
from .core import Dataset, RobustnessConfig, check_quadratic
from .errors import InvalidConstants, NonpositiveRho
from .mnorm import WeightMatrix
from .regularizer import slack_penalty


@dataclass(frozen=True)
class ObjectiveReport:
    """Additive decomposition of the worst-case value."""

    empirical_loss: float
    tikhonov_term: float
    penalty_term: float
    total: float
    regime: str


def empirical_risk(beta, data: Dataset, loss) -> float:
    """Average loss of the linear score over the sample."""
    beta = as_vector(beta, "beta", dim=data.n_features)
    return float(np.mean(loss.value(data.features @ beta)))


def exact_martingale_value(beta, data: Dataset, weight: WeightMatrix, rho: float, loss) -> float:
    """Worst case under the exact mean-preserving coupling (quadratic loss)."""
    loss = check_quadratic(loss)
    if rho < 0:
        raise NonpositiveRho(f"rho must be >= 0, got {rho}")
    bnorm = weight.dual_norm(beta)
    return empirical_risk(beta, data, loss) + 0.5 * loss.gamma * rho * bnorm * bnorm


def conventional_dro_value(beta, data: Dataset, weight: WeightMatrix, rho: float, loss) -> float:
    """Worst case without any coupling constraint (square-root regularization)."""
    loss = check_quadratic(loss)
    if rho < 0:
        raise NonpositiveRho(f"rho must be >= 0, got {rho}")
    root = math.sqrt(empirical_risk(beta, data, loss)) + math.sqrt(0.5 * loss.gamma * rho) * weight.dual_norm(beta)
    return root * root


def perturbed_value(beta, data: Dataset, weight: WeightMatrix, cfg: RobustnessConfig) -> ObjectiveReport:
    """Worst case under a coupling whose conditional mean may drift by ``epsilon``.

    ``epsilon=0`` reproduces :func:`exact_martingale_value` exactly and
    ``epsilon >= sqrt(n*rho)`` reproduces :func:`conventional_dro_value`.
    ``rho=0`` pins the coupling to the diagonal, so the report degenerates to
    the empirical risk.
    """
    loss = check_quadratic(cfg.loss)
    emp = empirical_risk(beta, data, loss)
    if cfg.rho == 0:
        return ObjectiveReport(emp, 0.0, 0.0, emp, "none")
    bnorm = weight.dual_norm(beta)
    tik = 0.5 * loss.gamma * cfg.rho * bnorm * bnorm
    pen, sol = slack_penalty(beta, data, weight, cfg)
    return ObjectiveReport(emp, tik, pen, emp + tik + pen, sol.regime)


def convex_loss_bounds(
    beta, data: Dataset, weight: WeightMatrix, rho: float, loss, mu: float, smooth: float
) -> tuple[float, float]:
    """Curvature sandwich for the exact-coupling worst case of a convex loss.

    A loss that is ``mu``-strongly convex and ``smooth``-smooth yields

        empirical + mu*rho/2 * dual_norm(beta)^2
            <= worst case <=
        empirical + smooth*rho/2 * dual_norm(beta)^2.
    """
    if not (0 <= mu <= smooth):
        raise InvalidConstants(f"need 0 <= mu <= smooth, got mu={mu}, smooth={smooth}")
    if rho < 0:
        raise NonpositiveRho(f"rho must be >= 0, got {rho}")
    emp = empirical_risk(beta, data, loss)
    bn2 = weight.dual_norm(beta) ** 2
    return emp + 0.5 * mu * rho * bn2, emp + 0.5 * smooth * rho * bn2
