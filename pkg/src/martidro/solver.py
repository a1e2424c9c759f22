"""Subgradient method for the slack-coupling worst-case objective.

The objective ``perturbed_value(beta)`` is convex in ``beta`` (a pointwise
supremum of convex functions), so a plain subgradient iteration with a
``step0 / sqrt(k+1)`` schedule converges; the best iterate by true objective
value is returned.  Coordinates frozen in the weight matrix (for regression,
the response coordinate whose coefficient is pinned to one) are held constant
during the iteration.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from ._validation import as_matrix, as_vector
from .core import Dataset, RobustnessConfig, check_quadratic
from .mnorm import WeightMatrix
from .objectives import perturbed_value
from .regularizer import slack_penalty_subgrad

_TUNING_STEPS = (1e-3, 1e-2, 1e-1)


def full_subgradient(beta, data: Dataset, weight: WeightMatrix, cfg: RobustnessConfig) -> np.ndarray:
    """Subgradient of the worst-case objective at ``beta`` (all coordinates).

    Sum of the empirical-risk gradient, the Tikhonov-term gradient
    ``gamma * rho * M^{-1} beta``, and a subgradient of the slack penalty.
    """
    loss = check_quadratic(cfg.loss)
    beta = as_vector(beta, "beta", dim=data.n_features)
    grad = data.features.T @ np.asarray(loss.grad(data.features @ beta)) / data.n_samples
    if cfg.rho > 0:
        grad = grad + loss.gamma * cfg.rho * weight.inv_apply(beta)
        if cfg.epsilon > 0:
            grad = grad + slack_penalty_subgrad(beta, data, weight, cfg)
    return grad


@dataclass(frozen=True)
class SolveTrace:
    """Sampled iterate history plus the best iterate by true objective."""

    history: list = field(default_factory=list)  # (iteration, objective, subgrad_norm)
    best_beta: np.ndarray = None
    best_value: float = math.inf
    wallclock: float = 0.0
    step0: float = 0.0


def _run(data, weight, cfg, beta0, free, iters, step0, record_every):
    objective = lambda b: perturbed_value(b, data, weight, cfg).total
    beta = beta0.copy()
    best_beta, best_value = beta.copy(), objective(beta)
    g0 = full_subgradient(beta, data, weight, cfg)
    g0[~free] = 0.0
    history = [(0, best_value, float(np.linalg.norm(g0)))]
    for k in range(iters):
        g = full_subgradient(beta, data, weight, cfg)
        g[~free] = 0.0
        beta = beta - (step0 / math.sqrt(k + 1.0)) * g
        val = objective(beta)
        is_best = val < best_value
        if is_best:
            best_value, best_beta = val, beta.copy()
        if is_best or (k + 1) % record_every == 0 or k + 1 == iters:
            history.append((k + 1, val, float(np.linalg.norm(g))))
    return best_beta, best_value, history


def solve(
    data: Dataset,
    weight: WeightMatrix,
    cfg: RobustnessConfig,
    init,
    iters: int = 20000,
    step0: float | None = None,
    record_every: int | None = None,
) -> SolveTrace:
    """Minimize the worst-case objective from ``init``; deterministic.

    ``step0=None`` auto-tunes the base step by running 100 iterations for
    each candidate in ``{1e-3, 1e-2, 1e-1}`` and keeping the best objective.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    check_quadratic(cfg.loss)
    beta0 = as_vector(init, "init", dim=data.n_features).copy()
    free = np.ones(data.n_features, dtype=bool)
    free[list(weight.fixed_coords)] = False
    if record_every is None:
        record_every = max(1, iters // 200)

    start = time.perf_counter()
    if step0 is None:
        trials = [
            (_run(data, weight, cfg, beta0, free, min(100, iters), s, record_every)[1], s)
            for s in _TUNING_STEPS
        ]
        step0 = min(trials)[1]
    best_beta, best_value, history = _run(data, weight, cfg, beta0, free, iters, step0, record_every)
    return SolveTrace(
        history=history,
        best_beta=best_beta,
        best_value=best_value,
        wallclock=time.perf_counter() - start,
        step0=step0,
    )


def ols_solution(z, y) -> np.ndarray:
    """Least-squares coefficients, the solver's default warm start."""
    z = as_matrix(z, "z")
    y = as_vector(y, "y", dim=z.shape[0])
    coef, *_ = np.linalg.lstsq(z, y, rcond=None)
    return coef


def ridge_solution(z, y, rho: float, q=None) -> np.ndarray:
    """Closed-form minimizer of ``mean((y - coef@z)^2) + rho * coef@q^{-1}@coef``.

    Normal equations: ``(z^T z / n + rho * q^{-1}) coef = z^T y / n``.
    """
    z = as_matrix(z, "z")
    y = as_vector(y, "y", dim=z.shape[0])
    n, d = z.shape
    q_inv = np.eye(d) if q is None else np.linalg.inv(np.asarray(q, dtype=float))
    return np.linalg.solve(z.T @ z / n + rho * q_inv, z.T @ y / n)
