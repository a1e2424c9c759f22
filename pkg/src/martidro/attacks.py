"""Evaluation-time attacks and robustness metrics.

An attack oracle is any callable ``oracle(z, y) -> (losses, grads)`` mapping a
batch of inputs ``(n, d)`` and targets ``(n,)`` to per-sample losses ``(n,)``
and per-sample input gradients ``(n, d)``.  Adapters for the linear
regression model and the :class:`~martidro.advtrain.Mlp` are provided.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._validation import as_matrix, as_vector
from .core import Dataset
from .errors import DimensionMismatch

_P_NORMS = {"pgm": 2.0, "fgsm": math.inf}


@dataclass(frozen=True)
class AttackConfig:
    """Attack kind and budget.

    ``xi`` is the norm budget of the gradient attacks (``xi=0`` disables
    them); ``alpha`` scales the step before re-projection.  The penalized
    ascent attack ignores ``xi`` and trades perturbation size off against the
    quadratic penalty ``gamma``.
    """

    kind: str = "pgm"  # "pgm" (l2), "fgsm" (linf), or "dro" (penalized ascent)
    xi: float = 0.1
    alpha: float = 1.0
    gamma: float = 1.0
    steps: int | None = None

    def __post_init__(self):
        if self.kind not in ("pgm", "fgsm", "dro"):
            raise ValueError(f"unknown attack kind {self.kind!r}")
        if self.xi < 0:
            raise ValueError(f"xi must be >= 0, got {self.xi}")
        if self.kind == "dro" and not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        steps = self.steps if self.steps is not None else (1 if self.kind != "dro" else 100)
        object.__setattr__(self, "steps", int(steps))


def linear_regression_oracle(coef):
    """Squared-residual loss of a linear predictor, per sample."""
    coef = as_vector(coef, "coef")

    def oracle(z, y):
        z = as_matrix(z, "z")
        if z.shape[1] != coef.shape[0]:
            raise DimensionMismatch(f"expected {coef.shape[0]} features, got {z.shape[1]}")
        resid = z @ coef - np.asarray(y, dtype=float)
        return resid**2, 2.0 * resid[:, None] * coef[None, :]

    return oracle


def mlp_oracle(net, classes=None):
    """Cross-entropy loss of an :class:`~martidro.advtrain.Mlp`.

    ``classes`` maps raw target values to class indices; by default targets
    are taken to be indices already.
    """

    def oracle(z, y):
        y = np.asarray(y)
        labels = np.searchsorted(classes, y) if classes is not None else y.astype(int)
        return net.losses_and_input_grads(z, labels)

    return oracle


def _project(delta, xi, p):
    if p == 2.0:
        norms = np.linalg.norm(delta, axis=1)
        over = norms > xi
        if np.any(over):
            delta[over] *= (xi / norms[over])[:, None]
        return delta
    return np.clip(delta, -xi, xi)


def pgm_attack(oracle, z, y, cfg: AttackConfig) -> np.ndarray:
    """Gradient attack inside the ``xi``-ball (l2 for pgm, linf for fgsm).

    Each step moves by ``alpha`` times the steepest feasible direction of the
    linearized loss and re-projects onto the ball around the original input.
    Rows with an exactly zero gradient are left unchanged.  One step by
    default; returns points with ``norm(z_adv - z) <= xi`` exactly.
    """
    if cfg.kind not in ("pgm", "fgsm"):
        raise ValueError(f"pgm_attack got kind {cfg.kind!r}")
    z = as_matrix(np.atleast_2d(z), "z")
    if cfg.xi == 0:
        return z.copy()
    p = _P_NORMS[cfg.kind]
    z_adv = z.copy()
    for _ in range(cfg.steps):
        _, grads = oracle(z_adv, y)
        if p == 2.0:
            norms = np.linalg.norm(grads, axis=1)
            move = np.zeros_like(grads)
            ok = norms > 0
            move[ok] = cfg.xi * grads[ok] / norms[ok, None]
        else:
            move = cfg.xi * np.sign(grads)
        z_adv = z + _project(z_adv + cfg.alpha * move - z, cfg.xi, p)
    return z_adv


def dro_attack(oracle, z, y, cfg: AttackConfig) -> np.ndarray:
    """Ascent on ``loss(z') - gamma * ||z' - z||^2``; best iterate per row.

    Fixed step ``min(0.1 / gamma, 1)`` for a fixed number of steps; the
    schedule has no randomness, so results are reproducible.
    """
    if cfg.kind != "dro":
        raise ValueError(f"dro_attack got kind {cfg.kind!r}")
    z = as_matrix(np.atleast_2d(z), "z")
    step = min(0.1 / cfg.gamma, 1.0)
    cur = z.copy()
    losses, _ = oracle(z, y)
    best, best_val = z.copy(), losses - 0.0
    for _ in range(cfg.steps):
        losses, grads = oracle(cur, y)
        cur = cur + step * (grads - 2.0 * cfg.gamma * (cur - z))
        losses, _ = oracle(cur, y)
        vals = losses - cfg.gamma * np.sum((cur - z) ** 2, axis=1)
        improved = vals > best_val
        best[improved] = cur[improved]
        best_val[improved] = vals[improved]
    return best


def adversarial_rmse(coef, testset: Dataset, cfg: AttackConfig) -> float:
    """Root mean squared residual after attacking the feature rows.

    The regression targets are never perturbed; ``xi=0`` gives the clean
    RMSE.
    """
    if testset.targets is None:
        raise DimensionMismatch("test set needs targets")
    coef = as_vector(coef, "coef", dim=testset.n_features)
    oracle = linear_regression_oracle(coef)
    z = testset.features
    if cfg.xi > 0:
        z = pgm_attack(oracle, z, testset.targets, cfg)
    resid = z @ coef - testset.targets
    return float(np.sqrt(np.mean(resid**2)))
