"""Domain types: datasets, loss functions, and robustness configuration.

The worst-case objectives in this package are built from a sample of feature
vectors, a scalar convex loss applied to the linear score ``beta @ x``, and two
modeling knobs: the transport budget ``rho`` and the martingale slack
``epsilon``.  Everything here is immutable after construction so instances can
be shared freely across workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._validation import as_matrix, as_vector, readonly
from .errors import UnsupportedLoss


@dataclass(frozen=True)
class QuadraticLoss:
    """Convex quadratic loss ``(gamma / 2) * (t - shift)**2``.

    ``gamma`` is the (constant) second derivative.  Plain squared-error
    regression on residuals corresponds to ``gamma=2, shift=0``.
    """

    gamma: float = 2.0
    shift: float = 0.0

    def __post_init__(self):
        if not (self.gamma > 0 and math.isfinite(self.gamma)):
            raise ValueError(f"gamma must be positive and finite, got {self.gamma}")
        if not math.isfinite(self.shift):
            raise ValueError("shift must be finite")

    def value(self, t):
        t = np.asarray(t, dtype=float)
        return 0.5 * self.gamma * (t - self.shift) ** 2

    def grad(self, t):
        t = np.asarray(t, dtype=float)
        return self.gamma * (t - self.shift)

    def curvature(self, t):
        return np.full_like(np.asarray(t, dtype=float), self.gamma)


@dataclass(frozen=True)
class LogisticLoss:
    """Logistic loss ``log(1 + exp(-t))``, smooth with constant 1/4."""

    smoothness: float = field(default=0.25, init=False)

    def value(self, t):
        # log1p(exp(-t)) overflows for very negative t; branch on the sign.
        t = np.asarray(t, dtype=float)
        return np.where(t >= 0, np.log1p(np.exp(-np.abs(t))), np.log1p(np.exp(-np.abs(t))) - np.minimum(t, 0.0))

    def grad(self, t):
        # -sigmoid(-t), computed without overflow on either tail
        t = np.asarray(t, dtype=float)
        z = np.exp(-np.abs(t))
        return np.where(t >= 0, -z / (1.0 + z), -1.0 / (1.0 + z))

    def curvature(self, t):
        t = np.asarray(t, dtype=float)
        z = np.exp(-np.abs(t))
        return z / (1.0 + z) ** 2


Loss = QuadraticLoss | LogisticLoss


def check_quadratic(loss) -> QuadraticLoss:
    """Return ``loss`` if quadratic, else raise :class:`UnsupportedLoss`."""
    if not isinstance(loss, QuadraticLoss):
        raise UnsupportedLoss(f"closed form requires a quadratic loss, got {type(loss).__name__}")
    return loss


@dataclass(frozen=True)
class Dataset:
    """Immutable sample of feature vectors with optional targets.

    ``features`` is the ``(n, d)`` matrix whose rows carry the empirical
    measure; ``targets`` is an optional length-``n`` vector used by parsers,
    generators, and evaluation metrics.
    """

    features: np.ndarray
    targets: np.ndarray | None = None
    names: tuple[str, ...] | None = None

    def __post_init__(self):
        feats = readonly(as_matrix(self.features, "features"))
        if feats.shape[0] < 1 or feats.shape[1] < 1:
            raise ValueError(f"need at least one sample and one feature, got shape {feats.shape}")
        object.__setattr__(self, "features", feats)
        if self.targets is not None:
            tg = readonly(as_vector(self.targets, "targets", dim=feats.shape[0]))
            object.__setattr__(self, "targets", tg)
        if self.names is not None:
            object.__setattr__(self, "names", tuple(str(s) for s in self.names))

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class RobustnessConfig:
    """Modeling knobs: transport budget ``rho``, martingale slack ``epsilon``.

    ``epsilon=0`` enforces the mean-preserving (martingale) coupling exactly;
    ``epsilon=math.inf`` removes the constraint and recovers the conventional
    transport-ball model.
    """

    rho: float
    epsilon: float
    loss: Loss = field(default_factory=QuadraticLoss)

    def __post_init__(self):
        if not (self.rho >= 0 and math.isfinite(self.rho)):
            raise ValueError(f"rho must be finite and >= 0, got {self.rho}")
        if not (self.epsilon >= 0):  # +inf allowed
            raise ValueError(f"epsilon must be >= 0 (or inf), got {self.epsilon}")
        if not isinstance(self.loss, (QuadraticLoss, LogisticLoss)):
            raise UnsupportedLoss(f"unknown loss family: {type(self.loss).__name__}")


def encode_regression(z, y) -> Dataset:
    """Stack targets and features into joint rows ``x_i = (y_i, z_i)``.

    Linear regression with residual loss fits this package's linear-score
    form: with ``beta = (1, -coef)`` the score ``beta @ x`` equals the
    residual ``y - coef @ z``.  The first coordinate must then be declared
    non-transportable in the accompanying :class:`~martidro.mnorm.WeightMatrix`.
    """
    z = as_matrix(z, "z")
    y = as_vector(y, "y", dim=z.shape[0])
    return Dataset(np.column_stack([y, z]), targets=y)


def regression_beta(coef) -> np.ndarray:
    """Parameter vector ``(1, -coef)`` paired with :func:`encode_regression`."""
    coef = as_vector(coef, "coef")
    return np.concatenate([[1.0], -coef])


def regression_coef(beta) -> np.ndarray:
    """Inverse of :func:`regression_beta`."""
    beta = as_vector(beta, "beta")
    return -beta[1:]
