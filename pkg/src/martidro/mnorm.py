"""Weighted-norm algebra for the transport ground cost.

The ground cost is ``(x - x')^T M (x - x')`` for a positive-definite ``M``.
Coordinates that must never be transported (for regression: the response) are
represented structurally as ``fixed_coords`` instead of huge diagonal entries,
which keeps every factorization well conditioned.  On the remaining
"transportable" block the weighting is a positive-definite matrix ``q``.

Conventions used throughout the package:

* ``norm(x)``      = sqrt(x_t^T q x_t), +inf if a fixed coordinate is nonzero
* ``dual_norm(x)`` = sqrt(x_t^T q^{-1} x_t), fixed coordinates ignored
  (the inverse weighting of a frozen coordinate is zero in the limit)
"""

from __future__ import annotations

import numpy as np

from ._validation import as_matrix, as_vector, readonly
from .errors import DimensionMismatch

_SYM_TOL = 1e-12
_EIG_FLOOR = 1e-10
_FIXED_TOL = 1e-14


class WeightMatrix:
    """Positive-definite weighting with optionally frozen coordinates.

    Parameters
    ----------
    q : (t, t) array
        Symmetric positive-definite weighting of the transportable block.
    fixed_coords : iterable of int, optional
        Indices (within the full ``dim``-vector) that cannot be transported.
    dim : int, optional
        Full dimension.  Defaults to ``q.shape[0] + len(fixed_coords)``.
    """

    def __init__(self, q, fixed_coords=(), dim=None):
        q = as_matrix(np.atleast_2d(np.asarray(q, dtype=float)), "q")
        if q.shape[0] != q.shape[1]:
            raise DimensionMismatch(f"q must be square, got {q.shape}")
        if np.max(np.abs(q - q.T)) > _SYM_TOL * max(1.0, np.max(np.abs(q))):
            raise ValueError("q must be symmetric")
        q = 0.5 * (q + q.T)

        fixed = tuple(sorted(int(i) for i in fixed_coords))
        if len(set(fixed)) != len(fixed):
            raise ValueError("fixed_coords contains duplicates")
        d = q.shape[0] + len(fixed) if dim is None else int(dim)
        if q.shape[0] + len(fixed) != d:
            raise DimensionMismatch(
                f"q block ({q.shape[0]}) plus fixed coords ({len(fixed)}) must cover dim {d}"
            )
        if any(i < 0 or i >= d for i in fixed):
            raise ValueError(f"fixed_coords out of range for dim {d}")

        eigvals = np.linalg.eigvalsh(q)
        if eigvals[0] <= _EIG_FLOOR:
            raise ValueError(f"q must be positive definite (min eigenvalue {eigvals[0]:.3e})")

        self.dim = d
        self.fixed_coords = fixed
        self.transportable = np.array([i for i in range(d) if i not in set(fixed)], dtype=int)
        self.q = readonly(q)
        self.q_inv = readonly(np.linalg.inv(q))
        self._chol = readonly(np.linalg.cholesky(q))
        self._eig_min = float(eigvals[0])

    # -- constructors -------------------------------------------------------

    @classmethod
    def identity(cls, dim: int) -> "WeightMatrix":
        return cls(np.eye(dim))

    @classmethod
    def diagonal(cls, values, fixed_coords=()) -> "WeightMatrix":
        values = as_vector(values, "values")
        return cls(np.diag(values), fixed_coords=fixed_coords)

    @classmethod
    def regression(cls, q) -> "WeightMatrix":
        """Cost for joint rows ``(y, z)``: response frozen, ``q`` on features."""
        q = np.atleast_2d(np.asarray(q, dtype=float))
        return cls(q, fixed_coords=(0,))

    # -- norms ---------------------------------------------------------------

    def _check_dim(self, x) -> np.ndarray:
        x = as_vector(x, "x", dim=self.dim)
        return x

    def norm(self, x) -> float:
        """Weighted norm; +inf if any frozen coordinate is materially nonzero."""
        x = self._check_dim(x)
        if self.fixed_coords and np.max(np.abs(x[list(self.fixed_coords)])) > _FIXED_TOL:
            return np.inf
        xt = x[self.transportable]
        return float(np.sqrt(max(xt @ self.q @ xt, 0.0)))

    def dual_norm(self, x) -> float:
        """Inverse-weighted norm over the transportable block."""
        x = self._check_dim(x)
        xt = x[self.transportable]
        return float(np.sqrt(max(xt @ self.q_inv @ xt, 0.0)))

    def norms(self, xs) -> np.ndarray:
        """Row-wise :meth:`norm` for an ``(n, dim)`` array (fixed part must be 0)."""
        xs = as_matrix(xs, "xs")
        if xs.shape[1] != self.dim:
            raise DimensionMismatch(f"rows must have length {self.dim}")
        out = np.sqrt(np.maximum(np.einsum("ni,ij,nj->n", xs[:, self.transportable], self.q, xs[:, self.transportable]), 0.0))
        if self.fixed_coords:
            bad = np.max(np.abs(xs[:, list(self.fixed_coords)]), axis=1) > _FIXED_TOL
            out[bad] = np.inf
        return out

    # -- linear maps ---------------------------------------------------------

    def apply(self, x) -> np.ndarray:
        """``M x`` restricted to the transportable block, zero elsewhere."""
        x = self._check_dim(x)
        out = np.zeros(self.dim)
        out[self.transportable] = self.q @ x[self.transportable]
        return out

    def inv_apply(self, x) -> np.ndarray:
        """``M^{-1} x``: fixed rows of the inverse weighting vanish."""
        x = self._check_dim(x)
        out = np.zeros(self.dim)
        out[self.transportable] = self.q_inv @ x[self.transportable]
        return out

    def project_ball(self, x, radius: float) -> np.ndarray:
        """Nearest point (in weighted norm) of the radius-ball, frozen part zeroed.

        Points within one part in 1e12 of the boundary pass through unchanged
        so that projecting twice gives exactly the same floats as projecting
        once.
        """
        if not radius > 0:
            raise ValueError(f"radius must be positive, got {radius}")
        x = self._check_dim(x).copy()
        if self.fixed_coords:
            x[list(self.fixed_coords)] = 0.0
        n = self.norm(x)
        if n > radius * (1.0 + 1e-12):
            x *= radius / n
        return x

    @property
    def min_eigenvalue(self) -> float:
        return self._eig_min

    def __repr__(self):
        return f"WeightMatrix(dim={self.dim}, fixed_coords={self.fixed_coords})"
