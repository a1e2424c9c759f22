"""Dual evaluation of the slack-coupling worst case and duality certification.

The worst-case expected loss with transport budget ``rho`` and conditional
mean drift at most ``epsilon`` equals a finite-dimensional dual:

    inf over lam >= 0 and per-sample vectors alpha_i of
        lam*rho + (epsilon/n) * sum_i dual_norm(alpha_i)
        + (1/n) * sum_i sup_delta [ loss(beta @ (x_i + delta))
                                    - alpha_i @ delta - lam * norm(delta)^2 ]

For a quadratic loss the inner supremum is a concave quadratic whose value is
available in closed form (a rank-one update of the weighting matrix inverted
through the Sherman-Morrison identity), and the optimal ``alpha_i`` are
parallel to ``beta``, collapsing the search to one scalar per sample.  For
the logistic loss the inner problem is driven along ``beta`` numerically.

:func:`primal_lower_bound` certifies the dual from below with an explicitly
feasible family of per-sample two-point couplings.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._validation import as_matrix, as_vector
from .core import Dataset, LogisticLoss, QuadraticLoss, RobustnessConfig
from .errors import MartiDroError, NonpositiveRadius, UnsupportedLoss
from .mnorm import WeightMatrix
from .regularizer import soft_threshold

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def _golden_min(f, lo: float, hi: float, tol: float, max_iter: int = 200):
    """Golden-section minimum of a unimodal scalar function on [lo, hi]."""
    x1 = hi - _GOLDEN * (hi - lo)
    x2 = lo + _GOLDEN * (hi - lo)
    f1, f2 = f(x1), f(x2)
    evals = 2
    for _ in range(max_iter):
        if hi - lo <= tol:
            break
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _GOLDEN * (hi - lo)
            f1 = f(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _GOLDEN * (hi - lo)
            f2 = f(x2)
        evals += 1
    x = x1 if f1 <= f2 else x2
    return x, min(f1, f2), evals


def _golden_max_rows(f, lo: np.ndarray, hi: np.ndarray, iters: int = 90):
    """Vectorized golden-section maximum over per-row intervals."""
    lo = lo.astype(float).copy()
    hi = hi.astype(float).copy()
    x1 = hi - _GOLDEN * (hi - lo)
    x2 = lo + _GOLDEN * (hi - lo)
    f1, f2 = f(x1), f(x2)
    for _ in range(iters):
        take1 = f1 >= f2
        hi = np.where(take1, x2, hi)
        lo = np.where(take1, lo, x1)
        x1n = hi - _GOLDEN * (hi - lo)
        x2n = lo + _GOLDEN * (hi - lo)
        x1, x2 = x1n, x2n
        f1, f2 = f(x1), f(x2)
    x = np.where(f1 >= f2, x1, x2)
    return x, np.maximum(f1, f2)


@dataclass(frozen=True)
class DualPoint:
    """Feasible dual variables: scalar ``lam >= 0`` and per-sample ``alpha``."""

    lam: float
    alpha: np.ndarray

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError(f"lam must be >= 0, got {self.lam}")
        object.__setattr__(self, "alpha", as_matrix(self.alpha, "alpha"))


@dataclass(frozen=True)
class TwoPointCoupling:
    """Per-sample symmetric two-point perturbation of the empirical measure.

    Sample ``i`` is moved to ``x_i + shift_i + spread_i * direction_i`` and
    ``x_i + shift_i - spread_i * direction_i`` with probability 1/2 each, so
    the conditional mean drift is exactly ``shift_i``.
    """

    shift: np.ndarray
    spread: np.ndarray
    directions: np.ndarray

    def __post_init__(self):
        shift = as_matrix(self.shift, "shift")
        directions = as_matrix(self.directions, "directions")
        spread = as_vector(self.spread, "spread", dim=shift.shape[0])
        if np.any(spread < 0):
            raise ValueError("spread must be nonnegative")
        if directions.shape != shift.shape:
            raise ValueError("directions must match shift's shape")
        object.__setattr__(self, "shift", shift)
        object.__setattr__(self, "spread", spread)
        object.__setattr__(self, "directions", directions)

    def transport_cost(self, weight: WeightMatrix) -> float:
        """Average squared transport distance moved by the coupling."""
        return float(np.mean(weight.norms(self.shift) ** 2 + self.spread**2 * weight.norms(self.directions) ** 2))

    def max_shift_norm(self, weight: WeightMatrix) -> float:
        return float(np.max(weight.norms(self.shift))) if self.shift.size else 0.0

    def objective(self, beta, data: Dataset, loss) -> float:
        """Expected loss under the coupling; a lower bound on the worst case."""
        beta = as_vector(beta, "beta", dim=data.n_features)
        plus = data.features + self.shift + self.spread[:, None] * self.directions
        minus = data.features + self.shift - self.spread[:, None] * self.directions
        return float(np.mean(0.5 * (loss.value(plus @ beta) + loss.value(minus @ beta))))

    def check_feasible(self, weight: WeightMatrix, cfg: RobustnessConfig, tol: float = 1e-12):
        if self.transport_cost(weight) > cfg.rho + tol:
            raise MartiDroError("coupling exceeds the transport budget")
        if self.max_shift_norm(weight) > cfg.epsilon + tol:
            raise MartiDroError("coupling exceeds the mean-drift slack")


@dataclass(frozen=True)
class DualityReport:
    dual_value: float
    primal_lower: float
    rel_gap: float
    iterations: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.primal_lower > self.dual_value + 1e-9:
            raise MartiDroError(
                f"weak duality violated: primal {self.primal_lower} > dual {self.dual_value}"
            )


def quadratic_inner_sup(beta, x, alpha, lam: float, weight: WeightMatrix, loss: QuadraticLoss):
    """Closed form of ``sup_delta loss(beta@(x+delta)) - alpha@delta - lam*norm(delta)^2``.

    Returns ``inf`` when ``lam`` is below the curvature threshold
    ``gamma/2 * dual_norm(beta)^2`` (and at the threshold unless the residual
    direction vanishes).  Above it, the concave quadratic's value uses the
    rank-one inverse

        (lam*M - gamma/2 * beta beta^T)^{-1}
            = M^{-1}/lam + gamma * M^{-1} beta beta^T M^{-1}
                           / (lam * (2*lam - gamma*dual_norm(beta)^2))
    """
    if not isinstance(loss, QuadraticLoss):
        raise UnsupportedLoss("closed-form inner supremum requires a quadratic loss")
    beta = as_vector(beta, "beta", dim=weight.dim)
    x = as_vector(x, "x", dim=weight.dim)
    alpha = as_vector(alpha, "alpha", dim=weight.dim)

    bnorm = weight.dual_norm(beta)
    threshold = 0.5 * loss.gamma * bnorm * bnorm
    score = float(beta @ x)
    base = float(loss.value(score))
    residual = float(loss.grad(score)) * beta - alpha

    if lam < threshold:
        return math.inf
    if lam == threshold:
        if weight.dual_norm(residual) <= 1e-12 * max(1.0, weight.dual_norm(beta)):
            return base
        return math.inf
    inv_res = weight.inv_apply(residual)
    dn2 = float(residual @ inv_res)
    cross = float(beta @ inv_res)
    quad = dn2 / lam + loss.gamma * cross * cross / (lam * (2.0 * lam - loss.gamma * bnorm * bnorm))
    return base + 0.25 * quad


def _check_radii(cfg: RobustnessConfig):
    if not cfg.rho > 0:
        raise NonpositiveRadius(f"rho must be positive, got {cfg.rho}")
    if not cfg.epsilon > 0:
        raise NonpositiveRadius(f"epsilon must be positive, got {cfg.epsilon}")


def _quadratic_dual(beta, data, weight, cfg, tol):
    loss = cfg.loss
    n = data.n_samples
    scores = data.features @ beta
    losses = np.asarray(loss.value(scores))
    grads = np.asarray(loss.grad(scores))
    base = float(losses.mean())
    bnorm = weight.dual_norm(beta)
    if bnorm <= 1e-300:
        return base, DualPoint(0.0, np.zeros_like(data.features)), 0

    b2 = bnorm * bnorm
    threshold = 0.5 * loss.gamma * b2
    eps = cfg.epsilon

    def split_at(lam):
        coef = b2 / (2.0 * (2.0 * lam - loss.gamma * b2))
        if math.isfinite(eps):
            s = soft_threshold(grads, eps * bnorm / (2.0 * coef))
            pen = eps * bnorm * np.abs(s)
        else:
            s = np.zeros(n)
            pen = np.zeros(n)
        return s, float(np.mean(pen + coef * (grads - s) ** 2))

    def objective(lam):
        return lam * cfg.rho + base + split_at(lam)[1]

    lam_hi = (
        11.0 * threshold
        + 1.5 * bnorm * float(np.linalg.norm(grads)) / (2.0 * math.sqrt(n * cfg.rho))
        + 10.0
    )
    lam_lo = threshold * (1.0 + 1e-9) + 1e-18
    lam, val, evals = _golden_min(objective, lam_lo, lam_hi, tol=tol * (1.0 + threshold))

    candidates = [(val, lam)]
    if math.isfinite(eps):
        # boundary case: alpha_i pinned to grads_i * beta
        val0 = threshold * cfg.rho + base + eps * bnorm * float(np.mean(np.abs(grads)))
        candidates.append((val0, threshold))
    best_val, best_lam = min(candidates, key=lambda item: item[0])

    if best_lam > threshold:
        s, _ = split_at(best_lam)
    else:
        s = grads.copy()
    alpha = s[:, None] * beta[None, :]
    return best_val, DualPoint(best_lam, alpha), evals


def _logistic_box_sup(scores, box: float, lam: float, b2: float, loss):
    """Per-sample sup over |t| <= box of loss(score + t) - lam * t^2 / b2."""

    def psi(t):
        return np.asarray(loss.value(scores + t)) - lam * t * t / b2

    lo = np.full_like(scores, -box)
    hi = np.full_like(scores, box)
    t_star, vals = _golden_max_rows(psi, lo, hi)
    return t_star, vals


def _logistic_dual(beta, data, weight, cfg, tol):
    loss = cfg.loss
    n = data.n_samples
    scores = data.features @ beta
    base_losses = np.asarray(loss.value(scores))
    bnorm = weight.dual_norm(beta)
    if bnorm <= 1e-300:
        return float(base_losses.mean()), DualPoint(0.0, np.zeros_like(data.features)), 0

    b2 = bnorm * bnorm
    threshold = 0.5 * loss.smoothness * b2  # strong concavity of the 1-D inner problem
    box = cfg.epsilon * bnorm
    if not math.isfinite(box):
        # without the drift constraint the maximizer still satisfies
        # |grad| <= 1, hence |t*| <= b2 / (2*lam) <= 1/smoothness on the scan range
        box = 1.0 / loss.smoothness + 1.0

    def objective(lam):
        _, vals = _logistic_box_sup(scores, box, lam, b2, loss)
        return lam * cfg.rho + float(vals.mean())

    lam_lo = threshold * (1.0 + 1e-9) + 1e-18
    lam_hi = 11.0 * threshold + 1.5 * bnorm * math.sqrt(n) / (2.0 * math.sqrt(n * cfg.rho)) + 10.0
    lam, val, evals = _golden_min(objective, lam_lo, lam_hi, tol=tol * (1.0 + threshold))

    t_star, _ = _logistic_box_sup(scores, box, lam, b2, loss)
    s = np.zeros(n)
    at_edge = np.abs(t_star) >= box * (1.0 - 1e-9)
    t_edge = np.sign(t_star) * box
    grad_edge = np.asarray(loss.grad(scores + t_edge)) - 2.0 * lam * t_edge / b2
    s[at_edge] = grad_edge[at_edge]
    alpha = s[:, None] * beta[None, :]
    return val, DualPoint(lam, alpha), evals


def _dual_with_evals(beta, data, weight, cfg, tol):
    _check_radii(cfg)
    beta = as_vector(beta, "beta", dim=data.n_features)
    if isinstance(cfg.loss, QuadraticLoss):
        return _quadratic_dual(beta, data, weight, cfg, tol)
    if isinstance(cfg.loss, LogisticLoss):
        return _logistic_dual(beta, data, weight, cfg, tol)
    raise UnsupportedLoss(f"unsupported loss {type(cfg.loss).__name__}")


def dual_value(beta, data: Dataset, weight: WeightMatrix, cfg: RobustnessConfig, tol: float = 1e-10):
    """Minimize the dual objective; returns ``(value, DualPoint)``.

    The scan over ``lam`` is a golden-section search on the convex dual
    objective, bracketed just above the curvature threshold; the threshold
    point itself is evaluated separately and kept if better.
    """
    value, point, _ = _dual_with_evals(beta, data, weight, cfg, tol)
    return value, point


def _linearized_step(grad_r, grad_t, eps_box: float, radius: float):
    """argmax of a linear function over {|r_i| <= eps_box, ||(r, t)|| <= radius}."""

    def point(c):
        return np.clip(c * grad_r, -eps_box, eps_box), c * grad_t

    def norm_at(c):
        r, t = point(c)
        return math.hypot(float(np.linalg.norm(r)), float(np.linalg.norm(t)))

    gnorm = math.hypot(float(np.linalg.norm(grad_r)), float(np.linalg.norm(grad_t)))
    if gnorm == 0.0:
        return None
    c_hi = radius / gnorm
    for _ in range(200):
        if norm_at(c_hi) >= radius:
            break
        c_hi *= 2.0
        if c_hi > 1e100:
            return point(c_hi)  # everything clipped, cannot reach the sphere
    c_lo = 0.0
    for _ in range(100):
        mid = 0.5 * (c_lo + c_hi)
        if norm_at(mid) < radius:
            c_lo = mid
        else:
            c_hi = mid
    return point(c_lo)


def _primal_search(
    beta,
    data: Dataset,
    weight: WeightMatrix,
    cfg: RobustnessConfig,
    budget_iters: int,
    n_random_starts: int,
    seed: int,
):
    if not cfg.rho > 0:
        raise NonpositiveRadius(f"rho must be positive, got {cfg.rho}")
    beta = as_vector(beta, "beta", dim=data.n_features)
    loss = cfg.loss
    n = data.n_samples
    scores = data.features @ beta
    bnorm = weight.dual_norm(beta)
    zero = TwoPointCoupling(
        np.zeros_like(data.features), np.zeros(n), np.zeros_like(data.features)
    )
    if bnorm <= 1e-300:
        return zero.objective(beta, data, loss), zero, 0

    direction = weight.inv_apply(beta) / bnorm  # unit weighted norm
    radius = math.sqrt(n * cfg.rho)
    eps_box = min(cfg.epsilon, radius)

    def value(r, t):
        plus = loss.value(scores + (r + t) * bnorm)
        minus = loss.value(scores + (r - t) * bnorm)
        return float(np.mean(0.5 * (plus + minus)))

    def grads(r, t):
        gp = np.asarray(loss.grad(scores + (r + t) * bnorm))
        gm = np.asarray(loss.grad(scores + (r - t) * bnorm))
        return 0.5 * bnorm * (gp + gm) / n, 0.5 * bnorm * (gp - gm) / n

    def project(r, t):
        r = np.clip(r, -eps_box, eps_box)
        nrm = math.hypot(float(np.linalg.norm(r)), float(np.linalg.norm(t)))
        if nrm > radius:
            scale = radius / nrm
            r, t = r * scale, t * scale
        return r, t

    rng = np.random.default_rng(seed)
    g0 = np.sign(np.asarray(loss.grad(scores)))
    g0[g0 == 0] = 1.0
    starts = [
        (np.zeros(n), np.full(n, math.sqrt(cfg.rho))),
        project(g0 * eps_box, np.zeros(n)),
        project(g0 * eps_box * 0.5, np.full(n, math.sqrt(cfg.rho) * 0.5)),
    ]
    for _ in range(n_random_starts):
        starts.append(project(rng.uniform(-1, 1, n) * eps_box, np.abs(rng.normal(0, math.sqrt(cfg.rho), n))))

    best_val, best_rt = value(np.zeros(n), np.zeros(n)), (np.zeros(n), np.zeros(n))
    rounds = 0
    for r, t in starts:
        cur = value(r, t)
        for _ in range(budget_iters):
            rounds += 1
            step = _linearized_step(*grads(r, t), eps_box, radius)
            if step is None:
                break
            r_new, t_new = project(*step)
            new = value(r_new, t_new)
            if new <= cur + 1e-15 * max(1.0, abs(cur)):
                break
            r, t, cur = r_new, t_new, new
        if cur > best_val:
            best_val, best_rt = cur, (r, t)

    # per-sample polish: sweep each (r_i, t_i) over the boundary of its
    # remaining-budget region while the other samples stay put
    r, t = (arr.copy() for arr in best_rt)
    for _ in range(2):
        for i in range(n):
            used = float(r @ r + t @ t - r[i] ** 2 - t[i] ** 2)
            avail = math.sqrt(max(n * cfg.rho - used, 0.0))
            r_cand = np.linspace(-min(eps_box, avail), min(eps_box, avail), 41)
            t_cand = np.sqrt(np.maximum(avail**2 - r_cand**2, 0.0))
            sp = scores[i]
            vals = 0.5 * (
                np.asarray(loss.value(sp + (r_cand + t_cand) * bnorm))
                + np.asarray(loss.value(sp + (r_cand - t_cand) * bnorm))
            )
            j = int(np.argmax(vals))
            base_i = 0.5 * float(
                loss.value(sp + (r[i] + t[i]) * bnorm) + loss.value(sp + (r[i] - t[i]) * bnorm)
            )
            if vals[j] > base_i:
                r[i], t[i] = float(r_cand[j]), float(t_cand[j])
    r, t = project(r, t)
    if value(r, t) < best_val:
        r, t = best_rt

    coupling = TwoPointCoupling(
        shift=r[:, None] * direction[None, :],
        spread=np.abs(t),
        directions=np.tile(direction, (n, 1)),
    )
    coupling.check_feasible(weight, cfg)
    return coupling.objective(beta, data, loss), coupling, rounds


def primal_lower_bound(
    beta,
    data: Dataset,
    weight: WeightMatrix,
    cfg: RobustnessConfig,
    budget_iters: int = 120,
    n_random_starts: int = 6,
    seed: int = 0,
):
    """Best feasible two-point coupling found by ascent; certifies the dual.

    For a linear score every convex loss is maximized by perturbing along the
    inverse-weighted direction of ``beta`` (larger reachable score intervals
    can only help), so the search runs over per-sample scalar drifts ``r`` and
    spreads ``t`` subject to ``|r_i| <= epsilon`` and the shared transport
    budget ``mean(r^2 + t^2) <= rho``.  The loss is convex in ``(r, t)``, so
    each linearize-and-maximize step is monotone; several structured and
    seeded random starts plus per-sample coordinate polish guard against
    stalling on a face.  Any feasible coupling lower-bounds the worst case,
    so the returned value is always a certificate.
    """
    value, coupling, _ = _primal_search(
        beta, data, weight, cfg, budget_iters, n_random_starts, seed
    )
    return value, coupling


def verify_duality(
    beta, data: Dataset, weight: WeightMatrix, cfg: RobustnessConfig, budget_iters: int = 120
) -> DualityReport:
    """Dual value vs. primal certificate; reports the relative gap."""
    dval, _, devals = _dual_with_evals(beta, data, weight, cfg, tol=1e-10)
    pval, _, prounds = _primal_search(
        beta, data, weight, cfg, budget_iters=budget_iters, n_random_starts=6, seed=0
    )
    gap = max(dval - pval, 0.0) / max(1.0, abs(dval))
    return DualityReport(
        dual_value=dval,
        primal_lower=pval,
        rel_gap=gap,
        iterations={"dual_evals": devals, "primal_rounds": prounds},
    )
