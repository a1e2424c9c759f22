"""Scikit-learn style estimators wrapping the solvers.

These are thin adapters so the robust fitting routines compose with the
usual ecosystem tooling (``get_params``/``set_params``, pipelines, grid
search).  The numerical work lives in :mod:`martidro.solver` and
:mod:`martidro.advtrain`.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import advtrain, solver
from .core import Dataset, QuadraticLoss, RobustnessConfig, encode_regression, regression_coef
from .mnorm import WeightMatrix


class MartingaleDRORegressor(RegressorMixin, BaseEstimator):
    """Linear regression robust to transport perturbations with bounded mean drift.

    Parameters
    ----------
    rho : float
        Transport budget of the adversary.
    epsilon : float
        Allowed conditional-mean drift.  ``0`` makes the fit equal to ridge
        regression with penalty ``rho * coef @ q^{-1} @ coef``; larger values
        interpolate toward square-root ridge.
    q : array or None
        Feature-block transport weighting (identity if None).
    method : {"auto", "subgradient", "closed_form"}
        ``closed_form`` is only valid at ``epsilon=0``; ``auto`` picks it
        there and the subgradient solver otherwise.
    """

    def __init__(self, rho=0.08, epsilon=0.0, gamma=2.0, q=None, method="auto",
                 n_iter=20000, step0=None):
        self.rho = rho
        self.epsilon = epsilon
        self.gamma = gamma
        self.q = q
        self.method = method
        self.n_iter = n_iter
        self.step0 = step0

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        method = self.method
        if method == "auto":
            method = "closed_form" if self.epsilon == 0 else "subgradient"
        if method == "closed_form":
            if self.epsilon != 0:
                raise ValueError("closed_form is only exact at epsilon=0")
            self.coef_ = solver.ridge_solution(X, y, self.rho, q=self.q)
            self.trace_ = None
        elif method == "subgradient":
            data = encode_regression(X, y)
            weight = WeightMatrix.regression(np.eye(X.shape[1]) if self.q is None else self.q)
            cfg = RobustnessConfig(self.rho, self.epsilon, QuadraticLoss(self.gamma))
            init = np.concatenate([[1.0], -solver.ols_solution(X, y)])
            trace = solver.solve(data, weight, cfg, init, iters=self.n_iter, step0=self.step0)
            self.coef_ = regression_coef(trace.best_beta)
            self.trace_ = trace
        else:
            raise ValueError(f"unknown method {self.method!r}")
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X)
        return X @ self.coef_


class AdversarialMLPClassifier(ClassifierMixin, BaseEstimator):
    """Tiny ELU network trained against norm-capped, penalized perturbations.

    ``epsilon`` caps the weighted norm of every training perturbation and
    ``lam`` is the quadratic transport penalty of the inner maximization.
    """

    def __init__(self, hidden_layer_sizes=(4, 3, 2), epsilon=1.0, lam=2.0,
                 inner_steps=15, inner_lr=0.5, epochs=50, step0=0.1,
                 batch_size=1, seed=0):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.epsilon = epsilon
        self.lam = lam
        self.inner_steps = inner_steps
        self.inner_lr = inner_lr
        self.epochs = epochs
        self.step0 = step0
        self.batch_size = batch_size
        self.seed = seed

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        self.classes_, labels = np.unique(y, return_inverse=True)
        sizes = (X.shape[1], *self.hidden_layer_sizes, len(self.classes_))
        net = advtrain.Mlp(sizes, seed=self.seed)
        cfg = advtrain.TrainConfig(
            epsilon=self.epsilon, lam=self.lam, inner_steps=self.inner_steps,
            inner_lr=self.inner_lr, epochs=self.epochs, step0=self.step0,
            batch_size=self.batch_size, seed=self.seed,
        )
        weight = WeightMatrix.identity(X.shape[1])
        data = Dataset(X, targets=np.asarray(y, dtype=float))
        self.net_, self.trace_ = advtrain.train(net, data, weight, cfg)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "net_")
        X = check_array(X)
        return self.classes_[self.net_.predict(X)]

    def predict_proba(self, X):
        check_is_fitted(self, "net_")
        X = check_array(X)
        logits = self.net_.logits(X)
        shifted = np.exp(logits - logits.max(axis=1, keepdims=True))
        return shifted / shifted.sum(axis=1, keepdims=True)
