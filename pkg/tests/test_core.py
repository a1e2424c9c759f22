import math

import numpy as np
import pytest

from martidro.core import (
    Dataset,
    LogisticLoss,
    QuadraticLoss,
    RobustnessConfig,
    encode_regression,
    regression_beta,
    regression_coef,
)
from martidro.errors import DimensionMismatch, UnsupportedLoss


def test_quadratic_loss_values():
    loss = QuadraticLoss(gamma=2.0, shift=0.0)
    assert loss.value(3.0) == 9.0
    assert loss.grad(3.0) == 6.0
    assert QuadraticLoss(gamma=2.0, shift=1.0).value(1.0) == 0.0


def test_logistic_loss_values():
    loss = LogisticLoss()
    assert math.isclose(float(loss.value(0.0)), math.log(2.0), rel_tol=1e-12)
    assert math.isclose(float(loss.grad(0.0)), -0.5, rel_tol=1e-12)


def test_logistic_loss_extreme_arguments_are_stable():
    loss = LogisticLoss()
    assert float(loss.value(800.0)) == 0.0
    assert math.isclose(float(loss.value(-800.0)), 800.0, rel_tol=1e-12)
    assert np.isfinite(loss.grad(np.array([-800.0, 800.0]))).all()


@pytest.mark.parametrize("loss", [QuadraticLoss(1.7, 0.3), LogisticLoss()])
def test_grad_matches_finite_difference(loss):
    rng = np.random.default_rng(0)
    h = 1e-6
    for t in rng.uniform(-3, 3, 40):
        fd = (float(loss.value(t + h)) - float(loss.value(t - h))) / (2 * h)
        assert abs(float(loss.grad(t)) - fd) <= 1e-6 * max(1.0, abs(fd))


@pytest.mark.parametrize("loss", [QuadraticLoss(2.5, -0.4), LogisticLoss()])
def test_loss_is_convex(loss):
    rng = np.random.default_rng(1)
    for _ in range(200):
        t1, t2 = rng.uniform(-5, 5, 2)
        theta = rng.uniform()
        mid = float(loss.value(theta * t1 + (1 - theta) * t2))
        chord = theta * float(loss.value(t1)) + (1 - theta) * float(loss.value(t2))
        assert mid <= chord + 1e-12


def test_quadratic_second_difference_equals_gamma():
    loss = QuadraticLoss(gamma=1.3, shift=0.2)
    h = 1e-3
    for t in np.linspace(-2, 2, 9):
        second = (float(loss.value(t + h)) - 2 * float(loss.value(t)) + float(loss.value(t - h))) / h**2
        assert abs(second - 1.3) <= 1e-4 * 1.3


def test_dataset_validation():
    ds = Dataset(np.ones((2, 3)), targets=[1.0, 2.0])
    assert ds.n_samples == 2 and ds.n_features == 3
    with pytest.raises(ValueError):
        Dataset(np.array([[np.nan, 1.0]]))
    with pytest.raises(DimensionMismatch):
        Dataset(np.ones((2, 2)), targets=[1.0])
    with pytest.raises(ValueError):
        Dataset(np.ones((0, 2)))


def test_dataset_is_immutable():
    ds = Dataset(np.ones((2, 2)))
    with pytest.raises(ValueError):
        ds.features[0, 0] = 5.0


def test_robustness_config_validation():
    RobustnessConfig(0.0, math.inf)  # both extremes are legal
    with pytest.raises(ValueError):
        RobustnessConfig(-0.1, 0.0)
    with pytest.raises(ValueError):
        RobustnessConfig(0.1, -1.0)
    with pytest.raises(UnsupportedLoss):
        RobustnessConfig(0.1, 0.1, loss="huber")


def test_regression_encoding_roundtrip():
    rng = np.random.default_rng(2)
    z, y = rng.normal(size=(5, 3)), rng.normal(size=5)
    data = encode_regression(z, y)
    coef = rng.normal(size=3)
    beta = regression_beta(coef)
    assert np.allclose(data.features @ beta, y - z @ coef)
    assert np.allclose(regression_coef(beta), coef)
