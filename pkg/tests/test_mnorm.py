import math

import numpy as np
import pytest

from martidro.errors import DimensionMismatch
from martidro.mnorm import WeightMatrix


def random_spd(rng, d):
    a = rng.normal(size=(d, d))
    return a @ a.T + d * np.eye(d)


def test_euclidean_norms():
    w = WeightMatrix.identity(2)
    assert w.norm([3.0, 4.0]) == 5.0
    assert w.dual_norm([3.0, 4.0]) == 5.0
    assert w.norm([0.0, 0.0]) == 0.0


def test_fixed_coordinate_blocks_transport():
    w = WeightMatrix(np.eye(2), fixed_coords=(0,))
    assert w.norm([0.5, 1.0, 1.0]) == math.inf
    assert w.norm([0.0, 1.0, 1.0]) == math.sqrt(2.0)
    # the inverse weighting of the frozen coordinate is zero
    assert w.dual_norm([7.0, 3.0, 4.0]) == 5.0


def test_diagonal_dual_norm():
    w = WeightMatrix.diagonal([4.0])
    assert w.dual_norm([2.0]) == 1.0


def test_cauchy_schwarz_pairing():
    rng = np.random.default_rng(3)
    w = WeightMatrix(random_spd(rng, 4), fixed_coords=(1,))
    for _ in range(1000):
        beta = rng.normal(size=5)
        delta = rng.normal(size=5)
        delta[1] = 0.0
        assert abs(beta @ delta) <= w.dual_norm(beta) * w.norm(delta) + 1e-9


def test_norm_duality_under_the_metric():
    rng = np.random.default_rng(4)
    w = WeightMatrix(random_spd(rng, 3), fixed_coords=(0,))
    for _ in range(50):
        v = rng.normal(size=4)
        v[0] = 0.0
        assert math.isclose(w.dual_norm(w.apply(v)), w.norm(v), rel_tol=1e-10)


def test_projection():
    w = WeightMatrix.identity(2)
    x = np.array([0.6, 0.8])  # norm 1 < 3
    assert np.allclose(w.project_ball(x, 3.0), x)
    assert np.allclose(w.project_ball([3.0, 4.0], 1.0), [0.6, 0.8])


def test_projection_properties():
    rng = np.random.default_rng(5)
    w = WeightMatrix(random_spd(rng, 3), fixed_coords=(2,))
    for _ in range(200):
        x = rng.normal(0, 3, size=4)
        eps = float(rng.uniform(0.1, 2))
        p = w.project_ball(x, eps)
        assert w.norm(p) <= eps + 1e-12
        assert np.array_equal(w.project_ball(p, eps), p)  # idempotent, exact
        assert p[2] == 0.0


def test_construction_rejections():
    with pytest.raises(ValueError):
        WeightMatrix(np.array([[1.0, 0.5], [0.4, 1.0]]))  # asymmetric
    with pytest.raises(ValueError):
        WeightMatrix(np.array([[1.0, 0.0], [0.0, -0.5]]))  # not PD
    with pytest.raises(ValueError):
        WeightMatrix(np.zeros((2, 2)))  # singular
    with pytest.raises(DimensionMismatch):
        WeightMatrix(np.eye(2), fixed_coords=(0,), dim=2)
    with pytest.raises(DimensionMismatch):
        WeightMatrix.identity(2).norm([1.0, 2.0, 3.0])


def test_batched_norms_match_scalar():
    rng = np.random.default_rng(6)
    w = WeightMatrix(random_spd(rng, 3), fixed_coords=(0,))
    xs = rng.normal(size=(10, 4))
    xs[:, 0] = 0.0
    batched = w.norms(xs)
    for row, expected in zip(xs, batched):
        assert math.isclose(w.norm(row), expected, rel_tol=1e-12)
