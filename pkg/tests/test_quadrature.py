import math

import numpy as np
import pytest

from ifegr.quadrature import GAUSS2_UNIT, interior_rule, physical_points, quad_rule


def monomial_integral(a, b):
    """Exact integral of x^a y^b over the reference triangle."""
    return math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)


REF = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


@pytest.mark.parametrize("degree", [1, 2, 3, 4, 5, 6])
def test_rule_exactness(degree):
    points, weights = quad_rule(degree)
    assert abs(weights.sum() - 1.0) < 1e-14
    assert np.all(points >= -1e-15) and np.allclose(points.sum(axis=1), 1.0)
    xy = physical_points(REF[None], points)[0]
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            approx = 0.5 * np.sum(weights * xy[:, 0] ** a * xy[:, 1] ** b)
            assert abs(approx - monomial_integral(a, b)) < 1e-14


def test_degree1_is_centroid():
    points, weights = quad_rule(1)
    assert np.allclose(points, [[1 / 3, 1 / 3, 1 / 3]])
    assert np.allclose(weights, [1.0])


def test_degree2_is_edge_midpoints():
    points, _ = quad_rule(2)
    assert sorted(map(tuple, np.round(points, 12))) == [
        (0.0, 0.5, 0.5), (0.5, 0.0, 0.5), (0.5, 0.5, 0.0),
    ]


def test_degree4_six_points():
    points, weights = quad_rule(4)
    assert points.shape == (6, 3)
    xy = physical_points(REF[None], points)[0]
    for a in range(5):
        for b in range(5 - a):
            approx = 0.5 * np.sum(weights * xy[:, 0] ** a * xy[:, 1] ** b)
            assert abs(approx - monomial_integral(a, b)) < 1e-14


def test_unsupported_degree():
    with pytest.raises(ValueError):
        quad_rule(7)
    with pytest.raises(ValueError):
        quad_rule(0)


@pytest.mark.parametrize("degree", [1, 2, 3, 4, 5, 6])
def test_interior_rule_strictly_inside(degree):
    points, weights = interior_rule(degree)
    assert np.all(points > 1e-6)
    assert abs(weights.sum() - 1.0) < 1e-14
    xy = physical_points(REF[None], points)[0]
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            approx = 0.5 * np.sum(weights * xy[:, 0] ** a * xy[:, 1] ** b)
            assert abs(approx - monomial_integral(a, b)) < 1e-14


def test_gauss2_unit_cubic_exact():
    t, w = GAUSS2_UNIT
    for k in range(4):
        assert abs(np.sum(w * t**k) - 1.0 / (k + 1)) < 1e-15
