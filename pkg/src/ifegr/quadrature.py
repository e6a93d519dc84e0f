"""Symmetric triangle quadrature rules in barycentric coordinates.

Weights are normalized to sum to one, so an integral over a physical
triangle T is area(T) * sum_q w_q f(x_q).  Rules of degree 3-6 follow the
classical Strang-Fix / Dunavant tables.
"""

from __future__ import annotations

import numpy as np

_SQRT3 = np.sqrt(3.0)

#: 2-point Gauss rule on [0, 1] as (points, weights); exact for cubics.
GAUSS2_UNIT = (
    np.array([0.5 - 0.5 / _SQRT3, 0.5 + 0.5 / _SQRT3]),
    np.array([0.5, 0.5]),
)


def _orbit1(w):
    return [([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], w)]


def _orbit3(a, w):
    b = 1.0 - 2.0 * a
    return [([b, a, a], w), ([a, b, a], w), ([a, a, b], w)]


def _orbit6(a, b, w):
    c = 1.0 - a - b
    return [
        ([c, a, b], w), ([c, b, a], w), ([a, c, b], w),
        ([b, c, a], w), ([a, b, c], w), ([b, a, c], w),
    ]


_RULES = {
    1: _orbit1(1.0),
    2: _orbit3(0.5, 1.0 / 3.0),  # edge midpoints
    3: _orbit6(0.659027622374092, 0.231933368553031, 1.0 / 6.0),
    4: _orbit3(0.091576213509771, 0.109951743655322)
    + _orbit3(0.445948490915965, 0.223381589678011),
    5: _orbit1(0.225)
    + _orbit3(0.101286507323456, 0.125939180544827)
    + _orbit3(0.470142064105115, 0.132394152788506),
    6: _orbit3(0.063089014491502, 0.050844906370207)
    + _orbit3(0.249286745170910, 0.116786275726379)
    + _orbit6(0.310352451033785, 0.053145049844816, 0.082851075618374),
}


def interior_rule(degree: int):
    """Like quad_rule, but guaranteed to keep every point off the edges.

    Only the degree-2 rule differs (the interior 3-point rule replaces
    the edge-midpoint one).  Assembly and norm evaluation use this so no
    quadrature point can land on the interface polyline, where pointwise
    coefficients flip sign at roundoff level.
    """
    if degree == 2:
        rule = _orbit3(1.0 / 6.0, 1.0 / 3.0)
        return np.array([p for p, _ in rule]), np.array([w for _, w in rule])
    return quad_rule(degree)


def quad_rule(degree: int):
    """Barycentric points and weights exact up to the requested degree.

    Returns
    -------
    points : (k, 3) array of barycentric coordinates
    weights : (k,) array summing to 1

    Raises
    ------
    ValueError
        For degrees outside 1..6.
    """
    if degree not in _RULES:
        raise ValueError(f"unsupported quadrature degree {degree}")
    rule = _RULES[degree]
    points = np.array([p for p, _ in rule])
    weights = np.array([w for _, w in rule])
    return points, weights


def physical_points(coords: np.ndarray, bary: np.ndarray) -> np.ndarray:
    """Map barycentric points onto triangles given as (..., 3, 2) coords."""
    return np.einsum("qk,...kd->...qd", bary, coords)
