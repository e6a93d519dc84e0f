"""Immersed piecewise-linear basis functions on interface elements.

On a triangle cut by the chord p4-p5 each of the three nodal basis
functions consists of two linear polynomials, one per side, matched by
value at p4 and p5 and by the normal flux weighted with the side
coefficients.  The construction reduces to one 6x6 linear solve per
element, shared by all three basis functions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .geometry import ElementClassification
from .mesh import UniformMesh

#: Construction fails when the 6x6 system is conditioned worse than this.
COND_LIMIT = 1e14


class IfeConstructionError(RuntimeError):
    """Raised when the local basis system is singular or degenerate."""


@dataclass
class IfeElementBasis:
    """Basis of one interface element.

    ``coeffs[i, s, :]`` holds (a, b, c) of basis i on piece s, with s = 0
    the minus piece and s = 1 the plus piece, so the piece value at (x, y)
    is a + b*x + c*y and its gradient the constant (b, c).
    """

    vertices: np.ndarray
    vertex_sides: np.ndarray
    p4: np.ndarray
    p5: np.ndarray
    seg_normal: np.ndarray
    lone_side: int
    beta_minus_eff: float
    beta_plus_eff: float
    coeffs: np.ndarray
    cond: float

    def side_of(self, x, y):
        """Region sign (-1/+1) of points relative to the chord.

        Points on the chord report -1, matching the convention that the
        minus piece is used there.
        """
        d = self.p5 - self.p4
        cross = d[0] * (np.asarray(y) - self.p4[1]) - d[1] * (np.asarray(x) - self.p4[0])
        lone = self.vertices[np.flatnonzero(self.vertex_sides == self.lone_side)[0]]
        lone_cross = d[0] * (lone[1] - self.p4[1]) - d[1] * (lone[0] - self.p4[0])
        same = cross * lone_cross > 0.0
        return np.where(same, self.lone_side, np.where(cross == 0.0, -1, -self.lone_side))

    def piece(self, side: int) -> np.ndarray:
        """Coefficients (3, 3) of all basis functions on one piece."""
        return self.coeffs[:, (side + 1) // 2, :]

    def value(self, i: int, side: int, x, y):
        a, b, c = self.coeffs[i, (side + 1) // 2]
        return a + b * np.asarray(x) + c * np.asarray(y)

    def gradient(self, i: int, side: int) -> np.ndarray:
        return self.coeffs[i, (side + 1) // 2, 1:]


def build_ife_basis(
    vertices: np.ndarray,
    p4: np.ndarray,
    p5: np.ndarray,
    beta_minus: float,
    beta_plus: float,
    lone_side: int,
) -> IfeElementBasis:
    """Construct the three immersed basis functions of one cut triangle.

    Parameters
    ----------
    vertices : (3, 2) array
        Triangle vertices; the chord p4-p5 must separate exactly one of
        them (on side ``lone_side``) from the other two.
    beta_minus, beta_plus : float
        Positive diffusion coefficients entering the flux condition.

    Raises
    ------
    IfeConstructionError
        For degenerate cuts (a chord endpoint coincides with a vertex) or
        a numerically singular 6x6 system.
    ValueError
        For nonpositive coefficients or an invalid side split.
    """
    vertices = np.asarray(vertices, dtype=float)
    p4 = np.asarray(p4, dtype=float)
    p5 = np.asarray(p5, dtype=float)
    if beta_minus <= 0.0 or beta_plus <= 0.0:
        raise ValueError("diffusion coefficients must be positive")
    if lone_side not in (-1, 1):
        raise ValueError("lone_side must be -1 or +1")

    diam = max(np.linalg.norm(vertices[i] - vertices[j]) for i in range(3) for j in range(i))
    for p in (p4, p5):
        if min(np.linalg.norm(vertices - p, axis=1)) <= 1e-12 * diam:
            raise IfeConstructionError(
                "cut point coincides with a vertex; element should be regular"
            )

    d = p5 - p4
    seg_len = np.linalg.norm(d)
    if seg_len <= 1e-14 * diam:
        raise IfeConstructionError("degenerate chord")
    normal = np.array([d[1], -d[0]]) / seg_len

    cross = d[0] * (vertices[:, 1] - p4[1]) - d[1] * (vertices[:, 0] - p4[0])
    pos = cross > 0.0
    if pos.sum() == 1:
        lone_local = int(np.flatnonzero(pos)[0])
    elif pos.sum() == 2:
        lone_local = int(np.flatnonzero(~pos)[0])
    else:
        raise ValueError("chord does not separate one vertex from the other two")
    vertex_sides = np.full(3, -lone_side, dtype=np.int64)
    vertex_sides[lone_local] = lone_side

    # Unknowns (a-, b-, c-, a+, b+, c+); rows: three nodal conditions,
    # value matching at p4 and p5, flux matching across the chord.
    m = np.zeros((6, 6))
    for k in range(3):
        off = 0 if vertex_sides[k] == -1 else 3
        m[k, off : off + 3] = [1.0, vertices[k, 0], vertices[k, 1]]
    m[3, 0:3] = [1.0, p4[0], p4[1]]
    m[3, 3:6] = [-1.0, -p4[0], -p4[1]]
    m[4, 0:3] = [1.0, p5[0], p5[1]]
    m[4, 3:6] = [-1.0, -p5[0], -p5[1]]
    m[5, 1:3] = beta_minus * normal
    m[5, 4:6] = -beta_plus * normal

    cond = float(np.linalg.cond(m))
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise IfeConstructionError(
            f"singular basis system (cond ~ {cond:.2e}) on element at {vertices.tolist()}"
        )
    rhs = np.zeros((6, 3))
    rhs[:3, :] = np.eye(3)
    sol = np.linalg.solve(m, rhs)  # (6, 3), columns are basis functions

    coeffs = np.empty((3, 2, 3))
    coeffs[:, 0, :] = sol[0:3].T
    coeffs[:, 1, :] = sol[3:6].T

    return IfeElementBasis(
        vertices=vertices,
        vertex_sides=vertex_sides,
        p4=p4,
        p5=p5,
        seg_normal=normal,
        lone_side=int(lone_side),
        beta_minus_eff=float(beta_minus),
        beta_plus_eff=float(beta_plus),
        coeffs=coeffs,
        cond=cond,
    )


def eval_ife(basis: IfeElementBasis, i: int, z) -> tuple:
    """Evaluate basis i at an in-triangle point: (value, (gx, gy)).

    The piece is selected by the point's side of the chord; points on the
    chord use the minus piece (values agree there by construction).

    Raises
    ------
    ValueError
        If z lies outside the triangle (barycentric tolerance 1e-12).
    """
    z = np.asarray(z, dtype=float)
    v = basis.vertices
    t = np.array([v[1] - v[0], v[2] - v[0]]).T
    lam12 = np.linalg.solve(t, z - v[0])
    lam = np.array([1.0 - lam12.sum(), lam12[0], lam12[1]])
    if np.any(lam < -1e-12):
        raise ValueError(f"point {z.tolist()} lies outside the element")
    side = int(basis.side_of(z[0], z[1]))
    val = float(basis.value(i, side, z[0], z[1]))
    grad = basis.gradient(i, side).copy()
    return val, grad


def build_all_bases(
    mesh: UniformMesh,
    cls: ElementClassification,
    beta_minus: Callable,
    beta_plus: Callable,
) -> dict:
    """Per-element bases for every interface element of a classification.

    Variable coefficients are frozen at the chord midpoint of each
    element, preserving the piecewise-linear structure; quadrature
    elsewhere keeps using pointwise values.
    """
    bases = {}
    for t, cut in cls.cuts.items():
        mid = 0.5 * (cut.p4 + cut.p5)
        bm = float(beta_minus(mid[0], mid[1]))
        bp = float(beta_plus(mid[0], mid[1]))
        bases[t] = build_ife_basis(
            mesh.vertices[mesh.triangles[t]], cut.p4, cut.p5, bm, bp, cut.lone_side
        )
    return bases
