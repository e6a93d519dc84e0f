"""Two-stage gradient recovery and the recovery-based error estimator.

Stage one enriches the (inter-element discontinuous) immersed solution to
a continuous piecewise-linear field on the body-fitted mesh by averaging
the one-sided values at intersection nodes.  Stage two recovers a
gradient per subdomain side by per-vertex quadratic least-squares fits
over same-side patches, so interface nodes carry one value per side.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .geometry import ElementClassification, FittedMesh
from .mesh import UniformMesh
from .quadrature import interior_rule, physical_points

#: Patch least-squares systems conditioned worse than this trigger ring
#: expansion (measured on the scaled 6x6 normal matrix).
PATCH_COND_LIMIT = 1e8

_MIN_PATCH_NODES = 6
_MAX_RINGS = 12


class RecoveryError(RuntimeError):
    """Raised when a recovery patch cannot be built."""


@dataclass
class EnrichedField:
    """Continuous piecewise-linear field: one value per fitted-mesh vertex."""

    values: np.ndarray


@dataclass
class RecoveryPatch:
    """Same-side node set used for one vertex's quadratic fit."""

    center: int
    side: int
    members: np.ndarray
    cond: float


@dataclass
class RecoveredGradient:
    """Per-side nodal gradient fields on the fitted mesh.

    ``minus``/``plus`` hold one gradient per fitted-mesh vertex; only
    entries flagged by the corresponding mask belong to that side's
    subdomain mesh.  Interface nodes are flagged on both sides.
    """

    minus: np.ndarray
    plus: np.ndarray
    minus_mask: np.ndarray
    plus_mask: np.ndarray

    def values_for(self, side: int) -> np.ndarray:
        return self.minus if side < 0 else self.plus

    def mask_for(self, side: int) -> np.ndarray:
        return self.minus_mask if side < 0 else self.plus_mask


def enrich(
    u_h: np.ndarray,
    mesh: UniformMesh,
    cls: ElementClassification,
    fitted: FittedMesh,
    bases: dict,
) -> EnrichedField:
    """Average the one-sided solution values onto the fitted-mesh nodes.

    At original mesh vertices the immersed solution is already single
    valued; at each intersection node the values of all incident
    subtriangles' pieces are averaged with equal weights.
    """
    nv = mesh.num_vertices
    out = np.empty(fitted.num_hat_vertices)
    out[:nv] = u_h
    for m in fitted.gamma_h_nodes:
        z = fitted.hat_vertices[m]
        subs = fitted.vertex_subs(int(m))
        acc = 0.0
        for s in subs:
            t = int(fitted.parent[s])
            side = int(fitted.side[s])
            coeff = bases[t].piece(side)
            poly = u_h[mesh.triangles[t]] @ coeff
            acc += poly[0] + poly[1] * z[0] + poly[2] * z[1]
        out[m] = acc / subs.size
    return EnrichedField(values=out)


def _side_adjacency(fitted: FittedMesh, side: int):
    """Vertex-to-vertex CSR adjacency within one side's subtriangles."""
    subs = fitted.sub_triangles[fitted.side == side]
    if subs.size == 0:
        raise RecoveryError(f"subdomain mesh for side {side:+d} is empty")
    pairs = np.concatenate(
        [subs[:, [0, 1]], subs[:, [1, 2]], subs[:, [2, 0]],
         subs[:, [1, 0]], subs[:, [2, 1]], subs[:, [0, 2]]], axis=0
    )
    nvh = fitted.num_hat_vertices
    keys = np.unique(pairs[:, 0].astype(np.int64) * nvh + pairs[:, 1])
    heads = keys // nvh
    tails = keys % nvh
    indptr = np.searchsorted(heads, np.arange(nvh + 1))
    verts = np.unique(subs)
    return indptr, tails, verts


def _design_matrix(coords: np.ndarray, center: np.ndarray):
    """Scaled quadratic design matrix and the patch radius."""
    d = coords - center
    radius = float(np.max(np.hypot(d[:, 0], d[:, 1])))
    sx = d[:, 0] / radius
    sy = d[:, 1] / radius
    a = np.column_stack([np.ones(d.shape[0]), sx, sy, sx * sx, sx * sy, sy * sy])
    return a, radius


def _fit_gradient(a: np.ndarray, radius: float, values: np.ndarray):
    """Gradient at the patch center from the quadratic least-squares fit."""
    normal = a.T @ a
    rhs = a.T @ values
    coef = sla.solve(normal, rhs, assume_a="sym")
    return coef[1:3] / radius if values.ndim == 1 else coef[1:3] / radius


def _patch_for(indptr, tails, coords_all, v: int, side: int) -> RecoveryPatch:
    """Ring-expanded same-side patch around vertex v."""
    members = [v]
    seen = {v}
    frontier = [v]
    cond = np.inf
    for _ in range(_MAX_RINGS):
        ring = set()
        for u in frontier:
            ring.update(tails[indptr[u] : indptr[u + 1]].tolist())
        ring -= seen
        if not ring and len(members) < _MIN_PATCH_NODES:
            raise RecoveryError(
                f"patch at vertex {v} cannot reach {_MIN_PATCH_NODES} same-side nodes"
            )
        new = sorted(ring)
        members.extend(new)
        seen.update(new)
        frontier = new
        if len(members) >= _MIN_PATCH_NODES:
            a, _ = _design_matrix(coords_all[members], coords_all[v])
            cond = float(np.linalg.cond(a.T @ a))
            if cond < PATCH_COND_LIMIT:
                break
    else:
        raise RecoveryError(
            f"patch at vertex {v} stayed ill conditioned after {_MAX_RINGS} rings"
        )
    return RecoveryPatch(
        center=v, side=side, members=np.asarray(members, dtype=np.int64), cond=cond
    )


def build_patches(fitted: FittedMesh, side: int, vertices=None) -> list:
    """Recovery patches for the requested side's subdomain mesh.

    Starts from the one-element ring of each vertex and expands ring by
    ring until the patch holds at least 6 nodes and the scaled normal
    matrix is well conditioned.  ``vertices`` restricts the computation
    to a subset (defaults to every vertex of the side's mesh).
    """
    indptr, tails, side_verts = _side_adjacency(fitted, side)
    if vertices is None:
        vertices = side_verts
    coords = fitted.hat_vertices
    return [_patch_for(indptr, tails, coords, int(v), side) for v in vertices]


# Fixed one-ring offsets (units of h) of an interior vertex of the uniform
# criss mesh: E, W, N, S, NE, SW.
_RING_OFFSETS = np.array(
    [[0.0, 0.0], [1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0], [1.0, 1.0], [-1.0, -1.0]]
)


def _uniform_ring_stencil() -> np.ndarray:
    """2x7 gradient stencil of the interior one-ring patch at h = 1."""
    a, radius = _design_matrix(_RING_OFFSETS, _RING_OFFSETS[0])
    normal = a.T @ a
    inv_rows = sla.solve(normal, np.eye(6), assume_a="sym")[1:3]
    return (inv_rows @ a.T) / radius


_STENCIL = _uniform_ring_stencil()


def _fast_vertices(fitted: FittedMesh, side: int) -> np.ndarray:
    """Interior vertices whose full one-ring lies in unsplit side elements."""
    mesh = fitted.mesh
    sub_count = np.diff(fitted.parent_start)
    whole = sub_count == 1
    parent_side = np.zeros(mesh.num_triangles, dtype=np.int64)
    parent_side[whole] = fitted.side[fitted.parent_start[:-1][whole]]
    ok_tri = whole & (parent_side == side)

    count = np.zeros(mesh.num_vertices, dtype=np.int64)
    good = np.zeros(mesh.num_vertices, dtype=np.int64)
    np.add.at(count, mesh.triangles, 1)
    np.add.at(good, mesh.triangles[ok_tri], 1)
    return np.flatnonzero((count == 6) & (good == 6))


def ippr_recover(field: EnrichedField, fitted: FittedMesh) -> RecoveredGradient:
    """Recover a per-side nodal gradient from an enriched field.

    Each vertex of a side's subdomain mesh receives the gradient of the
    quadratic least-squares fit over its patch, evaluated at the vertex.
    Fits are performed in coordinates translated to the vertex and scaled
    by the patch radius, so the conditioning is mesh-size independent.
    """
    nvh = fitted.num_hat_vertices
    h = fitted.mesh.h
    values = field.values
    out = {
        -1: (np.zeros((nvh, 2)), np.zeros(nvh, dtype=bool)),
        1: (np.zeros((nvh, 2)), np.zeros(nvh, dtype=bool)),
    }
    neighbor_offsets = np.array(
        [0, 1, -1, fitted.mesh.n + 1, -(fitted.mesh.n + 1),
         fitted.mesh.n + 2, -(fitted.mesh.n + 2)], dtype=np.int64
    )

    for side in (-1, 1):
        grads, mask = out[side]
        if not np.any(fitted.side == side):
            continue
        fast = _fast_vertices(fitted, side)
        if fast.size:
            idx = fast[:, None] + neighbor_offsets[None, :]
            grads[fast] = (values[idx] @ _STENCIL.T) / h
            mask[fast] = True

        indptr, tails, side_verts = _side_adjacency(fitted, side)
        slow = np.setdiff1d(side_verts, fast, assume_unique=False)
        for v in slow:
            patch = _patch_for(indptr, tails, fitted.hat_vertices, int(v), side)
            a, radius = _design_matrix(
                fitted.hat_vertices[patch.members], fitted.hat_vertices[v]
            )
            grads[v] = _fit_gradient(a, radius, values[patch.members])
            mask[v] = True

    return RecoveredGradient(
        minus=out[-1][0], plus=out[1][0], minus_mask=out[-1][1], plus_mask=out[1][1]
    )


def recover(
    u_h: np.ndarray,
    mesh: UniformMesh,
    cls: ElementClassification,
    fitted: FittedMesh,
    bases: dict,
) -> RecoveredGradient:
    """Composite recovery: enrich to the fitted mesh, then fit patches."""
    return ippr_recover(enrich(u_h, mesh, cls, fitted, bases), fitted)


def _grad_uh_on_subs(u_h, mesh, cls, fitted, bases, sub_idx):
    """Piecewise-constant solution gradient on selected subtriangles."""
    from .system import _p1_grads  # local import to avoid a cycle

    grads = np.empty((sub_idx.size, 2))
    parents = fitted.parent[sub_idx]
    sides = fitted.side[sub_idx]
    reg_mask = cls.side[parents] != 0
    if np.any(reg_mask):
        tri = mesh.triangles[parents[reg_mask]]
        g, _ = _p1_grads(mesh.vertices[tri])
        grads[reg_mask] = np.einsum("mk,mkd->md", u_h[tri], g)
    for pos in np.flatnonzero(~reg_mask):
        t = int(parents[pos])
        poly = u_h[mesh.triangles[t]] @ bases[t].piece(int(sides[pos]))
        grads[pos] = poly[1:]
    return grads


def _rec_at_nodes(rec: RecoveredGradient, subs, sides):
    """Nodal recovered gradients (m, 3, 2) for side-tagged subtriangles."""
    pick = sides[:, None, None] < 0
    return np.where(pick, rec.minus[subs], rec.plus[subs])


def error_estimator(
    u_h: np.ndarray,
    rec: RecoveredGradient,
    mesh: UniformMesh,
    cls: ElementClassification,
    fitted: FittedMesh,
    bases: dict,
    problem,
):
    """Recovery-based local indicators and their global aggregate.

    Per parent element T the indicator is the weighted L2 mismatch
    ||beta^(1/2) (recovered - discrete) gradient|| over T, summed in
    squares over the subtriangles of interface elements; the global
    estimate is the root sum of squares.
    """
    bq4, wq4 = interior_rule(4)
    sub_idx = np.arange(fitted.num_sub_triangles)
    subs = fitted.sub_triangles
    sides = fitted.side
    coords = fitted.hat_vertices[subs]
    areas = fitted.areas

    grad_uh = _grad_uh_on_subs(u_h, mesh, cls, fitted, bases, sub_idx)
    rec_nodal = _rec_at_nodes(rec, subs, sides)
    rec_q = np.einsum("qk,mkd->mqd", bq4, rec_nodal)
    diff = rec_q - grad_uh[:, None, :]
    pts = physical_points(coords, bq4)
    beta_q = problem.beta_side(pts[..., 0], pts[..., 1], sides[:, None])
    integrand = beta_q * np.einsum("mqd,mqd->mq", diff, diff)
    per_sub = areas * (integrand @ wq4)

    eta_sq = np.zeros(mesh.num_triangles)
    np.add.at(eta_sq, fitted.parent, per_sub)
    eta = np.sqrt(eta_sq)
    return eta, float(np.sqrt(eta_sq.sum()))
