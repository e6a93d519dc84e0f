"""Interface geometry: element classification and the body-fitted refinement.

A level set phi partitions the square into a minus region (phi < 0) and a
plus region (phi > 0).  Elements whose interior is crossed by the zero set
are classified as interface elements, each carrying the two points where
the interface crosses its edges.  Splitting every interface element into
three subtriangles along the chord between those points yields a locally
body-fitted mesh used by the enriching and recovery operators.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional

import numpy as np

from .mesh import UniformMesh, triangle_areas

#: Default vertex snap tolerance, relative to the mesh size h.
SNAP_EPS = 1e-10

#: Number of interior sample points used to verify the one-crossing-per-edge
#: mesh resolution assumption.
_EDGE_SAMPLES = 7


class GeometryError(RuntimeError):
    """Raised when the interface violates the mesh resolution assumptions."""


@dataclass
class LevelSet:
    """Interface description by a scalar level-set function.

    ``phi(x, y)`` must accept numpy arrays and broadcast; the zero set
    separates the minus region {phi < 0} from the plus region {phi > 0}.
    ``grad_phi`` is optional and only used as an acceleration hint.
    """

    phi: Callable[[np.ndarray, np.ndarray], np.ndarray]
    grad_phi: Optional[Callable[[np.ndarray, np.ndarray], tuple]] = None

    def __call__(self, x, y):
        return self.phi(x, y)


@dataclass
class InterfaceCut:
    """Cut data of one interface element.

    ``p4`` lies on the lower-indexed cut edge, ``p5`` on the higher one.
    ``lone_vertex`` is the (global) vertex separated from the other two by
    the chord p4-p5 and ``lone_side`` its region sign.
    """

    p4: np.ndarray
    p5: np.ndarray
    cut_edges: tuple
    lone_vertex: int
    lone_side: int


@dataclass
class ElementClassification:
    """Per-element interface classification of a mesh.

    ``side`` holds -1/+1 for regular elements and 0 for interface
    elements; ``cuts`` maps interface triangle index to its cut record.
    ``edge_point`` maps every strictly sign-changing edge to the level-set
    root on it (shared between the edge's incident elements).
    """

    side: np.ndarray
    vertex_sign: np.ndarray
    cuts: dict
    edge_point: dict
    eps_snap: float

    @property
    def interface_elements(self) -> np.ndarray:
        return np.flatnonzero(self.side == 0)

    def is_interface(self, t: int) -> bool:
        return self.side[t] == 0


def edge_intersection(a, b, ls: LevelSet, max_iter: int = 200) -> np.ndarray:
    """Locate the level-set root on the segment [a, b].

    Bisection safeguarded with secant steps; the returned point p satisfies
    |phi(p)| <= 1e-12 * (1 + |phi(a)| + |phi(b)|).

    Raises
    ------
    ValueError
        If phi does not change sign strictly between a and b.
    GeometryError
        If the iteration fails to converge within ``max_iter`` steps.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    fa = float(ls.phi(a[0], a[1]))
    fb = float(ls.phi(b[0], b[1]))
    if fa == 0.0:
        return a.copy()
    if fb == 0.0:
        return b.copy()
    if fa * fb > 0.0:
        raise ValueError("no sign change of phi on segment")
    tol = 1e-12 * (1.0 + abs(fa) + abs(fb))

    def point(t):
        return a + t * (b - a)

    lo, hi = 0.0, 1.0
    flo, fhi = fa, fb
    t_prev, f_prev = lo, flo
    t_cur, f_cur = hi, fhi
    for _ in range(max_iter):
        # Secant proposal; fall back to bisection when it leaves the
        # bracket or stalls.
        denom = f_cur - f_prev
        if denom != 0.0:
            t_new = t_cur - f_cur * (t_cur - t_prev) / denom
        else:
            t_new = 0.5 * (lo + hi)
        if not (lo < t_new < hi):
            t_new = 0.5 * (lo + hi)
        p = point(t_new)
        f_new = float(ls.phi(p[0], p[1]))
        if abs(f_new) <= tol:
            return p
        if flo * f_new < 0.0:
            hi, fhi = t_new, f_new
        else:
            lo, flo = t_new, f_new
        t_prev, f_prev = t_cur, f_cur
        t_cur, f_cur = t_new, f_new
        if hi - lo < 1e-17:
            return point(0.5 * (lo + hi))
    raise GeometryError(f"edge root search did not converge in {max_iter} iterations")


def _edge_roots_vectorized(pa, pb, ls: LevelSet, iters: int = 60):
    """Bisection roots on many segments at once; phi(pa) < 0 < phi(pb)."""
    lo = np.zeros(pa.shape[0])
    hi = np.ones(pa.shape[0])
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        pm = pa + mid[:, None] * (pb - pa)
        fm = ls.phi(pm[:, 0], pm[:, 1])
        neg = fm < 0.0
        lo = np.where(neg, mid, lo)
        hi = np.where(neg, hi, mid)
    t = 0.5 * (lo + hi)
    return pa + t[:, None] * (pb - pa)


def _count_sign_flips(signs: np.ndarray) -> np.ndarray:
    """Count strict sign changes along each row, skipping zeros."""
    m, k = signs.shape
    idx = np.where(signs != 0, np.arange(k)[None, :], -1)
    last = np.maximum.accumulate(idx, axis=1)
    prev = np.where(last >= 0, np.take_along_axis(signs, np.maximum(last, 0), axis=1), 0)
    flips = np.zeros(m, dtype=np.int64)
    cur = signs[:, 1:]
    before = prev[:, :-1]
    flips += ((cur != 0) & (before != 0) & (cur != before)).sum(axis=1)
    return flips


def classify_elements(
    mesh: UniformMesh, ls: LevelSet, eps_snap: float = SNAP_EPS
) -> ElementClassification:
    """Classify every element of the mesh against the level set.

    Vertex values with |phi| < eps_snap*h are snapped to zero.  A triangle
    whose snapped vertex signs are strictly mixed (-,-,+ or +,+,-) is an
    interface element; any pattern containing a snapped zero is treated as
    regular and assigned the side of its centroid (the interface at most
    touches it through vertices, up to snap tolerance).

    Raises
    ------
    GeometryError
        If sampling detects more than one interface crossing on some edge,
        or phi vanishes along an entire edge.
    """
    h = mesh.h
    tol = eps_snap * h
    vx, vy = mesh.vertices[:, 0], mesh.vertices[:, 1]
    vphi = np.asarray(ls.phi(vx, vy), dtype=float)
    if not np.all(np.isfinite(vphi)):
        raise GeometryError("phi is not finite at some mesh vertex")
    vsign = np.where(np.abs(vphi) < tol, 0, np.sign(vphi)).astype(np.int64)

    _check_edge_resolution(mesh, ls, vsign, tol)

    tsign = vsign[mesh.triangles]
    has_minus = (tsign == -1).any(axis=1)
    has_plus = (tsign == 1).any(axis=1)
    has_zero = (tsign == 0).any(axis=1)
    interface = has_minus & has_plus & ~has_zero

    side = np.zeros(mesh.num_triangles, dtype=np.int64)
    pure = ~interface & ~(has_minus & has_plus)
    side[pure & has_minus] = -1
    side[pure & has_plus] = 1
    undecided = ~interface & (side == 0)
    if np.any(undecided):
        cents = mesh.vertices[mesh.triangles[undecided]].mean(axis=1)
        csign = np.sign(ls.phi(cents[:, 0], cents[:, 1]))
        csign = np.where(csign == 0, -1, csign)
        side[undecided] = csign.astype(np.int64)

    # Level-set roots on every strictly sign-changing edge, computed once
    # per edge so adjacent elements share the exact same point.
    esign = vsign[mesh.edges]
    cut_mask = esign[:, 0] * esign[:, 1] == -1
    cut_ids = np.flatnonzero(cut_mask)
    edge_point: dict = {}
    if cut_ids.size:
        a = mesh.vertices[mesh.edges[cut_ids, 0]]
        b = mesh.vertices[mesh.edges[cut_ids, 1]]
        fa = vphi[mesh.edges[cut_ids, 0]]
        swap = fa > 0
        pa = np.where(swap[:, None], b, a)
        pb = np.where(swap[:, None], a, b)
        roots = _edge_roots_vectorized(pa, pb, ls)
        froot = np.abs(ls.phi(roots[:, 0], roots[:, 1]))
        fb2 = vphi[mesh.edges[cut_ids, 1]]
        root_tol = 1e-12 * (1.0 + np.abs(fa) + np.abs(fb2))
        bad = froot > root_tol
        for k in np.flatnonzero(bad):
            roots[k] = edge_intersection(
                mesh.vertices[mesh.edges[cut_ids[k], 0]],
                mesh.vertices[mesh.edges[cut_ids[k], 1]],
                ls,
            )
        edge_point = {int(e): roots[k] for k, e in enumerate(cut_ids)}

    cuts: dict = {}
    for t in np.flatnonzero(interface):
        tri = mesh.triangles[t]
        signs = vsign[tri]
        lone_side = -1 if (signs == -1).sum() == 1 else 1
        lone_local = int(np.flatnonzero(signs == lone_side)[0])
        local_edges = mesh.tri_edges[t]
        tri_cut_edges = sorted(
            int(local_edges[k])
            for k in range(3)
            if int(local_edges[k]) in edge_point
        )
        if len(tri_cut_edges) != 2:
            raise GeometryError(
                f"interface element {t} has {len(tri_cut_edges)} cut edges"
            )
        cuts[t] = InterfaceCut(
            p4=edge_point[tri_cut_edges[0]],
            p5=edge_point[tri_cut_edges[1]],
            cut_edges=(tri_cut_edges[0], tri_cut_edges[1]),
            lone_vertex=int(tri[lone_local]),
            lone_side=int(lone_side),
        )

    return ElementClassification(
        side=side, vertex_sign=vsign, cuts=cuts, edge_point=edge_point, eps_snap=eps_snap
    )


def _check_edge_resolution(mesh, ls, vsign, tol):
    """Verify at most one strict crossing per edge by dense sampling."""
    ts = np.linspace(0.0, 1.0, _EDGE_SAMPLES + 2)[1:-1]
    a = mesh.vertices[mesh.edges[:, 0]]
    b = mesh.vertices[mesh.edges[:, 1]]
    pts_x = a[:, 0][:, None] + ts[None, :] * (b[:, 0] - a[:, 0])[:, None]
    pts_y = a[:, 1][:, None] + ts[None, :] * (b[:, 1] - a[:, 1])[:, None]
    inner = np.asarray(ls.phi(pts_x, pts_y), dtype=float)
    inner_sign = np.where(np.abs(inner) < tol, 0, np.sign(inner)).astype(np.int64)
    signs = np.column_stack([vsign[mesh.edges[:, 0]], inner_sign, vsign[mesh.edges[:, 1]]])
    flips = _count_sign_flips(signs)
    if np.any(flips > 1):
        worst = int(np.argmax(flips))
        raise GeometryError(
            f"edge {worst} is crossed {int(flips[worst])} times by the interface; "
            "refine the mesh"
        )
    if np.any((signs == 0).all(axis=1)):
        bad = int(np.argmax((signs == 0).all(axis=1)))
        raise GeometryError(f"phi vanishes along edge {bad}")


@dataclass
class FittedMesh:
    """Local body-fitted refinement of a classified mesh.

    Regular elements are kept; every interface element is split into the
    lone-vertex triangle plus two triangles from the remaining
    quadrilateral.  ``hat_vertices`` extends the mesh vertices with one
    intersection node per cut edge (ordered by edge index).
    """

    mesh: UniformMesh
    hat_vertices: np.ndarray
    sub_triangles: np.ndarray
    parent: np.ndarray
    side: np.ndarray
    gamma_h_nodes: np.ndarray
    edge_node: dict
    parent_start: np.ndarray
    angle_fallbacks: int
    _vertex_sub_cache: tuple = field(default=None, repr=False)

    @property
    def num_hat_vertices(self) -> int:
        return self.hat_vertices.shape[0]

    @property
    def num_sub_triangles(self) -> int:
        return self.sub_triangles.shape[0]

    @property
    def minus_tris(self) -> np.ndarray:
        return np.flatnonzero(self.side == -1)

    @property
    def plus_tris(self) -> np.ndarray:
        return np.flatnonzero(self.side == 1)

    @cached_property
    def areas(self) -> np.ndarray:
        return triangle_areas(self.hat_vertices, self.sub_triangles)

    def subs_of(self, t: int) -> np.ndarray:
        """Indices of the subtriangles covering parent triangle t."""
        return np.arange(self.parent_start[t], self.parent_start[t + 1])

    def vertex_subs(self, v: int) -> np.ndarray:
        """Subtriangles having hat vertex v as a corner."""
        if self._vertex_sub_cache is None:
            inc_v = self.sub_triangles.ravel()
            inc_t = np.repeat(np.arange(self.num_sub_triangles), 3)
            order = np.argsort(inc_v * (self.num_sub_triangles + 1) + inc_t)
            sorted_v = inc_v[order]
            sorted_t = inc_t[order]
            starts = np.searchsorted(sorted_v, np.arange(self.num_hat_vertices + 1))
            self._vertex_sub_cache = (starts, sorted_t)
        starts, sorted_t = self._vertex_sub_cache
        return sorted_t[starts[v] : starts[v + 1]]


def _angles_of(p0, p1, p2):
    v01 = p1 - p0
    v02 = p2 - p0
    v12 = p2 - p1
    def ang(u, v):
        c = np.dot(u, v) / (np.linalg.norm(u) * np.linalg.norm(v))
        return float(np.arccos(np.clip(c, -1.0, 1.0)))
    a0 = ang(v01, v02)
    a1 = ang(-v01, v12)
    return np.array([a0, a1, np.pi - a0 - a1])


def _split_admissible(angles_pair):
    lo, hi = np.pi / 4.0, 3.0 * np.pi / 4.0
    return all(np.any((a >= lo) & (a <= hi)) for a in angles_pair)


def build_fitted_mesh(mesh: UniformMesh, cls: ElementClassification) -> FittedMesh:
    """Split interface elements along their chord into three subtriangles.

    The quadrilateral left after removing the lone-vertex triangle is
    split by the diagonal whose two triangles each contain an angle in
    [pi/4, 3pi/4]; when both diagonals qualify the one maximizing the
    minimum angle wins, and when neither does the max-min-angle diagonal
    is used and counted as a fallback.
    """
    nv = mesh.num_vertices
    used_edges = sorted({e for cut in cls.cuts.values() for e in cut.cut_edges})
    edge_node = {e: nv + k for k, e in enumerate(used_edges)}
    if used_edges:
        extra = np.vstack([cls.edge_point[e] for e in used_edges])
        hat_vertices = np.vstack([mesh.vertices, extra])
    else:
        hat_vertices = mesh.vertices.copy()

    sub_tris = []
    parent = []
    side = []
    parent_start = np.zeros(mesh.num_triangles + 1, dtype=np.int64)
    fallbacks = 0

    def push(tri, t, s):
        a = hat_vertices[list(tri)]
        area2 = (a[1, 0] - a[0, 0]) * (a[2, 1] - a[0, 1]) - (a[2, 0] - a[0, 0]) * (
            a[1, 1] - a[0, 1]
        )
        if area2 < 0.0:
            tri = (tri[0], tri[2], tri[1])
        sub_tris.append(tri)
        parent.append(t)
        side.append(s)

    for t in range(mesh.num_triangles):
        if cls.side[t] != 0:
            tri = mesh.triangles[t]
            push((int(tri[0]), int(tri[1]), int(tri[2])), t, int(cls.side[t]))
            parent_start[t + 1] = len(sub_tris)
            continue

        cut = cls.cuts[t]
        tri = mesh.triangles[t]
        lone_local = int(np.flatnonzero(tri == cut.lone_vertex)[0])
        va = int(tri[(lone_local + 1) % 3])
        vb = int(tri[(lone_local + 2) % 3])
        lone = cut.lone_vertex

        # Map each cut point to the edge it lies on: (lone, va) or (lone, vb).
        e_la = mesh.edge_index[(min(lone, va), max(lone, va))]
        e_lb = mesh.edge_index[(min(lone, vb), max(lone, vb))]
        if set(cut.cut_edges) != {e_la, e_lb}:
            raise GeometryError(f"cut edges of element {t} do not meet the lone vertex")
        node_a = edge_node[e_la]
        node_b = edge_node[e_lb]

        push((lone, node_a, node_b), t, cut.lone_side)

        # Quadrilateral va -> vb -> node_b -> node_a, split by a diagonal.
        quad = (va, vb, node_b, node_a)
        quad_side = -cut.lone_side
        pts = {k: hat_vertices[k] for k in quad}
        split1 = ((va, vb, node_b), (va, node_b, node_a))
        split2 = ((vb, node_b, node_a), (vb, node_a, va))
        cand = []
        for s1, s2 in (split1, split2):
            ang1 = _angles_of(pts[s1[0]], pts[s1[1]], pts[s1[2]])
            ang2 = _angles_of(pts[s2[0]], pts[s2[1]], pts[s2[2]])
            cand.append(((s1, s2), (ang1, ang2), min(ang1.min(), ang2.min())))
        admissible = [c for c in cand if _split_admissible(c[1])]
        if admissible:
            best = max(admissible, key=lambda c: c[2])
        else:
            best = max(cand, key=lambda c: c[2])
            fallbacks += 1
        for s in best[0]:
            push(s, t, quad_side)
        parent_start[t + 1] = len(sub_tris)

    gamma = np.array(sorted(edge_node.values()), dtype=np.int64)
    fm = FittedMesh(
        mesh=mesh,
        hat_vertices=hat_vertices,
        sub_triangles=np.asarray(sub_tris, dtype=np.int64),
        parent=np.asarray(parent, dtype=np.int64),
        side=np.asarray(side, dtype=np.int64),
        gamma_h_nodes=gamma,
        edge_node=edge_node,
        parent_start=parent_start,
        angle_fallbacks=fallbacks,
    )
    bad = fm.areas <= 0.0
    if np.any(bad):
        raise GeometryError(f"{int(bad.sum())} degenerate subtriangles produced")
    return fm
