"""Uniform criss triangulation of the square [-1, 1]^2.

Each of the n x n subsquares is split along its lower-left to upper-right
diagonal, giving 2*n^2 right triangles with legs of length h = 2/n.  All
index orderings are deterministic so downstream assembled matrices are
bit-reproducible across runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class UniformMesh:
    """Triangulation of [-1, 1]^2 with full edge/adjacency topology.

    Attributes
    ----------
    n : int
        Subdivision count per axis.
    vertices : (nv, 2) float array
        Vertex coordinates, row-major over the grid: index j*(n+1)+i
        holds (-1 + 2i/n, -1 + 2j/n).
    triangles : (nt, 3) int array
        Counterclockwise vertex triples; subsquares row-major, lower
        triangle before upper triangle.
    edges : (ne, 2) int array
        Unique edges as (min, max) vertex pairs, sorted lexicographically.
    edge_tris : (ne, 2) int array
        Incident triangle indices in increasing order; -1 in the second
        slot for boundary edges.
    edge_normals : (ne, 2) float array
        Unit normal per edge, pointing from the lower-indexed incident
        triangle to the higher-indexed one (outward on the boundary).
    tri_edges : (nt, 3) int array
        Edge index of local edge k = (v_k, v_{k+1 mod 3}).
    boundary_vertices : int array
        Sorted indices of vertices on the boundary of the square.
    """

    n: int
    vertices: np.ndarray
    triangles: np.ndarray
    edges: np.ndarray
    edge_tris: np.ndarray
    edge_normals: np.ndarray
    tri_edges: np.ndarray
    boundary_vertices: np.ndarray
    edge_index: dict = field(repr=False)

    @property
    def h(self) -> float:
        return 2.0 / self.n

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_triangles(self) -> int:
        return self.triangles.shape[0]

    @property
    def num_edges(self) -> int:
        return self.edges.shape[0]

    def edge_of(self, t1: int, t2: int) -> int | None:
        """Return the shared edge index of two triangles, or None.

        A triangle paired with itself, or two triangles meeting in less
        than a full edge, yields None.
        """
        if not (0 <= t1 < self.num_triangles and 0 <= t2 < self.num_triangles):
            raise IndexError("triangle index out of range")
        if t1 == t2:
            return None
        shared = set(self.tri_edges[t1]) & set(self.tri_edges[t2])
        if len(shared) == 1:
            return shared.pop()
        return None

    def triangle_coords(self, t: int) -> np.ndarray:
        return self.vertices[self.triangles[t]]


def build_uniform_mesh(n: int) -> UniformMesh:
    """Build the uniform criss mesh with n subdivisions per axis.

    Raises
    ------
    ValueError
        If n < 1.
    """
    if n < 1:
        raise ValueError(f"subdivision count must be positive, got {n}")

    coords_1d = np.linspace(-1.0, 1.0, n + 1)
    xx, yy = np.meshgrid(coords_1d, coords_1d, indexing="xy")
    vertices = np.column_stack([xx.ravel(), yy.ravel()])

    ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    ii = ii.ravel()
    jj = jj.ravel()
    n00 = jj * (n + 1) + ii
    n10 = n00 + 1
    n01 = n00 + (n + 1)
    n11 = n01 + 1

    lower = np.column_stack([n00, n10, n11])
    upper = np.column_stack([n00, n11, n01])
    triangles = np.empty((2 * n * n, 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper

    # Unique edge list (lexicographic) and triangle->edge incidence.
    raw = np.concatenate(
        [triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]], axis=0
    )
    raw.sort(axis=1)
    keys = raw[:, 0] * (vertices.shape[0] + 1) + raw[:, 1]
    unique_keys, inverse = np.unique(keys, return_inverse=True)
    ne = unique_keys.shape[0]
    edges = np.column_stack(
        [unique_keys // (vertices.shape[0] + 1), unique_keys % (vertices.shape[0] + 1)]
    ).astype(np.int64)
    nt = triangles.shape[0]
    tri_edges = np.empty((nt, 3), dtype=np.int64)
    tri_edges[:, 0] = inverse[:nt]
    tri_edges[:, 1] = inverse[nt : 2 * nt]
    tri_edges[:, 2] = inverse[2 * nt :]

    # Incident triangles per edge, ascending.
    edge_tris = np.full((ne, 2), -1, dtype=np.int64)
    inc_edge = tri_edges.T.ravel()  # grouped so triangle ids ascend per local slot
    inc_tri = np.tile(np.arange(nt, dtype=np.int64), 3)
    order = np.argsort(inc_edge, kind="stable")
    sorted_edges = inc_edge[order]
    sorted_tris = inc_tri[order]
    # stable sort keeps ties ordered by local slot, not triangle id; sort pairs
    pair_keys = sorted_edges * (nt + 1) + sorted_tris
    order2 = np.argsort(pair_keys, kind="stable")
    sorted_edges = sorted_edges[order2]
    sorted_tris = sorted_tris[order2]
    first = np.ones(sorted_edges.shape[0], dtype=bool)
    first[1:] = sorted_edges[1:] != sorted_edges[:-1]
    slot = np.where(first, 0, 1)
    edge_tris[sorted_edges, slot] = sorted_tris

    # Edge normals oriented from first incident triangle toward the second
    # (outward for boundary edges).
    tangent = vertices[edges[:, 1]] - vertices[edges[:, 0]]
    normal = np.column_stack([tangent[:, 1], -tangent[:, 0]])
    normal /= np.linalg.norm(normal, axis=1)[:, None]
    cent = vertices[triangles].mean(axis=1)
    mid = 0.5 * (vertices[edges[:, 0]] + vertices[edges[:, 1]])
    ref = np.where(
        (edge_tris[:, 1] >= 0)[:, None],
        cent[edge_tris[:, 1]] - cent[edge_tris[:, 0]],
        mid - cent[edge_tris[:, 0]],
    )
    flip = np.einsum("ij,ij->i", normal, ref) < 0.0
    normal[flip] *= -1.0

    on_boundary = (
        (np.abs(vertices[:, 0] - 1.0) < 1e-14)
        | (np.abs(vertices[:, 0] + 1.0) < 1e-14)
        | (np.abs(vertices[:, 1] - 1.0) < 1e-14)
        | (np.abs(vertices[:, 1] + 1.0) < 1e-14)
    )
    boundary_vertices = np.flatnonzero(on_boundary)

    edge_index = {(int(a), int(b)): k for k, (a, b) in enumerate(edges)}

    return UniformMesh(
        n=n,
        vertices=vertices,
        triangles=triangles,
        edges=edges,
        edge_tris=edge_tris,
        edge_normals=normal,
        tri_edges=tri_edges,
        boundary_vertices=boundary_vertices,
        edge_index=edge_index,
    )


def triangle_areas(points: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Signed areas of triangles given as index triples into points."""
    p = points[triangles]
    return 0.5 * (
        (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
        - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1])
    )
