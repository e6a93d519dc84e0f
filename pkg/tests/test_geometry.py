import numpy as np
import pytest

from ifegr import (
    GeometryError,
    LevelSet,
    build_fitted_mesh,
    build_uniform_mesh,
    classify_elements,
    edge_intersection,
)
from oracles import bisect_root, brute_interface_mask


def line_ls(x0=0.3):
    return LevelSet(phi=lambda x, y: x - x0 + 0.0 * y,
                    grad_phi=lambda x, y: (np.ones_like(x), np.zeros_like(y)))


def circle_ls(r=0.6):
    return LevelSet(phi=lambda x, y: x * x + y * y - r * r)


def cardioid_ls():
    def phi(x, y):
        q = 3.0 * (x * x + y * y) - x
        return q * q - x * x - y * y
    return LevelSet(phi=phi)


class TestEdgeIntersection:
    def test_linear_root(self):
        p = edge_intersection((0.0, 0.0), (1.0, 0.0), line_ls())
        assert np.allclose(p, [0.3, 0.0], atol=1e-12)

    def test_circle_root(self):
        p = edge_intersection((0.0, 0.0), (1.0, 0.0), circle_ls())
        assert np.allclose(p, [0.6, 0.0], atol=1e-12)

    def test_cardioid_against_bisection_oracle(self):
        ls = cardioid_ls()
        a, b = np.array([0.05, 0.0]), np.array([0.05, 0.5])
        p = edge_intersection(a, b, ls)
        q = bisect_root(a, b, ls.phi)
        assert np.linalg.norm(p - q) < 1e-12
        assert abs(ls.phi(p[0], p[1])) < 1e-12 * (1 + abs(ls.phi(*a)) + abs(ls.phi(*b)))

    def test_no_sign_change_errors(self):
        with pytest.raises(ValueError):
            edge_intersection((0.5, 0.0), (1.0, 0.0), line_ls())


class TestClassification:
    def test_line_n4_matches_brute_force(self):
        mesh = build_uniform_mesh(4)
        ls = line_ls()
        cls = classify_elements(mesh, ls)
        brute = brute_interface_mask(mesh, ls.phi, per_side=60)
        assert np.array_equal(cls.side == 0, brute)

    def test_circle_n32_matches_dense_sampling(self):
        mesh = build_uniform_mesh(32)
        ls = circle_ls()
        cls = classify_elements(mesh, ls)
        brute = brute_interface_mask(mesh, ls.phi, per_side=100)
        assert np.array_equal(cls.side == 0, brute)

    def test_all_positive_is_regular_plus(self):
        mesh = build_uniform_mesh(4)
        cls = classify_elements(mesh, LevelSet(phi=lambda x, y: 1.0 + x * x + y * y))
        assert np.all(cls.side == 1)
        assert not cls.cuts

    def test_double_crossing_rejected(self):
        # small circle centered on an edge crosses that edge twice
        mesh = build_uniform_mesh(2)
        ls = LevelSet(phi=lambda x, y: (x - 0.5) ** 2 + y * y - 0.01)
        with pytest.raises(GeometryError, match="crossed"):
            classify_elements(mesh, ls)

    def test_phi_vanishing_on_edge_rejected(self):
        mesh = build_uniform_mesh(2)
        with pytest.raises(GeometryError):
            classify_elements(mesh, LevelSet(phi=lambda x, y: y + 0.0 * x))

    def test_cut_metadata(self):
        mesh = build_uniform_mesh(8)
        ls = circle_ls()
        cls = classify_elements(mesh, ls)
        for t, cut in cls.cuts.items():
            tri = mesh.triangles[t]
            assert cut.lone_vertex in tri
            assert cut.lone_side in (-1, 1)
            assert cls.vertex_sign[cut.lone_vertex] == cut.lone_side
            # both cut points sit on the level set
            for p in (cut.p4, cut.p5):
                assert abs(ls.phi(p[0], p[1])) < 1e-10


class TestFittedMesh:
    def test_line_area_conservation_and_sides(self):
        mesh = build_uniform_mesh(4)
        ls = line_ls()
        cls = classify_elements(mesh, ls)
        fm = build_fitted_mesh(mesh, cls)
        assert abs(fm.areas.sum() - 4.0) < 1e-12
        cents = fm.hat_vertices[fm.sub_triangles].mean(axis=1)
        sign = np.sign(ls.phi(cents[:, 0], cents[:, 1]))
        assert np.array_equal(sign.astype(int), fm.side)

    def test_interface_element_splits_into_three(self):
        mesh = build_uniform_mesh(8)
        cls = classify_elements(mesh, circle_ls())
        fm = build_fitted_mesh(mesh, cls)
        h2 = (mesh.h ** 2) / 2.0
        for t in cls.cuts:
            subs = fm.subs_of(t)
            assert subs.size == 3
            assert abs(fm.areas[subs].sum() - h2) < 1e-12
        # non-interface elements kept unchanged
        for t in np.flatnonzero(cls.side != 0)[::17]:
            subs = fm.subs_of(t)
            assert subs.size == 1
            assert np.array_equal(
                np.sort(fm.sub_triangles[subs[0]]), np.sort(mesh.triangles[t])
            )

    def test_side_purity_against_chord(self):
        mesh = build_uniform_mesh(16)
        ls = circle_ls()
        cls = classify_elements(mesh, ls)
        fm = build_fitted_mesh(mesh, cls)
        for t, cut in cls.cuts.items():
            d = cut.p5 - cut.p4
            for s in fm.subs_of(t):
                c = fm.hat_vertices[fm.sub_triangles[s]].mean(axis=0)
                cross = d[0] * (c[1] - cut.p4[1]) - d[1] * (c[0] - cut.p4[0])
                lone = mesh.vertices[cut.lone_vertex]
                lone_cross = d[0] * (lone[1] - cut.p4[1]) - d[1] * (lone[0] - cut.p4[0])
                expected = cut.lone_side if cross * lone_cross > 0 else -cut.lone_side
                assert fm.side[s] == expected

    def test_angle_rule(self):
        for ls in (circle_ls(), cardioid_ls()):
            mesh = build_uniform_mesh(32)
            cls = classify_elements(mesh, ls)
            fm = build_fitted_mesh(mesh, cls)
            assert fm.angle_fallbacks == 0
            lo, hi = np.pi / 4, 3 * np.pi / 4
            for t in cls.cuts:
                quad_subs = fm.subs_of(t)[1:]  # lone triangle comes first
                for s in quad_subs:
                    p = fm.hat_vertices[fm.sub_triangles[s]]
                    angles = []
                    for k in range(3):
                        u = p[(k + 1) % 3] - p[k]
                        v = p[(k + 2) % 3] - p[k]
                        c = u @ v / (np.linalg.norm(u) * np.linalg.norm(v))
                        angles.append(np.arccos(np.clip(c, -1, 1)))
                    assert any(lo <= a <= hi for a in angles)

    def test_gamma_nodes_on_interface(self):
        mesh = build_uniform_mesh(16)
        ls = circle_ls()
        cls = classify_elements(mesh, ls)
        fm = build_fitted_mesh(mesh, cls)
        pts = fm.hat_vertices[fm.gamma_h_nodes]
        assert np.all(np.abs(ls.phi(pts[:, 0], pts[:, 1])) < 1e-10)
        # shared cut points deduplicated: one new node per cut edge
        assert fm.num_hat_vertices == mesh.num_vertices + len(fm.edge_node)

    def test_no_cuts_identity(self):
        mesh = build_uniform_mesh(4)
        cls = classify_elements(mesh, LevelSet(phi=lambda x, y: 1.0 + 0 * x))
        fm = build_fitted_mesh(mesh, cls)
        assert fm.num_hat_vertices == mesh.num_vertices
        assert np.array_equal(fm.sub_triangles, mesh.triangles)
        assert fm.gamma_h_nodes.size == 0

    def test_minus_plus_vertex_signs(self):
        mesh = build_uniform_mesh(16)
        ls = circle_ls()
        cls = classify_elements(mesh, ls)
        fm = build_fitted_mesh(mesh, cls)
        tol = 1e-9
        phi = ls.phi(fm.hat_vertices[:, 0], fm.hat_vertices[:, 1])
        minus_verts = np.unique(fm.sub_triangles[fm.side == -1])
        plus_verts = np.unique(fm.sub_triangles[fm.side == 1])
        assert np.all(phi[minus_verts] <= tol)
        assert np.all(phi[plus_verts] >= -tol)
