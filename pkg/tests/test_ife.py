import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ifegr import IfeConstructionError, build_all_bases, build_ife_basis, eval_ife
from ifegr import LevelSet, build_uniform_mesh, classify_elements
from oracles import gauss_solve

UNIT = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


def test_matches_hand_rolled_gaussian_elimination():
    p4 = np.array([0.5, 0.0])
    p5 = np.array([0.0, 0.5])
    basis = build_ife_basis(UNIT, p4, p5, 1.0, 10.0, -1)
    # independent reconstruction: origin is on the minus side
    d = p5 - p4
    n = np.array([d[1], -d[0]]) / np.hypot(d[0], d[1])
    m = np.zeros((6, 6))
    sides = [-1, 1, 1]
    for k in range(3):
        off = 0 if sides[k] == -1 else 3
        m[k, off : off + 3] = [1.0, UNIT[k, 0], UNIT[k, 1]]
    m[3, :3] = [1.0, p4[0], p4[1]]
    m[3, 3:] = [-1.0, -p4[0], -p4[1]]
    m[4, :3] = [1.0, p5[0], p5[1]]
    m[4, 3:] = [-1.0, -p5[0], -p5[1]]
    m[5, 1:3] = 1.0 * n
    m[5, 4:6] = -10.0 * n
    for i in range(3):
        rhs = np.zeros(6)
        rhs[i] = 1.0
        sol = gauss_solve(m, rhs)
        assert np.allclose(basis.coeffs[i, 0], sol[:3], atol=1e-12)
        assert np.allclose(basis.coeffs[i, 1], sol[3:], atol=1e-12)


def test_equal_betas_reduce_to_hats():
    basis = build_ife_basis(UNIT, np.array([0.5, 0.0]), np.array([0.0, 0.5]), 2.0, 2.0, -1)
    hats = np.array([[1.0, -1.0, -1.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    for i in range(3):
        assert np.allclose(basis.coeffs[i, 0], hats[i], atol=1e-12)
        assert np.allclose(basis.coeffs[i, 1], hats[i], atol=1e-12)


def test_partition_of_unity_coefficientwise():
    basis = build_ife_basis(UNIT, np.array([0.4, 0.0]), np.array([0.0, 0.7]), 1.0, 1000.0, -1)
    total = basis.coeffs.sum(axis=0)
    for s in range(2):
        assert np.allclose(total[s], [1.0, 0.0, 0.0], atol=1e-12)


def test_eval_nodal_and_continuity():
    basis = build_ife_basis(UNIT, np.array([0.5, 0.0]), np.array([0.0, 0.5]), 1.0, 10.0, -1)
    for i in range(3):
        for j in range(3):
            val, _ = eval_ife(basis, i, UNIT[j])
            assert abs(val - float(i == j)) < 1e-12
        vm = basis.value(i, -1, *basis.p4)
        vp = basis.value(i, 1, *basis.p4)
        assert abs(vm - vp) < 1e-10
        # on-chord evaluation uses the minus piece
        val, grad = eval_ife(basis, i, basis.p4)
        assert abs(val - vm) < 1e-14
        assert np.allclose(grad, basis.gradient(i, -1))
        # flux continuity of the evaluated gradients
        n = basis.seg_normal
        fm = 1.0 * basis.gradient(i, -1) @ n
        fp = 10.0 * basis.gradient(i, 1) @ n
        assert abs(fm - fp) <= 1e-10 * (1.0 + abs(fm))


def test_eval_outside_raises():
    basis = build_ife_basis(UNIT, np.array([0.5, 0.0]), np.array([0.0, 0.5]), 1.0, 10.0, -1)
    with pytest.raises(ValueError):
        eval_ife(basis, 0, np.array([0.8, 0.8]))


def test_degenerate_cut_rejected():
    with pytest.raises(IfeConstructionError):
        build_ife_basis(UNIT, np.array([0.0, 0.0]), np.array([0.0, 0.5]), 1.0, 10.0, -1)


def test_invalid_inputs():
    with pytest.raises(ValueError):
        build_ife_basis(UNIT, np.array([0.5, 0.0]), np.array([0.0, 0.5]), -1.0, 10.0, -1)
    with pytest.raises(ValueError):
        build_ife_basis(UNIT, np.array([0.5, 0.0]), np.array([0.0, 0.5]), 1.0, 10.0, 0)


@st.composite
def cut_elements(draw):
    pts = draw(
        st.lists(
            st.tuples(
                st.floats(-2.0, 2.0, allow_nan=False), st.floats(-2.0, 2.0, allow_nan=False)
            ),
            min_size=3, max_size=3,
        )
    )
    verts = np.array(pts)
    d1 = verts[1] - verts[0]
    d2 = verts[2] - verts[0]
    area2 = d1[0] * d2[1] - d1[1] * d2[0]
    if abs(area2) < 0.5:
        verts = UNIT * 2.0  # fall back to a healthy triangle
    lone = draw(st.integers(0, 2))
    t1 = draw(st.floats(0.1, 0.9))
    t2 = draw(st.floats(0.1, 0.9))
    a, b, c = verts[lone], verts[(lone + 1) % 3], verts[(lone + 2) % 3]
    p4 = a + t1 * (b - a)
    p5 = a + t2 * (c - a)
    log_bm = draw(st.floats(-3.0, 3.0))
    log_bp = draw(st.floats(-3.0, 3.0))
    lone_side = draw(st.sampled_from([-1, 1]))
    return verts, p4, p5, 10.0**log_bm, 10.0**log_bp, lone_side


@given(cut_elements())
@settings(max_examples=200, deadline=None)
def test_invariants_randomized(case):
    verts, p4, p5, bm, bp, lone_side = case
    basis = build_ife_basis(verts, p4, p5, bm, bp, lone_side)
    scale = max(1.0, np.abs(basis.coeffs).max())
    # nodal conditions on each vertex's own piece
    for i in range(3):
        for j in range(3):
            v = basis.value(i, int(basis.vertex_sides[j]), verts[j, 0], verts[j, 1])
            assert abs(v - float(i == j)) < 1e-10 * scale
        for p in (p4, p5):
            assert abs(basis.value(i, -1, *p) - basis.value(i, 1, *p)) < 1e-10 * scale
        n = basis.seg_normal
        fm = bm * basis.gradient(i, -1) @ n
        fp = bp * basis.gradient(i, 1) @ n
        assert abs(fm - fp) <= 1e-10 * (1.0 + abs(fm) + abs(fp)) * scale
    total = basis.coeffs.sum(axis=0)
    assert np.allclose(total[0], [1, 0, 0], atol=1e-10 * scale)
    assert np.allclose(total[1], [1, 0, 0], atol=1e-10 * scale)


def test_build_all_bases_variable_beta():
    mesh = build_uniform_mesh(8)
    ls = LevelSet(phi=lambda x, y: x * x + y * y - 0.36)
    cls = classify_elements(mesh, ls)
    beta_m = lambda x, y: 1.0 + 0.5 * (x * x + y * y)
    beta_p = lambda x, y: 10.0 + x * 0.0
    bases = build_all_bases(mesh, cls, beta_m, beta_p)
    assert set(bases) == set(cls.cuts)
    for t, basis in bases.items():
        mid = 0.5 * (cls.cuts[t].p4 + cls.cuts[t].p5)
        assert basis.beta_minus_eff == pytest.approx(float(beta_m(mid[0], mid[1])))
        assert basis.beta_plus_eff == pytest.approx(10.0)
