import numpy as np
import pytest

from ifegr import (
    LevelSet,
    ProblemData,
    BenchmarkProblem,
    build_all_bases,
    build_fitted_mesh,
    build_uniform_mesh,
    classify_elements,
    compute_norms,
    convergence_rate,
    convergence_study,
    ife_interpolant,
    make_problem,
    recovery_consistency,
    run_single,
    weighted_energy_error,
)
from oracles import fd_source, interface_points, off_interface_points

ALL_PROBLEMS = [
    ("ex1", dict(beta_minus=1.0, beta_plus=10.0)),
    ("ex1", dict(beta_minus=1.0, beta_plus=1000.0)),
    ("ex1", dict(beta_minus=1000.0, beta_plus=1.0)),
    ("ex2", {}),
    ("ex3", {}),
    ("ex4", {}),
    ("line", {}),
]


class TestProblemDefinitions:
    def test_unknown_name(self):
        with pytest.raises(ValueError):
            make_problem("nope")

    def test_circle_point_values(self):
        prob = make_problem("ex1", beta_minus=1.0, beta_plus=10.0)
        assert prob.data.exact_u(0.3, 0.0, -1) == pytest.approx(0.027)
        assert prob.data.f(0.3, 0.0) == pytest.approx(-2.7)

    def test_cardioid_level_set_value(self):
        prob = make_problem("ex4")
        assert prob.data.level_set.phi(0.5, 0.0) == pytest.approx(-0.1875)

    @pytest.mark.parametrize("name,params", ALL_PROBLEMS)
    def test_source_against_finite_differences(self, name, params):
        prob = make_problem(name, **params)
        rng = np.random.default_rng(20240803)
        pts = off_interface_points(prob, 100, rng)
        f_code = prob.data.f(pts[:, 0], pts[:, 1])
        f_fd = fd_source(prob, pts[:, 0], pts[:, 1])
        scale = np.maximum(np.abs(f_code), 1.0)
        assert np.abs(f_code - f_fd).max() / scale.max() < 1e-6
        assert np.all(np.abs(f_code - f_fd) <= 1e-6 * scale + 1e-6)

    @pytest.mark.parametrize("name,params", ALL_PROBLEMS)
    def test_interface_jump_conditions(self, name, params):
        prob = make_problem(name, **params)
        data = prob.data
        if data.level_set.grad_phi is None:
            pytest.skip("needs a gradient for the interface normal")
        rng = np.random.default_rng(7)
        pts = interface_points(prob, 100, rng)
        x, y = pts[:, 0], pts[:, 1]
        # value jump
        um = data.exact_u(x, y, np.full_like(x, -1))
        up = data.exact_u(x, y, np.full_like(x, 1))
        assert np.abs(up - um).max() < 1e-10 * (1 + np.abs(um).max())
        # flux jump
        gx, gy = data.level_set.grad_phi(x, y)
        norm = np.hypot(gx, gy)
        nx, ny = gx / norm, gy / norm
        gmx, gmy = data.exact_grad(x, y, np.full_like(x, -1))
        gpx, gpy = data.exact_grad(x, y, np.full_like(x, 1))
        flux_m = data.beta_minus(x, y) * (gmx * nx + gmy * ny)
        flux_p = data.beta_plus(x, y) * (gpx * nx + gpy * ny)
        scale = 1.0 + np.abs(flux_m).max()
        assert np.abs(flux_p - flux_m).max() <= 1e-8 * scale

    def test_positive_coefficients(self):
        for name, params in ALL_PROBLEMS:
            prob = make_problem(name, **params)
            rng = np.random.default_rng(1)
            pts = rng.uniform(-1, 1, size=(500, 2))
            phi = prob.data.level_set.phi(pts[:, 0], pts[:, 1])
            bm = prob.data.beta_minus(pts[:, 0], pts[:, 1])
            bp = prob.data.beta_plus(pts[:, 0], pts[:, 1])
            assert np.all(np.where(phi < 0, bm, bp) > 0)


class TestNorms:
    def test_global_linear_solution_zero_norms(self):
        ls = LevelSet(phi=lambda x, y: x - 0.3 + 0.0 * y)
        const = lambda v: (
            lambda x, y: np.full(np.broadcast_shapes(np.shape(x), np.shape(y)), v)
        )

        def exact_u(x, y, side):
            return 1.0 + 2.0 * np.asarray(x) + 3.0 * np.asarray(y) + 0.0 * np.asarray(side)

        def exact_grad(x, y, side):
            shape = np.broadcast_shapes(np.shape(x), np.shape(y), np.shape(side))
            return np.full(shape, 2.0), np.full(shape, 3.0)

        data = ProblemData(
            level_set=ls, beta_minus=const(1.0), beta_plus=const(1.0),
            f=const(0.0), exact_u=exact_u, exact_grad=exact_grad,
        )
        prob = BenchmarkProblem("linear", data)
        mesh = build_uniform_mesh(8)
        cls = classify_elements(mesh, ls)
        fitted = build_fitted_mesh(mesh, cls)
        bases = build_all_bases(mesh, cls, data.beta_minus, data.beta_plus)
        u_i = ife_interpolant(prob, mesh, cls)
        de, die, dre = compute_norms(u_i, None, prob, mesh, cls, fitted, bases)
        assert de < 1e-10 and die < 1e-10
        assert np.isnan(dre)
        assert weighted_energy_error(u_i, prob, mesh, cls, fitted, bases) < 1e-10

    def test_missing_exact_solution_rejected(self):
        const = lambda v: (
            lambda x, y: np.full(np.broadcast_shapes(np.shape(x), np.shape(y)), v)
        )
        data = ProblemData(
            level_set=LevelSet(phi=lambda x, y: x - 0.3 + 0.0 * y),
            beta_minus=const(1.0), beta_plus=const(1.0), f=const(0.0),
        )
        prob = BenchmarkProblem("anon", data)
        mesh = build_uniform_mesh(4)
        cls = classify_elements(mesh, data.level_set)
        fitted = build_fitted_mesh(mesh, cls)
        bases = build_all_bases(mesh, cls, data.beta_minus, data.beta_plus)
        with pytest.raises(ValueError):
            compute_norms(np.zeros(mesh.num_vertices), None, prob, mesh, cls, fitted, bases)


class TestPaperSpotChecks:
    def test_ex1_scifem_n32(self):
        prob = make_problem("ex1", beta_minus=1.0, beta_plus=10.0)
        res = run_single(prob, "scifem", 32)
        assert 5.71e-02 / 2 < res.de < 5.71e-02 * 2
        assert 2.19e-02 / 2 < res.dre < 2.19e-02 * 2

    def test_ex3_scifem_n64(self):
        prob = make_problem("ex3")
        res = run_single(prob, "scifem", 64)
        assert 5.93e-01 / 2 < res.de < 5.93e-01 * 2
        assert 7.24e-02 / 2 < res.dre < 7.24e-02 * 2


class TestStudies:
    def test_orders_and_monotonicity(self):
        prob = make_problem("ex1", beta_minus=1.0, beta_plus=10.0)
        table = convergence_study(prob, "scifem", [16, 32, 64])
        de = table.column("de")
        assert np.all(np.diff(de) < 0)
        assert table.rows[0].de_order is None
        assert table.rows[1].de_order == pytest.approx(
            np.log2(de[0] / de[1]), rel=1e-12
        )

    def test_unknown_method(self):
        prob = make_problem("ex1")
        with pytest.raises(ValueError):
            convergence_study(prob, "galerkin", [8, 16])

    def test_nonincreasing_sizes_rejected(self):
        prob = make_problem("ex1")
        with pytest.raises(ValueError):
            convergence_study(prob, "scifem", [16, 16])

    def test_halving_check_on_exact_solution(self, line_problem):
        table = convergence_study(line_problem, "scifem", [8, 16])
        for row in table.rows:
            assert row.de < 1e-8
        assert table.rows[1].de_order is None  # orders flagged at solver level

    def test_recovery_consistency_rate(self):
        prob = make_problem("ex1", beta_minus=1.0, beta_plus=10.0)
        pairs = recovery_consistency(prob, [16, 32])
        ns = [n for n, _ in pairs]
        errs = [e for _, e in pairs]
        assert convergence_rate(ns, errs) > 1.5
