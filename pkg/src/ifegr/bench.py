"""Benchmark problems, error norms, and convergence studies.

The four stock problems cover a circle with constant coefficients and
three jump ratios, a sharp-edged level set with a large jump, an ellipse
with a variable coefficient, and a cardioid whose interface is not
Lipschitz.  Every problem provides the exact solution, its two-sided
gradient, and the matching source term in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .geometry import ElementClassification, FittedMesh, LevelSet, classify_elements, build_fitted_mesh
from .ife import build_all_bases
from .mesh import UniformMesh, build_uniform_mesh
from .quadrature import interior_rule, physical_points
from .recovery import (
    EnrichedField,
    RecoveredGradient,
    _grad_uh_on_subs,
    _rec_at_nodes,
    enrich,
    error_estimator,
    ippr_recover,
    recover,
)
from .system import (
    AssembledSystem,
    ProblemData,
    apply_dirichlet,
    assemble_pgifem,
    assemble_scifem,
    solve,
)

METHODS = ("scifem", "pgifem")


@dataclass
class BenchmarkProblem:
    """Named problem instance: level set, coefficients, exact data."""

    name: str
    data: ProblemData
    params: dict = field(default_factory=dict)

    def boundary_g(self):
        """Dirichlet data: the exact solution restricted to the boundary."""
        data = self.data

        def g(x, y):
            side = np.where(data.level_set.phi(x, y) < 0.0, -1, 1)
            return data.exact_u(x, y, side)

        return g


def _const(v: float):
    return lambda x, y: np.full(np.broadcast_shapes(np.shape(x), np.shape(y)), float(v))


def _problem_circle(beta_minus=1.0, beta_plus=10.0, r0=0.6) -> BenchmarkProblem:
    bm, bp = float(beta_minus), float(beta_plus)
    r0 = float(r0)
    shift = (1.0 / bm - 1.0 / bp) * r0**3

    ls = LevelSet(
        phi=lambda x, y: x * x + y * y - r0 * r0,
        grad_phi=lambda x, y: (2.0 * x, 2.0 * y),
    )

    def exact_u(x, y, side):
        r3 = np.hypot(x, y) ** 3
        return np.where(np.asarray(side) < 0, r3 / bm, r3 / bp + shift)

    def exact_grad(x, y, side):
        r = np.hypot(x, y)
        beta = np.where(np.asarray(side) < 0, bm, bp)
        return 3.0 * r * x / beta, 3.0 * r * y / beta

    data = ProblemData(
        level_set=ls,
        beta_minus=_const(bm),
        beta_plus=_const(bp),
        f=lambda x, y: -9.0 * np.hypot(x, y),
        exact_u=exact_u,
        exact_grad=exact_grad,
    )
    return BenchmarkProblem(
        "circle", data, {"beta_minus": bm, "beta_plus": bp, "r0": r0}
    )


def _phi_over_beta(name, ls, lap_phi, beta_parts, params) -> BenchmarkProblem:
    """Problems with exact solution phi/beta and matching source term.

    ``beta_parts`` maps side -> (beta, grad_beta, lap_beta) callables; the
    solution phi/beta vanishes on the interface, so the value jump is zero
    and the flux beta*grad(u) = grad(phi) - phi*grad(beta)/beta is
    continuous across it.
    """

    def u_side(x, y, side):
        phi = ls.phi(x, y)
        um = phi / beta_parts[-1][0](x, y)
        up = phi / beta_parts[1][0](x, y)
        return np.where(np.asarray(side) < 0, um, up)

    def grad_side(x, y, side):
        phi = ls.phi(x, y)
        gpx, gpy = ls.grad_phi(x, y)
        out_x = {}
        out_y = {}
        for s in (-1, 1):
            beta, gbeta, _ = beta_parts[s]
            b = beta(x, y)
            gbx, gby = gbeta(x, y)
            out_x[s] = gpx / b - phi * gbx / b**2
            out_y[s] = gpy / b - phi * gby / b**2
        neg = np.asarray(side) < 0
        return np.where(neg, out_x[-1], out_x[1]), np.where(neg, out_y[-1], out_y[1])

    def f_side(x, y, side):
        phi = ls.phi(x, y)
        gpx, gpy = ls.grad_phi(x, y)
        lphi = lap_phi(x, y)
        out = {}
        for s in (-1, 1):
            beta, gbeta, lbeta = beta_parts[s]
            b = beta(x, y)
            gbx, gby = gbeta(x, y)
            lb = lbeta(x, y)
            out[s] = (
                -lphi
                + (gpx * gbx + gpy * gby) / b
                + phi * (lb / b - (gbx * gbx + gby * gby) / b**2)
            )
        return np.where(np.asarray(side) < 0, out[-1], out[1])

    def f(x, y):
        side = np.where(ls.phi(x, y) < 0.0, -1, 1)
        return f_side(x, y, side)

    data = ProblemData(
        level_set=ls,
        beta_minus=beta_parts[-1][0],
        beta_plus=beta_parts[1][0],
        f=f,
        exact_u=u_side,
        exact_grad=grad_side,
    )
    return BenchmarkProblem(name, data, params)


def _problem_sharp_edge(theta_deg=40.0, beta_minus=1.0, beta_plus=1000.0):
    t2 = math.tan(math.radians(float(theta_deg))) ** 2

    ls = LevelSet(
        phi=lambda x, y: -y * y + t2 * x * (x - 1.0) ** 2,
        grad_phi=lambda x, y: (t2 * (x - 1.0) * (3.0 * x - 1.0), -2.0 * y),
    )
    lap_phi = lambda x, y: t2 * (6.0 * x - 4.0) - 2.0 + 0.0 * x - 0.0 * y
    zero = lambda x, y: (np.zeros(np.broadcast_shapes(np.shape(x), np.shape(y))),) * 2
    beta_parts = {
        -1: (_const(beta_minus), zero, _const(0.0)),
        1: (_const(beta_plus), zero, _const(0.0)),
    }
    return _phi_over_beta(
        "sharp_edge",
        ls,
        lap_phi,
        beta_parts,
        {"theta_deg": float(theta_deg), "beta_minus": beta_minus, "beta_plus": beta_plus},
    )


def _problem_ellipse():
    ls = LevelSet(
        phi=lambda x, y: 4.0 * x * x + 16.0 * y * y - 1.0,
        grad_phi=lambda x, y: (8.0 * x, 32.0 * y),
    )
    lap_phi = _const(40.0)

    beta_m = lambda x, y: 1.0 + 0.5 * (x * x - x * y + y * y)
    gbeta_m = lambda x, y: (x - 0.5 * y, y - 0.5 * x)
    zero = lambda x, y: (np.zeros(np.broadcast_shapes(np.shape(x), np.shape(y))),) * 2
    beta_parts = {
        -1: (beta_m, gbeta_m, _const(2.0)),
        1: (_const(1.0), zero, _const(0.0)),
    }
    return _phi_over_beta("ellipse", ls, lap_phi, beta_parts, {})


def _problem_cardioid():
    def phi(x, y):
        q = 3.0 * (x * x + y * y) - x
        return q * q - x * x - y * y

    def grad_phi(x, y):
        q = 3.0 * (x * x + y * y) - x
        return 2.0 * q * (6.0 * x - 1.0) - 2.0 * x, 12.0 * q * y - 2.0 * y

    def lap_phi(x, y):
        q = 3.0 * (x * x + y * y) - x
        return 2.0 * (6.0 * x - 1.0) ** 2 + 24.0 * q + 72.0 * y * y - 4.0

    ls = LevelSet(phi=phi, grad_phi=grad_phi)
    beta_m = lambda x, y: x * y + 3.0
    gbeta_m = lambda x, y: (np.asarray(y, dtype=float), np.asarray(x, dtype=float))
    zero = lambda x, y: (np.zeros(np.broadcast_shapes(np.shape(x), np.shape(y))),) * 2
    beta_parts = {
        -1: (beta_m, gbeta_m, _const(0.0)),
        1: (_const(100.0), zero, _const(0.0)),
    }
    return _phi_over_beta("cardioid", ls, lap_phi, beta_parts, {})


def _problem_line(x0=0.3, beta_minus=1.0, beta_plus=10.0):
    """Straight interface with a piecewise-linear exact solution.

    The solution lies in the immersed space whenever the interface is a
    grid-independent vertical line, making this the standard patch test.
    """
    bm, bp = float(beta_minus), float(beta_plus)
    x0 = float(x0)
    ls = LevelSet(
        phi=lambda x, y: x - x0 + 0.0 * y,
        grad_phi=lambda x, y: (np.ones(np.broadcast_shapes(np.shape(x), np.shape(y))),
                               np.zeros(np.broadcast_shapes(np.shape(x), np.shape(y)))),
    )

    def exact_u(x, y, side):
        beta = np.where(np.asarray(side) < 0, bm, bp)
        return (np.asarray(x, dtype=float) - x0) / beta + 0.0 * y

    def exact_grad(x, y, side):
        beta = np.where(np.asarray(side) < 0, bm, bp)
        shape = np.broadcast_shapes(np.shape(x), np.shape(y), np.shape(side))
        return np.broadcast_to(1.0 / beta, shape).copy(), np.zeros(shape)

    data = ProblemData(
        level_set=ls,
        beta_minus=_const(bm),
        beta_plus=_const(bp),
        f=_const(0.0),
        exact_u=exact_u,
        exact_grad=exact_grad,
    )
    return BenchmarkProblem("line", data, {"x0": x0, "beta_minus": bm, "beta_plus": bp})


_PROBLEMS = {
    "ex1": _problem_circle,
    "circle": _problem_circle,
    "ex2": _problem_sharp_edge,
    "sharp_edge": _problem_sharp_edge,
    "ex3": _problem_ellipse,
    "ellipse": _problem_ellipse,
    "ex4": _problem_cardioid,
    "cardioid": _problem_cardioid,
    "line": _problem_line,
}


def make_problem(name: str, **params) -> BenchmarkProblem:
    """Instantiate a benchmark problem by name.

    Known names: ex1/circle (params beta_minus, beta_plus, r0),
    ex2/sharp_edge (theta_deg, beta_minus, beta_plus), ex3/ellipse,
    ex4/cardioid, and line (x0, beta_minus, beta_plus).
    """
    if name not in _PROBLEMS:
        raise ValueError(f"unknown problem {name!r}; choose from {sorted(_PROBLEMS)}")
    return _PROBLEMS[name](**params)


def ife_interpolant(
    problem: BenchmarkProblem, mesh: UniformMesh, cls: ElementClassification
) -> np.ndarray:
    """Nodal interpolant of the exact solution in the immersed space."""
    side = np.where(cls.vertex_sign == 0, -1, cls.vertex_sign)
    return np.asarray(
        problem.data.exact_u(mesh.vertices[:, 0], mesh.vertices[:, 1], side)
    )


def fitted_interpolant(
    problem: BenchmarkProblem, cls: ElementClassification, fitted: FittedMesh
) -> EnrichedField:
    """Nodal interpolant of the exact solution on the fitted mesh."""
    nv = fitted.mesh.num_vertices
    side = np.full(fitted.num_hat_vertices, -1, dtype=np.int64)
    side[:nv] = np.where(cls.vertex_sign == 0, -1, cls.vertex_sign)
    vals = problem.data.exact_u(
        fitted.hat_vertices[:, 0], fitted.hat_vertices[:, 1], side
    )
    return EnrichedField(values=np.asarray(vals))


def _solution_values_at(u_h, mesh, cls, fitted, bases, bary):
    """Samples of the discrete solution at quadrature points per subtriangle."""
    subs = fitted.sub_triangles
    pts = physical_points(fitted.hat_vertices[subs], bary)
    values = np.empty(pts.shape[:2])
    parents = fitted.parent
    reg = cls.side[parents] != 0
    if np.any(reg):
        tri = mesh.triangles[parents[reg]]
        values[reg] = np.einsum("qk,mk->mq", bary, u_h[tri])
    for pos in np.flatnonzero(~reg):
        t = int(parents[pos])
        poly = u_h[mesh.triangles[t]] @ bases[t].piece(int(fitted.side[pos]))
        values[pos] = poly[0] + poly[1] * pts[pos, :, 0] + poly[2] * pts[pos, :, 1]
    return values, pts


def compute_norms(
    u_h: np.ndarray,
    rec: Optional[RecoveredGradient],
    problem: BenchmarkProblem,
    mesh: UniformMesh,
    cls: ElementClassification,
    fitted: FittedMesh,
    bases: dict,
):
    """Errors (De, Die, Dre) of a discrete solution.

    De is the broken H1 norm of u - u_h, Die the L2 distance between the
    discrete gradient and the gradient of the exact solution's nodal
    interpolant, and Dre the L2 error of the recovered gradient (NaN when
    no recovery is supplied).  All integrals use degree-4 quadrature over
    subtriangles, so every evaluation point is side-pure.
    """
    data = problem.data
    if data.exact_u is None or data.exact_grad is None:
        raise ValueError(f"problem {problem.name!r} carries no exact solution")

    bq4, wq4 = interior_rule(4)
    subs = fitted.sub_triangles
    sides = fitted.side
    areas = fitted.areas
    sub_idx = np.arange(fitted.num_sub_triangles)

    uh_q, pts = _solution_values_at(u_h, mesh, cls, fitted, bases, bq4)
    grad_uh = _grad_uh_on_subs(u_h, mesh, cls, fitted, bases, sub_idx)

    side_col = sides[:, None]
    u_q = data.exact_u(pts[..., 0], pts[..., 1], side_col)
    gx_q, gy_q = data.exact_grad(pts[..., 0], pts[..., 1], side_col)

    dx = gx_q - grad_uh[:, None, 0]
    dy = gy_q - grad_uh[:, None, 1]
    de_sq = areas @ (((u_q - uh_q) ** 2 + dx * dx + dy * dy) @ wq4)

    u_i = ife_interpolant(problem, mesh, cls)
    grad_ui = _grad_uh_on_subs(u_i, mesh, cls, fitted, bases, sub_idx)
    die_sq = float(np.sum(areas * np.sum((grad_ui - grad_uh) ** 2, axis=1)))

    if rec is not None:
        rec_q = np.einsum("qk,mkd->mqd", bq4, _rec_at_nodes(rec, subs, sides))
        rx = gx_q - rec_q[..., 0]
        ry = gy_q - rec_q[..., 1]
        dre_sq = areas @ ((rx * rx + ry * ry) @ wq4)
    else:
        dre_sq = float("nan")

    return float(np.sqrt(de_sq)), float(np.sqrt(die_sq)), float(np.sqrt(dre_sq))


def weighted_energy_error(
    u_h: np.ndarray,
    problem: BenchmarkProblem,
    mesh: UniformMesh,
    cls: ElementClassification,
    fitted: FittedMesh,
    bases: dict,
) -> float:
    """||beta^(1/2) (grad u - grad u_h)||_0 with side-tagged evaluation."""
    data = problem.data
    bq4, wq4 = interior_rule(4)
    sides = fitted.side
    areas = fitted.areas
    pts = physical_points(fitted.hat_vertices[fitted.sub_triangles], bq4)
    grad_uh = _grad_uh_on_subs(
        u_h, mesh, cls, fitted, bases, np.arange(fitted.num_sub_triangles)
    )
    side_col = sides[:, None]
    gx_q, gy_q = data.exact_grad(pts[..., 0], pts[..., 1], side_col)
    beta_q = data.beta_side(pts[..., 0], pts[..., 1], side_col)
    dx = gx_q - grad_uh[:, None, 0]
    dy = gy_q - grad_uh[:, None, 1]
    return float(np.sqrt(areas @ ((beta_q * (dx * dx + dy * dy)) @ wq4)))


@dataclass
class RunResult:
    """All artifacts of one solve at one mesh size."""

    n: int
    mesh: UniformMesh
    cls: ElementClassification
    fitted: FittedMesh
    bases: dict
    system: AssembledSystem
    u_h: np.ndarray
    rec: RecoveredGradient
    de: float
    die: float
    dre: float
    eta_h: float
    energy_error: float

    @property
    def effectivity(self) -> float:
        return self.eta_h / self.energy_error if self.energy_error > 0 else float("nan")


def run_single(
    problem: BenchmarkProblem,
    method: str,
    n: int,
    eps_snap: float = 1e-10,
    rel_tol: float = 1e-10,
    edge_sign: float = -1.0,
) -> RunResult:
    """Full pipeline at one mesh size: classify, assemble, solve, recover."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    data = problem.data
    mesh = build_uniform_mesh(n)
    cls = classify_elements(mesh, data.level_set, eps_snap)
    fitted = build_fitted_mesh(mesh, cls)
    bases = build_all_bases(mesh, cls, data.beta_minus, data.beta_plus)

    if method == "scifem":
        system = assemble_scifem(mesh, cls, fitted, bases, problem.data, edge_sign)
    else:
        system = assemble_pgifem(mesh, cls, fitted, bases, problem.data)
    system = apply_dirichlet(system, problem.boundary_g())
    u_h = solve(system, rel_tol)

    rec = recover(u_h, mesh, cls, fitted, bases)
    de, die, dre = compute_norms(u_h, rec, problem, mesh, cls, fitted, bases)
    _, eta_h = error_estimator(u_h, rec, mesh, cls, fitted, bases, data)
    energy = weighted_energy_error(u_h, problem, mesh, cls, fitted, bases)
    return RunResult(
        n=n, mesh=mesh, cls=cls, fitted=fitted, bases=bases, system=system,
        u_h=u_h, rec=rec, de=de, die=die, dre=dre, eta_h=eta_h, energy_error=energy,
    )


@dataclass
class StudyRow:
    n: int
    de: float
    de_order: Optional[float]
    die: float
    die_order: Optional[float]
    dre: float
    dre_order: Optional[float]
    eta_h: float = float("nan")
    effectivity: float = float("nan")


@dataclass
class ConvergenceTable:
    problem: str
    method: str
    rows: list

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows])


def _order(e_prev, e_cur, n_prev, n_cur):
    # errors at solver-tolerance level make the rate meaningless
    if e_prev <= 1e-9 or e_cur <= 1e-9 or not (np.isfinite(e_prev) and np.isfinite(e_cur)):
        return None
    return math.log(e_prev / e_cur) / math.log(n_cur / n_prev)


def convergence_study(
    problem: BenchmarkProblem,
    method: str,
    n_list,
    eps_snap: float = 1e-10,
    rel_tol: float = 1e-10,
    edge_sign: float = -1.0,
) -> ConvergenceTable:
    """Run the pipeline over a list of mesh sizes and tabulate the errors.

    Orders are computed from consecutive rows as log(e_prev/e_cur) /
    log(n_cur/n_prev), which reduces to log2 ratios for doubling runs.
    """
    n_list = list(n_list)
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError("mesh sizes must be strictly increasing")
    rows = []
    prev = None
    for n in n_list:
        res = run_single(problem, method, n, eps_snap, rel_tol, edge_sign)
        orders = (None, None, None)
        if prev is not None:
            orders = (
                _order(prev.de, res.de, prev.n, res.n),
                _order(prev.die, res.die, prev.n, res.n),
                _order(prev.dre, res.dre, prev.n, res.n),
            )
        rows.append(
            StudyRow(
                n=n, de=res.de, de_order=orders[0], die=res.die, die_order=orders[1],
                dre=res.dre, dre_order=orders[2], eta_h=res.eta_h,
                effectivity=res.effectivity,
            )
        )
        prev = res
    return ConvergenceTable(problem=problem.name, method=method, rows=rows)


def recovery_consistency(problem: BenchmarkProblem, n_list, eps_snap: float = 1e-10):
    """L2 error of recovering the fitted-mesh interpolant's gradient.

    Bypasses any solve: the exact solution is interpolated at every
    fitted-mesh node and pushed through the patch recovery alone.
    """
    data = problem.data
    errors = []
    bq4, wq4 = interior_rule(4)
    for n in n_list:
        mesh = build_uniform_mesh(n)
        cls = classify_elements(mesh, data.level_set, eps_snap)
        fitted = build_fitted_mesh(mesh, cls)
        field = fitted_interpolant(problem, cls, fitted)
        rec = ippr_recover(field, fitted)
        sides = fitted.side
        pts = physical_points(fitted.hat_vertices[fitted.sub_triangles], bq4)
        side_col = sides[:, None]
        gx_q, gy_q = data.exact_grad(pts[..., 0], pts[..., 1], side_col)
        rec_q = np.einsum(
            "qk,mkd->mqd", bq4, _rec_at_nodes(rec, fitted.sub_triangles, sides)
        )
        rx = gx_q - rec_q[..., 0]
        ry = gy_q - rec_q[..., 1]
        err = float(np.sqrt(fitted.areas @ ((rx * rx + ry * ry) @ wq4)))
        errors.append((n, err))
    return errors


def convergence_rate(ns, errors) -> float:
    """Least-squares slope of log(error) against log(h)."""
    ns = np.asarray(ns, dtype=float)
    errors = np.asarray(errors, dtype=float)
    return float(np.polyfit(np.log(2.0 / ns), np.log(errors), 1)[0])
