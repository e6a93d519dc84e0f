"""Command-line front end for convergence studies and field dumps."""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from . import bench
from .geometry import GeometryError
from .ife import IfeConstructionError
from .recovery import RecoveryError, enrich
from .system import SolveError

_DESK_SCALE_LIMIT = 512


@dataclass
class RunConfig:
    """Validated CLI configuration."""

    problem: str
    method: str
    n_list: list
    params: dict = field(default_factory=dict)
    solver_tol: float = 1e-10
    eps_snap: float = 1e-10
    edge_sign: float = -1.0
    csv_path: str | None = None
    markdown_path: str | None = None
    fields_path: str | None = None
    matrix_path: str | None = None
    allow_large_n: bool = False
    threads: int = 1

    def validate(self):
        if self.method not in bench.METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if not self.n_list:
            raise ValueError("at least one mesh size is required")
        if any(n < 1 for n in self.n_list):
            raise ValueError("mesh sizes must be positive")
        if sorted(self.n_list) != self.n_list or len(set(self.n_list)) != len(self.n_list):
            raise ValueError("mesh sizes must be strictly increasing")
        if max(self.n_list) > _DESK_SCALE_LIMIT and not self.allow_large_n:
            raise ValueError(
                f"n > {_DESK_SCALE_LIMIT} is opt-in; pass --allow-large-n"
            )
        if self.edge_sign not in (-1.0, 1.0):
            raise ValueError("--edge-sign must be -1 or 1")
        if self.threads < 1:
            raise ValueError("thread count must be positive")


def _fmt(v) -> str:
    if v is None:
        return ""
    return f"{v:.5e}"


def table_to_csv(table: bench.ConvergenceTable) -> str:
    lines = ["n,De,De_order,Die,Die_order,Dre,Dre_order"]
    for r in table.rows:
        lines.append(
            f"{r.n},{_fmt(r.de)},{_fmt(r.de_order)},{_fmt(r.die)},"
            f"{_fmt(r.die_order)},{_fmt(r.dre)},{_fmt(r.dre_order)}"
        )
    return "\n".join(lines) + "\n"


def table_to_markdown(table: bench.ConvergenceTable) -> str:
    head = f"### {table.problem} ({table.method})\n\n"
    lines = [
        "| n | De | order | Die | order | Dre | order |",
        "|---|----|-------|-----|-------|-----|-------|",
    ]
    for r in table.rows:
        def order(v):
            return "--" if v is None else f"{v:.2f}"
        lines.append(
            f"| {r.n} | {_fmt(r.de)} | {order(r.de_order)} | {_fmt(r.die)} | "
            f"{order(r.die_order)} | {_fmt(r.dre)} | {order(r.dre_order)} |"
        )
    return head + "\n".join(lines) + "\n"


def _dump_fields(path: str, result: bench.RunResult):
    """Per-vertex records `x y side value gx gy` of the finest run."""
    enriched = enrich(result.u_h, result.mesh, result.cls, result.fitted, result.bases)
    fitted = result.fitted
    rec = result.rec
    with open(path, "w") as fh:
        fh.write("# x y side value gx gy\n")
        for v in range(fitted.num_hat_vertices):
            x, y = fitted.hat_vertices[v]
            for side in (-1, 1):
                if not rec.mask_for(side)[v]:
                    continue
                g = rec.values_for(side)[v]
                fh.write(
                    f"{x:.16e} {y:.16e} {side:+d} "
                    f"{enriched.values[v]:.16e} {g[0]:.16e} {g[1]:.16e}\n"
                )


def _dump_matrix(path: str, result: bench.RunResult):
    coo = result.system.matrix.tocoo()
    with open(path, "w") as fh:
        fh.write("# row col value\n")
        for r, c, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{r} {c} {v:.16e}\n")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="ifegr",
        description="Immersed finite element convergence studies with "
        "gradient recovery on [-1,1]^2.",
    )
    p.add_argument("--problem", required=True,
                   help="ex1/circle, ex2/sharp_edge, ex3/ellipse, ex4/cardioid, line")
    p.add_argument("--method", default="scifem", choices=list(bench.METHODS))
    p.add_argument("--n", default="32,64",
                   help="comma-separated increasing mesh sizes, e.g. 32,64,128")
    p.add_argument("--beta-minus", type=float, default=None)
    p.add_argument("--beta-plus", type=float, default=None)
    p.add_argument("--theta", type=float, default=None,
                   help="sharp-edge angle parameter in degrees (ex2)")
    p.add_argument("--r0", type=float, default=None, help="circle radius (ex1)")
    p.add_argument("--x0", type=float, default=None, help="line position (line)")
    p.add_argument("--solver-tol", type=float, default=1e-10)
    p.add_argument("--eps-snap", type=float, default=1e-10)
    p.add_argument("--edge-sign", type=float, default=-1.0,
                   help="sign of the interface-edge terms (-1 consistent, +1 flipped)")
    p.add_argument("--csv", dest="csv_path", default=None,
                   help="write the table as CSV here (default: stdout)")
    p.add_argument("--markdown", dest="markdown_path", default=None)
    p.add_argument("--emit-fields", dest="fields_path", default=None,
                   help="dump solution and recovered gradient of the finest run")
    p.add_argument("--emit-matrix", dest="matrix_path", default=None,
                   help="dump the constrained matrix of the finest run as COO triples")
    p.add_argument("--allow-large-n", action="store_true",
                   help=f"permit mesh sizes beyond {_DESK_SCALE_LIMIT}")
    return p


def config_from_args(args) -> RunConfig:
    try:
        n_list = [int(tok) for tok in args.n.split(",") if tok.strip()]
    except ValueError as exc:
        raise ValueError(f"cannot parse --n {args.n!r}") from exc
    params = {}
    for key, name in (
        ("beta_minus", "beta_minus"), ("beta_plus", "beta_plus"),
        ("theta", "theta_deg"), ("r0", "r0"), ("x0", "x0"),
    ):
        val = getattr(args, key if key != "theta" else "theta")
        if val is not None:
            params[name] = val
    threads = int(os.environ.get("IFEGR_THREADS", "1"))
    return RunConfig(
        problem=args.problem,
        method=args.method,
        n_list=n_list,
        params=params,
        solver_tol=args.solver_tol,
        eps_snap=args.eps_snap,
        edge_sign=args.edge_sign,
        csv_path=args.csv_path,
        markdown_path=args.markdown_path,
        fields_path=args.fields_path,
        matrix_path=args.matrix_path,
        allow_large_n=args.allow_large_n,
        threads=threads,
    )


def run(config: RunConfig) -> int:
    """Execute a study per the configuration; returns the exit status."""
    try:
        config.validate()
        problem = bench.make_problem(config.problem, **config.params)
    except (ValueError, TypeError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2

    try:
        def one(n):
            return bench.run_single(
                problem, config.method, n,
                eps_snap=config.eps_snap, rel_tol=config.solver_tol,
                edge_sign=config.edge_sign,
            )

        if config.threads > 1:
            with ThreadPoolExecutor(max_workers=config.threads) as pool:
                results = list(pool.map(one, config.n_list))
        else:
            results = [one(n) for n in config.n_list]
    except (GeometryError, IfeConstructionError, RecoveryError, SolveError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1

    rows = []
    prev = None
    for res in results:
        orders = (None, None, None)
        if prev is not None:
            orders = (
                bench._order(prev.de, res.de, prev.n, res.n),
                bench._order(prev.die, res.die, prev.n, res.n),
                bench._order(prev.dre, res.dre, prev.n, res.n),
            )
        rows.append(bench.StudyRow(
            n=res.n, de=res.de, de_order=orders[0], die=res.die,
            die_order=orders[1], dre=res.dre, dre_order=orders[2],
            eta_h=res.eta_h, effectivity=res.effectivity,
        ))
        prev = res
    table = bench.ConvergenceTable(problem=problem.name, method=config.method, rows=rows)

    csv_text = table_to_csv(table)
    if config.csv_path:
        with open(config.csv_path, "w") as fh:
            fh.write(csv_text)
    else:
        sys.stdout.write(csv_text)
    if config.markdown_path:
        with open(config.markdown_path, "w") as fh:
            fh.write(table_to_markdown(table))
    if config.fields_path:
        _dump_fields(config.fields_path, results[-1])
    if config.matrix_path:
        _dump_matrix(config.matrix_path, results[-1])
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)  # argparse exits 2 on bad usage
    try:
        config = config_from_args(args)
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
