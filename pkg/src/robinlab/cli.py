"""Command-line front end.

Exit status: 0 on success, 1 on input errors, 2 when a theorem-backed bound
check fails (a solver or geometry bug, never an expected outcome).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .bounds import audit, dirichlet_data, gradient_estimate_quantities
from .concavity import KINDS, analyze
from .geometry import DomainError, geometry_summary
from .io import config_hash, domain_to_dict, load_domain, write_csv, write_json, write_mesh, write_solution
from .mesh import MeshError, mesh_quality, refine_uniform, triangulate
from .solver import SolverError, assemble, solve
from .thresholds import DEFAULT_RANGE, TOL_FACTOR, beta_sweep, bisect_threshold, brackets_agree, continuity_sweep

EXIT_OK, EXIT_INPUT, EXIT_BOUND = 0, 1, 2
TRACE_COLUMNS = ["beta", "lambda1", "min_eig_global", "min_eig_tube", "pass"]
BOUND_COLUMNS = ["name", "lhs", "rhs", "direction", "pass", "vacuous", "theorem_backed", "beta"]


class InputError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def beta_grid(text: str) -> list[float]:
    """``lo:hi:n`` as n geometrically spaced values."""
    try:
        lo, hi, n = text.split(":")
        lo, hi, n = float(lo), float(hi), int(n)
    except ValueError:
        raise argparse.ArgumentTypeError(f"--beta-grid expects F:F:N, got {text!r}")
    if not (0 < lo <= hi) or n < 1 or (n == 1 and lo != hi):
        raise argparse.ArgumentTypeError(f"--beta-grid needs 0 < lo <= hi and N >= 1, got {text!r}")
    return [float(b) for b in np.geomspace(lo, hi, n)]


def _common(p: argparse.ArgumentParser, kind: bool = False) -> None:
    p.add_argument("--domain", required=True, help="domain spec JSON file (or inline JSON)")
    p.add_argument("--h", type=float, default=0.04, help="target mesh size")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--seed", type=int, default=None, help="seed for mesh lattice jitter")
    p.add_argument("--workers", type=int, default=1, help="worker processes for independent runs")
    if kind:
        p.add_argument("--kind", choices=KINDS, default="neg_log")
        p.add_argument("--tube", type=float, default=None, help="tube width (default rho/4)")
        p.add_argument("--sigma-tol", type=float, default=None, help="absolute pass floor for the min eigenvalue")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="robinlab", description="Robin Laplacian solver and concavity audit")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="one solve; dumps mesh and nodal field")
    _common(p)
    p.add_argument("--beta", type=float, default=None, help="Robin parameter (omit for Dirichlet)")
    p.add_argument("--problem", choices=("eig", "torsion"), default="eig")
    p.add_argument("--refine", type=int, default=0, help="uniform refinements after meshing")

    p = sub.add_parser("sweep", help="concavity predicate over a beta grid")
    _common(p, kind=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--beta", type=float, action="append")
    g.add_argument("--beta-grid", type=beta_grid)

    p = sub.add_parser("threshold", help="bisection for the concavity threshold in beta")
    _common(p, kind=True)
    p.add_argument("--beta-grid", type=beta_grid, default=None, help="search range lo:hi:N (N unused)")
    p.add_argument("--tol-factor", type=float, default=TOL_FACTOR)
    p.add_argument("--mesh-check", action="store_true", help="repeat at h/2 and flag mesh sensitivity")

    p = sub.add_parser("deform", help="continuity sweep over the Minkowski family")
    _common(p, kind=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--tgrid", type=int, default=11)

    p = sub.add_parser("bounds", help="audit every explicit inequality")
    _common(p)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--beta", type=float, action="append")
    g.add_argument("--beta-grid", type=beta_grid)

    p = sub.add_parser("report", help="aggregated JSON with SVG figures")
    _common(p, kind=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--beta-grid", type=beta_grid, default=None)
    return ap


def _validate(args) -> None:
    def positive(name, v):
        if v is not None and not v > 0:
            raise InputError(f"--{name} must be positive, got {v}")

    positive("h", args.h)
    if args.workers < 1:
        raise InputError(f"--workers must be >= 1, got {args.workers}")
    for b in _betas(args):
        positive("beta", b)
    positive("tube", getattr(args, "tube", None))
    positive("sigma-tol", getattr(args, "sigma_tol", None))
    if getattr(args, "refine", 0) < 0:
        raise InputError(f"--refine must be >= 0, got {args.refine}")
    if getattr(args, "tgrid", 5) < 5:
        raise InputError(f"--tgrid must be >= 5, got {args.tgrid}")
    if getattr(args, "tol_factor", 2.0) <= 1.0:
        raise InputError(f"--tol-factor must exceed 1, got {args.tol_factor}")


def _betas(args) -> list[float]:
    grid = getattr(args, "beta_grid", None)
    if args.command != "threshold" and grid:
        return grid
    b = getattr(args, "beta", None)
    if b is None:
        return []
    return sorted(b) if isinstance(b, list) else [b]


def _config(args, domain) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k not in ("out", "domain", "workers")}
    cfg["domain"] = domain_to_dict(domain)
    return cfg


def _meta(args, domain) -> dict:
    return {"config_hash": config_hash(_config(args, domain)), "mesh_h": float(args.h)}


# ---------------------------------------------------------------------------
# subcommands


def cmd_solve(args, domain, out: Path, meta: dict) -> int:
    mesh = triangulate(domain, args.h, seed=args.seed, jitter=0.1 if args.seed is not None else 0.0)
    for _ in range(args.refine):
        mesh = refine_uniform(mesh)
    meta = meta | {"mesh_h": float(mesh.h_target)}
    system = assemble(mesh)
    kind = "robin" if args.beta is not None else "dirichlet"
    sol = solve(system, f"{kind}_{args.problem}", args.beta)
    write_mesh(out / "mesh.txt", mesh)
    write_solution(out / "solution", sol, meta, {"mesh_quality": mesh_quality(mesh)})
    return EXIT_OK


def _trace_plot(path: Path, rows: list[dict], title: str) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "robinlab"
    fig, ax = plt.subplots(figsize=(5, 3.5))
    b = [r["beta"] for r in rows]
    ax.semilogx(b, [r["min_eig_global"] for r in rows], "o-", label="global")
    ax.semilogx(b, [r["min_eig_tube"] for r in rows], "s--", label="tube")
    ax.axhline(0.0, color="k", lw=0.6)
    ax.set_xlabel("beta")
    ax.set_ylabel("min Hessian eigenvalue")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _heatmap(path: Path, mesh, values: np.ndarray, title: str, diverging: bool = False) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    from matplotlib.tri import Triangulation

    matplotlib.rcParams["svg.hashsalt"] = "robinlab"
    fig, ax = plt.subplots(figsize=(5, 4))
    tri = Triangulation(mesh.vertices[:, 0], mesh.vertices[:, 1], mesh.triangles)
    v = np.where(np.isfinite(values), values, np.nan)
    ok = np.isfinite(v)
    v = np.where(ok, v, np.nanmin(v) if ok.any() else 0.0)
    if diverging:
        from matplotlib.colors import TwoSlopeNorm

        span = max(float(np.abs(v).max()), 1e-300)
        im = ax.tripcolor(tri, v, shading="gouraud", cmap="RdBu_r", norm=TwoSlopeNorm(0.0, -span, span))
    else:
        im = ax.tripcolor(tri, v, shading="gouraud", cmap="viridis")
    fig.colorbar(im, ax=ax)
    ax.set_aspect("equal")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def cmd_sweep(args, domain, out: Path, meta: dict) -> int:
    tr = beta_sweep(domain, args.kind, _betas(args), args.h, args.sigma_tol, args.tube, args.seed, args.workers)
    rows = tr.table()
    write_csv(out / "beta_trace.csv", TRACE_COLUMNS, rows, meta)
    _trace_plot(out / "beta_trace.svg", rows, f"{domain.name} {args.kind}")
    return EXIT_OK


def cmd_threshold(args, domain, out: Path, meta: dict) -> int:
    rng = (args.beta_grid[0], args.beta_grid[-1]) if args.beta_grid else DEFAULT_RANGE
    kw = dict(beta_range=rng, tol_factor=args.tol_factor, sigma_tol=args.sigma_tol,
              tube_width=args.tube, seed=args.seed, workers=args.workers)
    res = bisect_threshold(domain, args.kind, h=args.h, **kw)
    doc = {"result": res.to_dict(), "invariant_ok": res.check_invariant()}
    if args.mesh_check:
        fine = bisect_threshold(domain, args.kind, h=args.h / 2.0, **kw)
        res.mesh_sensitive = fine.mesh_sensitive = not brackets_agree(res, fine)
        doc = {"result": res.to_dict(), "invariant_ok": res.check_invariant(), "fine": fine.to_dict()}
    write_json(out / "threshold.json", doc, meta)
    rows = [p.row() for p in sorted(res.trace, key=lambda p: p.beta)]
    write_csv(out / "threshold_trace.csv", TRACE_COLUMNS, rows, meta)
    return EXIT_OK


def cmd_deform(args, domain, out: Path, meta: dict) -> int:
    res = continuity_sweep(domain, args.beta, args.kind, args.tgrid, args.h,
                           args.sigma_tol, args.tube, args.seed, args.workers)
    write_json(out / "deform.json", res.to_dict(), meta)
    return EXIT_OK


def _bound_rows(reports) -> list[dict]:
    return [
        {"name": r.name, "lhs": r.lhs_value, "rhs": r.rhs_value, "direction": r.direction,
         "pass": r.passed, "vacuous": r.vacuous, "theorem_backed": r.theorem_backed,
         "beta": r.inputs.get("beta")}
        for r in reports
    ]


def _audit(args, domain):
    mesh = triangulate(domain, args.h, seed=args.seed, jitter=0.1 if args.seed is not None else 0.0)
    system = assemble(mesh)
    dd = dirichlet_data(system)
    return system, dd, audit(system, _betas(args), dd)


def cmd_bounds(args, domain, out: Path, meta: dict) -> int:
    _, _, reports = _audit(args, domain)
    write_csv(out / "bounds.csv", BOUND_COLUMNS, _bound_rows(reports), meta)
    write_json(out / "bounds.json", {"reports": [r.to_dict() for r in reports]}, meta)
    failed = [r.name for r in reports if r.theorem_backed and not r.passed]
    if failed:
        print(f"theorem-backed bound checks failed: {', '.join(sorted(set(failed)))}", file=sys.stderr)
        return EXIT_BOUND
    return EXIT_OK


def cmd_report(args, domain, out: Path, meta: dict) -> int:
    system, (dd, _), reports = _audit(argparse.Namespace(**(vars(args) | {"beta_grid": None})), domain)
    problem = "robin_eig" if args.kind == "neg_log" else "robin_torsion"
    sol = solve(system, problem, args.beta)
    rep, hess = analyze(sol, args.kind, args.tube, args.sigma_tol)
    _heatmap(out / "solution.svg", system.mesh, sol.field, f"{problem} beta={args.beta:g}")
    _heatmap(out / "min_eig.svg", system.mesh, hess.min_eigenvalue(), f"{args.kind} min eigenvalue", diverging=True)
    doc = {
        "domain": domain_to_dict(domain),
        "geometry": geometry_summary(domain).__dict__,
        "gradient_estimate": gradient_estimate_quantities(domain, dd.lambda1).__dict__,
        "dirichlet": dd.__dict__,
        "concavity": rep.to_dict(),
        "bounds": [r.to_dict() for r in reports],
    }
    if args.beta_grid:
        tr = beta_sweep(domain, args.kind, args.beta_grid, args.h, args.sigma_tol, args.tube, args.seed, args.workers)
        doc["beta_trace"] = tr.table()
        doc["crossings"] = tr.crossings
        _trace_plot(out / "beta_trace.svg", tr.table(), f"{domain.name} {args.kind}")
    write_json(out / "report.json", doc, meta)
    failed = [r.name for r in reports if r.theorem_backed and not r.passed]
    return EXIT_BOUND if failed else EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "sweep": cmd_sweep,
    "threshold": cmd_threshold,
    "deform": cmd_deform,
    "bounds": cmd_bounds,
    "report": cmd_report,
}


def run(argv: Optional[Sequence[str]] = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        _validate(args)
        domain = load_domain(args.domain)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](args, domain, out, _meta(args, domain))
    except (InputError, DomainError, MeshError, FileNotFoundError, json.JSONDecodeError, TypeError) as e:
        print(f"robinlab {args.command}: input error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as e:
        print(f"robinlab {args.command}: input error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except SolverError as e:
        print(f"robinlab {args.command}: solver failure: {e}", file=sys.stderr)
        return EXIT_BOUND


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
