"""
Command-line front end.

Every solver subcommand writes into its output directory:

    <name>.bgs          solution field(s) in BGS1 format
    summary.json        energies, classes, residuals, iteration counts, seed
    iterations.jsonl    one record per iteration (appended)
    <name>_energy.csv   iter,energy,grad_norm
    <name>_profile.csv  x,u (cut through the box center for dim > 1)
    resolved.ini        fully defaulted configuration of the run

Exit codes: 0 success, 1 configuration, 2 numerical failure, 3 threshold, 4 I/O.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, load_config
from .energy import Nonlinearity, ProblemSpec, make_rng
from .errors import ConfigError, FracBesselError, exit_code_for
from .fieldio import append_jsonl, load_field, save_field, to_jsonable, write_csv, write_json
from .identities import (
    IdentityRecord,
    IdentityReport,
    commutator_identity_residual,
    pohozaev_residual,
    rearrangement_gap,
    scaling_noninvariance_report,
)
from .kernel import KernelSpec, eval_G_alpha
from .nehari import FiberCoefficients, NehariClass, fiber_eval, lambda_threshold, project_to_nehari
from .plots import ENERGY_HEADER, FIBER_HEADER, KERNEL_HEADER, PROFILE_HEADER, SCAN_HEADER, export_plot_data, profile_rows
from .solvers import ground_state_pure_power, minimize_nehari, mountain_pass, random_bump, two_solution_search

log = logging.getLogger("fracbessel")


def build_spec(cfg: RunConfig):
    """ProblemSpec for ``cfg``; a lambda given as a multiple of lambda_0 is resolved here."""
    grid = cfg.grid
    spec = ProblemSpec(grid, cfg.alpha, cfg.p, cfg.q, lam=cfg.lam_value or 0.0,
                       b=cfg.b.build(grid), c=cfg.c.build(grid), truncated=cfg.truncated)
    threshold = None
    if cfg.lam_multiple is not None or (cfg.p < 2 < cfg.q and cfg.which in ("Nplus", "Nminus")):
        threshold = lambda_threshold(spec, seed=cfg.seed)
        if cfg.lam_multiple is not None:
            spec = spec.replace(lam=cfg.lam_multiple * threshold.lambda0)
    return spec, threshold


def _grid_record(grid) -> dict:
    return {"dim": grid.dim, "half_length": list(grid.half_length), "points": list(grid.points)}


def _threshold_record(th) -> dict:
    if th is None:
        return {}
    return {"delta": th.delta, "lambda0": th.lambda0, "c_const": th.c_const, "S_p": th.S_p, "S_q": th.S_q}


def _write_solution(cfg: RunConfig, out: Path, name: str, sol) -> None:
    if "bgs1" in cfg.formats:
        save_field(out / f"{name}.bgs", sol.field, cfg.alpha)
    append_jsonl(out / "iterations.jsonl",
                 ({"run": name, "iter": it, "energy": e, "grad_norm": g} for it, e, g in sol.history))
    if "csv" in cfg.formats:
        write_csv(out / f"{name}_energy.csv", ENERGY_HEADER, sol.history)
        write_csv(out / f"{name}_profile.csv", PROFILE_HEADER, profile_rows(sol.field))


def _finish_run(cfg: RunConfig, command: str, spec, solutions: dict, extra: dict | None = None) -> dict:
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    cfg.save_resolved(out / "resolved.ini")
    for name, sol in solutions.items():
        _write_solution(cfg, out, name, sol)
    summary = {
        "command": command,
        "seed": cfg.seed,
        "grid": _grid_record(spec.grid),
        "alpha": spec.alpha,
        "p": spec.p,
        "q": spec.q,
        "lambda": spec.lam,
        "solutions": {name: sol.summary() for name, sol in solutions.items()},
    }
    summary.update(extra or {})
    if "json" in cfg.formats:
        write_json(out / "summary.json", summary)
    if cfg.plots:
        export_plot_data(out)
    return summary


def _attach_pohozaev(spec, sol, nonlinearity=None):
    if not spec.autonomous:
        return
    lhs, rhs, res = pohozaev_residual(spec, sol.field, nonlinearity)
    report = IdentityReport()
    report.add(IdentityRecord("pohozaev", lhs, rhs, res, _grid_record(spec.grid)))
    sol.identity_report = report


def cmd_groundstate(cfg: RunConfig, args) -> dict:
    grid = cfg.grid
    sol = ground_state_pure_power(cfg.alpha, cfg.p, grid, radial=cfg.radial, seed=cfg.seed,
                                  starts=cfg.starts, tol=cfg.tol, max_iter=cfg.max_iter)
    spec = ProblemSpec(grid, cfg.alpha, cfg.p, cfg.p)
    _attach_pohozaev(spec, sol)
    return _finish_run(cfg, "groundstate", spec, {"solution": sol})


def cmd_solve(cfg: RunConfig, args) -> dict:
    spec, th = build_spec(cfg)
    sol = minimize_nehari(spec, cfg.which, rng_seed=cfg.seed, tol=cfg.tol, energy_tol=cfg.energy_tol,
                          max_iter=cfg.max_iter, threshold=th)
    _attach_pohozaev(spec if cfg.which != "M_0" else spec.replace(lam=0.0), sol)
    return _finish_run(cfg, "solve", spec, {"solution": sol}, {"threshold": _threshold_record(th)})


def cmd_two_solutions(cfg: RunConfig, args) -> dict:
    spec, th = build_spec(cfg)
    if th is None:
        th = lambda_threshold(spec, seed=cfg.seed)
    u1, u2 = two_solution_search(spec, threshold=th, rng_seed=cfg.seed, tol=cfg.tol, max_iter=cfg.max_iter)
    extra = {"threshold": _threshold_record(th), "delta1": th.delta1(spec.lam)}
    return _finish_run(cfg, "two-solutions", spec, {"u1": u1, "u2": u2}, extra)


def cmd_mountain_pass(cfg: RunConfig, args) -> dict:
    spec, _ = build_spec(cfg)
    nl = Nonlinearity.power(cfg.q, truncated=cfg.truncated)
    sol = mountain_pass(spec, nl, nodes=cfg.nodes, tol=cfg.tol, max_iter=cfg.max_iter)
    _attach_pohozaev(spec, sol, nl)
    return _finish_run(cfg, "mountain-pass", spec, {"solution": sol})


def _scan_lambdas(text: str, lambda0: float, steps: int) -> np.ndarray:
    from .config import parse_lambda

    value, multiple = parse_lambda(text)
    top = value if value is not None else multiple * lambda0
    return np.linspace(0.0, top, steps)


def cmd_nehari_scan(cfg: RunConfig, args) -> dict:
    spec, _ = build_spec(cfg)
    th = lambda_threshold(spec.replace(lam=0.0), seed=cfg.seed)
    if args.field:
        u, _ = load_field(args.field)
        if u.grid != spec.grid:
            raise ConfigError(f"{args.field} does not match the configured grid")
        values = u.values
    else:
        values = random_bump(spec.grid, make_rng(cfg.seed))
    A, B, C = spec.replace(lam=1.0).fiber_integrals(values)
    rows = []
    for lam in _scan_lambdas(args.lambda_max, th.lambda0, args.lambda_steps):
        fc = FiberCoefficients(A, B, C, spec.p, spec.q, float(lam))
        roots = project_to_nehari(fc)
        plus = next((r for r in roots if r.nehari_class is NehariClass.NPLUS), None)
        minus = next((r for r in reversed(roots) if r.nehari_class is NehariClass.NMINUS), None)
        rows.append((float(lam), len(roots),
                     *(_root_cols(plus)), *(_root_cols(minus))))
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    cfg.save_resolved(out / "resolved.ini")
    write_csv(out / "lambda_scan.csv", SCAN_HEADER, rows)
    lam = spec.lam if cfg.lam_value or cfg.lam_multiple is not None else 0.5 * th.lambda0
    fc = FiberCoefficients(A, B, C, spec.p, spec.q, lam)
    t_top = 2.0 * max([r.t for r in project_to_nehari(fc)] + [1.0])
    ts = np.linspace(t_top / args.fiber_points, t_top, args.fiber_points)
    write_csv(out / "fiber.csv", FIBER_HEADER, ((t, *fiber_eval(fc, t)) for t in ts))
    summary = {"command": "nehari-scan", "seed": cfg.seed, "grid": _grid_record(spec.grid),
               "fiber": {"A": A, "B": B, "C": C, "p": spec.p, "q": spec.q, "lambda": lam},
               "threshold": _threshold_record(th)}
    if "json" in cfg.formats:
        write_json(out / "summary.json", summary)
    if cfg.plots:
        export_plot_data(out)
    return summary


def _root_cols(root):
    if root is None:
        return (float("nan"), float("nan"), "")
    return (root.t, root.phi, str(root.nehari_class))


def cmd_identity_check(cfg: RunConfig, args) -> dict:
    report = IdentityReport()
    if args.pohozaev:
        u, alpha = load_field(args.pohozaev)
        spec = ProblemSpec(u.grid, alpha, cfg.p, cfg.q, lam=cfg.lam_value or 0.0,
                           b=cfg.b.build(u.grid), c=cfg.c.build(u.grid), truncated=cfg.truncated)
        lhs, rhs, res = pohozaev_residual(spec, u)
        report.add(IdentityRecord("pohozaev", lhs, rhs, res, _grid_record(u.grid)))
    if args.commutator:
        grid = cfg.grid
        phi = grid.evaluate(lambda *x: np.exp(-sum(xi**2 for xi in x)))
        res = commutator_identity_residual(phi, cfg.alpha)
        report.add(IdentityRecord("commutator", float("nan"), float("nan"), res, _grid_record(grid)))
    if args.rearrangement:
        u, alpha = load_field(args.rearrangement)
        gap = rearrangement_gap(u, alpha)
        report.add(IdentityRecord("rearrangement", float("nan"), float("nan"), gap, _grid_record(u.grid)))
    if args.scaling is not None:
        grid = cfg.grid
        u = grid.evaluate(lambda *x: np.exp(-sum(xi**2 for xi in x)))
        rep = scaling_noninvariance_report(u, cfg.alpha, args.scaling)
        report.add(IdentityRecord("scaling", rep.best_gamma, rep.control_gamma, rep.best_residual, _grid_record(grid)))
    if not report.records:
        raise ConfigError("identity-check needs at least one of --pohozaev, --commutator, --rearrangement, --scaling")
    out = cfg.output_dir
    record = report.to_dict()
    if "json" in cfg.formats:
        write_json(out / "identity.json", record)
    print(json.dumps(to_jsonable(record), sort_keys=True))
    return record


def cmd_kernel_table(cfg: RunConfig, args) -> dict:
    if not args.r_min > 0 or not args.r_max > args.r_min or args.count < 2:
        raise ConfigError("kernel-table needs 0 < r_min < r_max and count >= 2")
    r = np.linspace(args.r_min, args.r_max, args.count)
    val = eval_G_alpha(KernelSpec(args.kernel_alpha, args.kernel_dim), r, full_output=True)
    rows = list(zip(r, val.value))
    if args.output:
        write_csv(args.output, KERNEL_HEADER, rows)
    else:
        print(",".join(KERNEL_HEADER))
        for a, b in rows:
            print(f"{float(a)!r},{float(b)!r}")
    return {"converged": val.converged, "rel_change": val.rel_change}


def cmd_export_plots(cfg, args) -> dict:
    written = export_plot_data(args.run_dir, png=not args.no_png)
    for path in written:
        print(path)
    return {"written": [str(p) for p in written]}


COMMANDS = {
    "solve": cmd_solve,
    "groundstate": cmd_groundstate,
    "two-solutions": cmd_two_solutions,
    "mountain-pass": cmd_mountain_pass,
    "nehari-scan": cmd_nehari_scan,
    "identity-check": cmd_identity_check,
    "kernel-table": cmd_kernel_table,
    "export-plots": cmd_export_plots,
}


def _add_problem_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI run configuration")
    p.add_argument("--dim", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--p", type=float)
    p.add_argument("--q", type=float)
    p.add_argument("--lambda", dest="lam", help="number or '<k>x-lambda0'")
    p.add_argument("--half-length", type=float)
    p.add_argument("--points", type=int)
    p.add_argument("--truncated", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--b", help="potential family tag for b")
    p.add_argument("--c", help="potential family tag for c")
    p.add_argument("--which", choices=["M_0", "M_lambda", "Nplus", "Nminus"])
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--starts", type=int)
    p.add_argument("--radial", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--nodes", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--plots", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--log-level")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fracbessel", description="Pseudo-spectral fractional Bessel toolkit")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("solve", "groundstate", "two-solutions", "mountain-pass"):
        _add_problem_flags(sub.add_parser(name))
    scan = sub.add_parser("nehari-scan")
    _add_problem_flags(scan)
    scan.add_argument("--field", help="BGS1 field whose fiber maps are scanned (default: random bump)")
    scan.add_argument("--lambda-max", default="2x-lambda0")
    scan.add_argument("--lambda-steps", type=int, default=81)
    scan.add_argument("--fiber-points", type=int, default=400)
    ident = sub.add_parser("identity-check")
    _add_problem_flags(ident)
    ident.add_argument("--pohozaev", metavar="FIELD")
    ident.add_argument("--commutator", action="store_true", help="gaussian test field on the configured grid")
    ident.add_argument("--rearrangement", metavar="FIELD")
    ident.add_argument("--scaling", type=float, metavar="S")
    kt = sub.add_parser("kernel-table")
    kt.add_argument("--alpha", dest="kernel_alpha", type=float, required=True)
    kt.add_argument("--dim", dest="kernel_dim", type=int, default=1)
    kt.add_argument("--r-min", type=float, default=0.1)
    kt.add_argument("--r-max", type=float, default=10.0)
    kt.add_argument("--count", type=int, default=100)
    kt.add_argument("--output")
    ex = sub.add_parser("export-plots")
    ex.add_argument("run_dir")
    ex.add_argument("--no-png", action="store_true")
    return parser


def _overrides(args) -> dict:
    g = lambda name: getattr(args, name, None)
    b = lambda v: None if v is None else ("true" if v else "false")
    return {
        "problem": {"dim": g("dim"), "alpha": g("alpha"), "p": g("p"), "q": g("q"), "lambda": g("lam"),
                    "half_length": g("half_length"), "points": g("points"), "truncated": b(g("truncated"))},
        "potentials": {"b": g("b"), "c": g("c")},
        "solver": {"which": g("which"), "tol": g("tol"), "max_iter": g("max_iter"), "seed": g("seed"),
                   "starts": g("starts"), "radial": b(g("radial")), "nodes": g("nodes")},
        "outputs": {"directory": g("out"), "plots": b(g("plots")), "log_level": g("log_level")},
    }


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = None
        if args.command not in ("kernel-table", "export-plots"):
            cfg = load_config(args.config, _overrides(args), command=args.command)
            logging.basicConfig(level=cfg.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
        COMMANDS[args.command](cfg, args)
    except (FracBesselError, OSError, ArithmeticError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exit_code_for(exc)
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
