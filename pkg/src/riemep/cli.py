"""Command-line experiment runner.

Exit codes for ``run``: 0 converged, 2 iteration budget exhausted,
3 step-condition violation, 1 configuration error.  ``verify`` exits 0
when every enabled check passes and 4 when one fails.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .applications import best_response_oracle
from .bifunctions import check_monotone, check_pointwise_weak_convexity
from .config import ConfigError, ExperimentConfig, load_config
from .problems import problem_names
from .solvers import (
    algorithm_p,
    brute_force_ep,
    hausdorff,
    verify_inclusion_vip_ep,
    verify_proximity,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_BUDGET = 2
EXIT_STEP = 3
EXIT_CHECK_FAILED = 4

STATUS_CODES = {"converged": EXIT_OK, "max-iters": EXIT_BUDGET, "step-condition-violated": EXIT_STEP}


def _say(quiet, *msg):
    if not quiet:
        print(*msg)


def _out_dir(exp: ExperimentConfig, override, config_path) -> Path:
    if override is not None:
        return Path(override)
    if exp.output_dir is not None:
        return Path(exp.output_dir)
    return Path("out") / Path(config_path).stem


def _apply_overrides(exp: ExperimentConfig, seed, max_iters) -> ExperimentConfig:
    solver = exp.solver
    if seed is not None:
        exp = replace(exp, seed=seed)
        solver = replace(solver, seed=seed)
    if max_iters is not None:
        solver = replace(solver, max_outer_iters=max_iters)
    return replace(exp, solver=solver)


def _fmt_point(x):
    return "(" + ", ".join(f"{v:.6g}" for v in np.asarray(x)) + ")"


def oracle_comparison(exp: ExperimentConfig, final_point) -> dict:
    """Distance from the solver's final point to the oracle (or known) solution set."""
    P = exp.problem
    M = P.manifold
    grid = exp.verify.grid
    if P.Q.compact:
        if P.nash is not None:
            ref = best_response_oracle(P.nash, grid)
            source = "best-response oracle"
        else:
            ref = brute_force_ep(P.F, P.Q, grid)
            source = "brute-force EP oracle"
        pts, tol = ref.points, 3.0 * ref.spacing
    elif P.solution is not None:
        pts, tol, source = np.atleast_2d(P.solution), 1e-6, "known solution"
    else:
        return {"source": "none", "passed": None, "detail": "non-compact set without known solution"}
    if len(pts) == 0:
        return {"source": source, "passed": False, "detail": "oracle returned no points"}
    d = M.dist(np.broadcast_to(final_point, pts.shape), pts)
    j = int(np.argmin(d))
    return {
        "source": source,
        "oracle_points": int(len(pts)),
        "nearest_oracle_point": [float(v) for v in pts[j]],
        "distance": float(d[j]),
        "tolerance": float(tol),
        "passed": bool(d[j] <= tol),
    }


def run_experiment(exp: ExperimentConfig, out: Path, verify: bool = False, quiet: bool = False) -> int:
    P = exp.problem
    trace = algorithm_p(P.F, P.Q, P.x0, exp.solver)
    if not exp.solver.assume_proximity and P.Q.compact:
        verify_proximity(trace, P.F, P.Q, exp.verify.grid)
    out.mkdir(parents=True, exist_ok=True)
    trace.to_csv(out / "trace.csv")
    trace.to_json(out / "summary.json")
    _say(quiet, f"{exp.name}: {trace.status} after {trace.iterations} iterations")
    _say(quiet, f"  final point    {_fmt_point(trace.final_point)}")
    _say(quiet, f"  final residual {trace.final_residual:.3e}")
    if trace.proximity_verified is not None:
        _say(quiet, f"  proximity d(x0, EP) < D/8: {'verified' if trace.proximity_verified else 'NOT verified'}")
    for w in trace.warnings:
        _say(quiet, f"  warning: {w}")
    if verify:
        report = oracle_comparison(exp, trace.final_point)
        with open(out / "oracle.json", "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")
        verdict = {True: "PASS", False: "FAIL", None: "SKIP"}[report["passed"]]
        detail = report.get("detail") or f"distance {report['distance']:.3g} (tolerance {report['tolerance']:.3g})"
        _say(quiet, f"  oracle check [{report['source']}]: {verdict}, {detail}")
    return STATUS_CODES[trace.status]


def verify_checks(exp: ExperimentConfig):
    """Rows ``(check, verdict, detail)`` for the enabled checks."""
    P = exp.problem
    F, Q = P.F, P.Q
    tog = exp.verify
    rows = []
    if tog.monotone:
        rep = check_monotone(F, Q, n_pairs=tog.pairs, seed=exp.seed)
        if rep.monotone:
            rows.append(("monotone", "PASS", f"max F(x,y)+F(y,x) = {rep.worst_value:.3g} over {rep.n_pairs} pairs"))
        else:
            x, y = rep.witness
            rows.append(
                ("monotone", "FAIL", f"F(x,y)+F(y,x) = {rep.worst_value:.3g} at x={_fmt_point(x)}, y={_fmt_point(y)}")
            )
    if tog.convexity:
        rep = check_pointwise_weak_convexity(F, Q, seed=exp.seed)
        if rep.passed:
            rows.append(("convexity", "PASS", f"{rep.n_tests} geodesic midpoint tests"))
        else:
            x, y, t, ex = rep.violations[0]
            rows.append(
                (
                    "convexity",
                    "FAIL",
                    f"{len(rep.violations)}/{rep.n_tests} violations; e.g. excess {ex:.3g} at t={t:g}, "
                    f"x={_fmt_point(x)}, y={_fmt_point(y)}",
                )
            )
    if tog.oracle:
        if not Q.compact:
            rows.append(("vip=ep", "SKIP", "constraint set is not compact"))
        else:
            try:
                rep = verify_inclusion_vip_ep(F, Q, tog.grid)
            except ValueError as err:
                rows.append(("vip=ep", "SKIP", str(err)))
            else:
                verdict = "PASS" if rep.equality else "FAIL"
                rows.append(
                    (
                        "vip=ep",
                        verdict,
                        f"Hausdorff {rep.hausdorff:.3g} vs tolerance {rep.tolerance:.3g} "
                        f"(|EP|={len(rep.ep)}, |VIP|={len(rep.vip)})",
                    )
                )
            if P.nash is not None:
                br = best_response_oracle(P.nash, tog.grid)
                ep = brute_force_ep(F, Q, br.grid)
                h = hausdorff(Q.manifold, br.grid, br.mask, ep.mask)
                tol = 3.0 * br.spacing
                rows.append(
                    ("nash=ep", "PASS" if h <= tol else "FAIL", f"Hausdorff {h:.3g} vs tolerance {tol:.3g}")
                )
    return rows


def verify_experiment(exp: ExperimentConfig, out: Path, quiet: bool = False) -> int:
    rows = verify_checks(exp)
    out.mkdir(parents=True, exist_ok=True)
    width = max([len(r[0]) for r in rows] + [5])
    lines = [f"{'check':<{width}}  result  detail"]
    lines += [f"{c:<{width}}  {v:<6}  {d}" for c, v, d in rows]
    text = "\n".join(lines) + "\n"
    (out / "verify.txt").write_text(text)
    with open(out / "verify.json", "w") as fh:
        json.dump([{"check": c, "result": v, "detail": d} for c, v, d in rows], fh, indent=2)
        fh.write("\n")
    _say(quiet, text.rstrip())
    return EXIT_CHECK_FAILED if any(v == "FAIL" for _, v, _ in rows) else EXIT_OK


def _run_one(path, out, verify, quiet, seed, max_iters, mode="run"):
    try:
        exp = _apply_overrides(load_config(path), seed, max_iters)
    except ConfigError as err:
        print(f"{path}: config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    target = _out_dir(exp, out, path)
    if mode == "verify":
        return verify_experiment(exp, target, quiet)
    return run_experiment(exp, target, verify, quiet)


def _batch(directory, args) -> int:
    configs = sorted(Path(directory).glob("*.toml"))
    if not configs:
        print(f"{directory}: no *.toml configs", file=sys.stderr)
        return EXIT_CONFIG
    base = Path(args.out) if args.out else None
    jobs = []
    with ProcessPoolExecutor(max_workers=min(len(configs), os.cpu_count() or 1)) as pool:
        for path in configs:
            out = base / path.stem if base else None
            jobs.append(
                (path, pool.submit(_run_one, path, out, args.verify, True, args.seed, args.max_iters))
            )
        codes = []
        for path, job in jobs:
            code = job.result()
            codes.append(code)
            _say(args.quiet, f"{path.name}: exit {code}")
    return max(codes)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="riemep",
        description="Run the proximal point method and grid oracles on equilibrium problems over manifolds.",
        epilog="run exit codes: 0 converged, 1 config error, 2 budget exhausted, 3 step-condition violation. "
        "verify exit codes: 0 all checks pass, 1 config error, 4 a check failed.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, metavar="N", help="override the config seed (sampling in checks and L_hat)")
        p.add_argument("--out", metavar="DIR", help="output directory (default: [output] dir, else out/<config name>)")
        p.add_argument("--quiet", action="store_true", help="print nothing on success")

    run = sub.add_parser("run", help="run Algorithm P and write trace.csv and summary.json")
    run.add_argument("config", nargs="?", help="TOML experiment config")
    run.add_argument("--batch", metavar="DIR", help="run every *.toml in DIR concurrently (outputs go to --out/<name>)")
    run.add_argument("--verify", action="store_true", help="compare the final point with the grid oracle; writes oracle.json")
    run.add_argument("--max-iters", type=int, metavar="N", help="override solver.max_outer_iters")
    common(run)

    ver = sub.add_parser("verify", help="monotonicity, convexity and VIP=EP checks; writes verify.txt and verify.json")
    ver.add_argument("config", help="TOML experiment config")
    common(ver)

    sub.add_parser("list", help="list built-in problems")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list":
        for name in problem_names():
            print(name)
        return EXIT_OK
    if args.command == "run":
        if args.max_iters is not None and args.max_iters < 1:
            print("--max-iters must be at least 1", file=sys.stderr)
            return EXIT_CONFIG
        if args.batch:
            if args.config:
                print("give either a config or --batch DIR, not both", file=sys.stderr)
                return EXIT_CONFIG
            return _batch(args.batch, args)
        if not args.config:
            print("run needs a config file or --batch DIR", file=sys.stderr)
            return EXIT_CONFIG
        return _run_one(args.config, args.out, args.verify, args.quiet, args.seed, args.max_iters)
    return _run_one(args.config, args.out, False, args.quiet, args.seed, None, mode="verify")


if __name__ == "__main__":
    sys.exit(main())
