"""Command line entry point: ``smg {run,grid,rate-fit,verify,solve-opt}``."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import harness
from .harness import (ExperimentConfig, build_problem, cached_optimum, emit_report,
                      make_schedule, parse_data_arg, rate_fit, run_grid, run_optimizer,
                      verify_run, write_grid_csv)
from .optimizers import DivergenceError
from .schedules import InfeasibleScheduleError
from .theory import OptimumError


def _schedule_spec(args) -> dict:
    spec = {"kind": args.schedule}
    for key in ("eta", "gamma", "eta0", "rho"):
        val = getattr(args, key)
        if val is not None:
            spec[key] = val
    return spec


def cmd_run(args) -> int:
    spec = parse_data_arg(args.data)
    if args.l2:
        spec["l2"] = args.l2
    bundle = build_problem(spec)
    problem = bundle.problem
    w_star = None
    if args.wstar:
        w_star = np.load(args.wstar)
    elif problem.known_minimizer is not None:
        w_star = problem.known_minimizer
    schedule = None
    if args.optimizer in ("smg", "ssgd") and args.lr is None:
        schedule = make_schedule(_schedule_spec(args), args.epochs, problem.n)
    res = run_optimizer(problem, args.optimizer, [args.seed], args.epochs, lr=args.lr,
                        schedule=schedule, beta=args.beta, strategy=args.strategy,
                        feasibility=args.feasibility, w_star=w_star, log_gradients=False)
    trace = res.traces[0]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out.with_suffix(".jsonl"), "w", encoding="utf-8") as fh:
        for r in trace.records:
            fh.write(json.dumps({"t": r.t, "eta": r.eta, "loss": r.loss, "dist_sq": r.dist_sq,
                                 "time_ms": r.time_ms}) + "\n")
        fh.write(json.dumps({"output_index": trace.output_index,
                             "requested_eta1": res.requested_scale,
                             "effective_eta1": res.effective_scale}) + "\n")
    with open(out.with_suffix(".csv"), "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "eta", "loss", "dist_sq", "time_ms"])
        for r in trace.records:
            w.writerow([r.t, repr(r.eta), repr(r.loss), "" if r.dist_sq is None else repr(r.dist_sq),
                        f"{r.time_ms:.3f}"])
    print(f"final loss {trace.records[-1].loss:.6e} after {trace.T} epochs; "
          f"output iterate from epoch {trace.output_index}")
    return 0


def cmd_grid(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    if args.workers is not None:
        cfg.workers = args.workers
    result = run_grid(cfg)
    outdir = Path(args.out or cfg.output or "grid_out")
    outdir.mkdir(parents=True, exist_ok=True)
    write_grid_csv(result, outdir / "grid.csv")
    notes = [f"split: {result.split}"]
    for c in result.cells:
        tag = " *best*" if c.best else ""
        err = f" error: {c.error}" if c.error else ""
        notes.append(f"{c.optimizer} lr={c.lr:g}: final loss {c.final_loss:.6e}{tag}{err}")
    code = emit_report(outdir, list(result.curves.values()), notes=notes)
    print("\n".join(notes))
    return code


def cmd_rate_fit(args) -> int:
    xs, ys = [], []
    with open(args.table, encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            xs.append(float(row[args.x]))
            ys.append(float(row[args.y]))
    if args.log_correction and args.n is None:
        print("--log-correction needs --n", file=sys.stderr)
        return 2
    corr = harness.corollary3_correction(args.n) if args.log_correction else None
    fit = rate_fit(xs, ys, corr)
    print(f"slope {fit.slope:.6f} intercept {fit.intercept:.6f} rms residual {fit.residual:.3e}")
    if args.expect is not None:
        lo, hi = args.expect
        return 0 if lo <= fit.slope <= hi else 1
    return 0


def cmd_verify(args) -> int:
    spec = parse_data_arg(args.data)
    bundle = build_problem(spec)
    problem = bundle.problem
    w_star = cached_optimum(problem, args.wstar)
    schedule = make_schedule(_schedule_spec(args), args.epochs, problem.n)
    w0 = np.zeros(problem.dim) if args.w0_offset is None else w_star + args.w0_offset
    checks = verify_run(problem, schedule, args.beta, list(range(args.seeds)), w0, w_star)
    code = emit_report(args.out, checks=checks)
    failed = sum(not c.ok for c in checks)
    print(f"{len(checks) - failed}/{len(checks)} checks passed; report in {args.out}")
    return code


def cmd_solve_opt(args) -> int:
    spec = parse_data_arg(args.data)
    if args.l2:
        spec["l2"] = args.l2
    problem = build_problem(spec).problem
    cache = args.out or (args.data + ".wstar.npy" if not args.data.startswith("synth:") else None)
    w = cached_optimum(problem, cache, tol=args.tol)
    print(f"F(w*) = {problem.full_value(w):.12e}, ||grad F(w*)|| = "
          f"{np.linalg.norm(problem.full_gradient(w)):.3e}" + (f", cached in {cache}" if cache else ""))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="smg", description="Shuffling momentum gradient experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    def schedule_flags(sp):
        sp.add_argument("--schedule", default="constant",
                        choices=["constant", "constant_convex", "constant_strongly_convex",
                                 "exponential"])
        sp.add_argument("--eta", type=float, help="epoch learning rate for --schedule constant")
        sp.add_argument("--gamma", type=float)
        sp.add_argument("--eta0", type=float)
        sp.add_argument("--rho", type=float)

    r = sub.add_parser("run", help="one optimizer run, JSONL trace plus CSV summary")
    r.add_argument("--optimizer", choices=harness.OPTIMIZERS, default="smg")
    r.add_argument("--beta", type=float, default=None,
                   help="momentum (default 0.5 for smg, 0.9 for sgdm)")
    schedule_flags(r)
    r.add_argument("--lr", type=float, help="per-step size (required for sgdm/adam/sgd)")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--epochs", type=int, default=10)
    r.add_argument("--strategy", choices=["rr", "ss", "ig"], default="rr")
    r.add_argument("--data", required=True, help="LIBSVM path or synth:quadratic|logistic:k=v,...")
    r.add_argument("--l2", type=float, default=0.0)
    r.add_argument("--feasibility", choices=harness.FEASIBILITY_MODES, default="autoscale")
    r.add_argument("--wstar", help="cached minimizer (.npy) for distance tracking")
    r.add_argument("--out", default="run", help="output prefix for .jsonl and .csv")
    r.set_defaults(func=cmd_run)

    g = sub.add_parser("grid", help="grid search from a JSON config")
    g.add_argument("config")
    g.add_argument("--out")
    g.add_argument("--workers", type=int)
    g.set_defaults(func=cmd_grid)

    f = sub.add_parser("rate-fit", help="log-log slope of a CSV column pair")
    f.add_argument("table")
    f.add_argument("--x", default="T")
    f.add_argument("--y", default="metric")
    f.add_argument("--log-correction", action="store_true",
                   help="divide y by (log(sqrt(n) x))^2 before fitting")
    f.add_argument("--n", type=int)
    f.add_argument("--expect", type=float, nargs=2, metavar=("LO", "HI"),
                   help="exit 1 unless the slope lies in [LO, HI]")
    f.set_defaults(func=cmd_rate_fit)

    v = sub.add_parser("verify", help="instrumented RR run with lemma and theorem checks")
    v.add_argument("--data", required=True)
    v.add_argument("--beta", type=float, default=0.5)
    schedule_flags(v)
    v.add_argument("--epochs", type=int, default=20)
    v.add_argument("--seeds", type=int, default=50, help="number of seeds 0..k-1")
    v.add_argument("--w0-offset", type=float, help="start at w* + offset*ones (default w0 = 0)")
    v.add_argument("--wstar")
    v.add_argument("--out", default="verify_out")
    v.set_defaults(func=cmd_verify)

    s = sub.add_parser("solve-opt", help="compute and cache w* by full-batch gradient descent")
    s.add_argument("--data", required=True)
    s.add_argument("--l2", type=float, default=0.0)
    s.add_argument("--tol", type=float, default=1e-10)
    s.add_argument("--out", help="cache path (default <data>.wstar.npy)")
    s.set_defaults(func=cmd_solve_opt)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (DivergenceError, InfeasibleScheduleError, OptimumError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
