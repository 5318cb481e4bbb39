"""Experiment orchestration: problem construction, grids, sweeps, rate fits, reports.

Configs are plain JSON.  A grid config looks like::

    {
      "problem": {"kind": "libsvm", "path": "w8a", "test_path": "w8a.t"},
      "optimizers": [
        {"name": "smg", "beta": 0.5, "lrs": [0.1, 0.01, 0.001]},
        {"name": "adam", "lrs": [0.01, 0.001, 0.0001]}
      ],
      "seeds": [0, 1, 2], "epochs": 20, "feasibility": "off",
      "output": "out/w8a", "workers": 4
    }

Learning rates in a grid are per-step sizes for every method; the shuffling
methods run the constant epoch schedule eta_t = lr * n.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import data as data_mod
from .optimizers import (DivergenceError, RunTrace, adam_run_many, iid_sgd_run_many,
                         sgdm_run_many, shuffling_sgd_run_many, smg_run_many)
from .problems import FiniteSumProblem, LogisticProblem
from .schedules import (InfeasibleScheduleError, Schedule, constant, constant_convex,
                        constant_strongly_convex, exponential, feasible, max_feasible_gamma)
from .shuffling import PermutationSource
from .theory import (CheckResult, expected_output_gap, lemma1_check, lemma_B_checks,
                     sigma_star, solve_optimum, theorem1_rhs, theorem2_rhs, trajectory_stats)

__all__ = [
    "OPTIMIZERS",
    "ProblemBundle",
    "build_problem",
    "parse_data_arg",
    "cached_optimum",
    "make_schedule",
    "CellResult",
    "run_optimizer",
    "ExperimentConfig",
    "GridCell",
    "GridResult",
    "run_grid",
    "Curve",
    "curve_from_traces",
    "RateFit",
    "rate_fit",
    "corollary3_correction",
    "SweepResult",
    "convex_rate_sweep",
    "strongly_convex_rate_sweep",
    "largest_common_gamma",
    "verify_run",
    "write_curve_csv",
    "write_checks_csv",
    "emit_report",
]

OPTIMIZERS = ("smg", "ssgd", "sgdm", "adam", "sgd")
FEASIBILITY_MODES = ("autoscale", "strict", "off")


# --------------------------------------------------------------------------
# problems


@dataclass
class ProblemBundle:
    problem: FiniteSumProblem
    name: str
    test: tuple | None = None   # (X, y) for accuracy on held-out data
    split: str = "none"         # "test-file", "80/20 seed=<s>", or "none"


def build_problem(spec: dict, base_dir: str | os.PathLike | None = None) -> ProblemBundle:
    """Problem from a config block; see the module docstring for the kinds."""
    spec = dict(spec)
    kind = spec.pop("kind")
    base = Path(base_dir) if base_dir is not None else Path.cwd()
    if kind == "synth_quadratic":
        p = data_mod.synth_quadratic_dataset(
            int(spec["n"]), int(spec["dim"]), int(spec.get("seed", 0)),
            float(spec.get("condition", 10.0)), spread=float(spec.get("spread", 1.0)),
            lam_min=float(spec.get("lam_min", 1.0)))
        return ProblemBundle(p, f"synth_quadratic(n={p.n},d={p.dim})")
    if kind in ("synth_logistic", "libsvm"):
        l2 = float(spec.get("l2", 0.0))
        if kind == "synth_logistic":
            ds = data_mod.synth_logistic_dataset(
                int(spec["n"]), int(spec["dim"]), int(spec.get("seed", 0)),
                rank=spec.get("rank"), noise=float(spec.get("noise", 1.0)),
                margin=float(spec.get("margin", 2.0)))
            name = f"synth_logistic(n={len(ds)},d={ds.dim})"
        else:
            ds = data_mod.load_libsvm(base / spec["path"])
            name = Path(spec["path"]).name
        test_path = spec.get("test_path")
        if test_path and (base / test_path).exists():
            test = data_mod.load_libsvm(base / test_path)
            dim = max(ds.dim, test.dim)
            train_p = data_mod.logistic_problem(ds.features, ds.labels, l2, dim=dim)
            test_p = data_mod.logistic_problem(test.features, test.labels, 0.0, dim=dim)
            return ProblemBundle(train_p, name, (test_p.X, test_p.y), "test-file")
        holdout = float(spec.get("holdout", 0.2 if kind == "libsvm" else 0.0))
        if holdout > 0:
            split_seed = int(spec.get("split_seed", 0))
            train, test = data_mod.train_test_split(ds, holdout, split_seed)
            train_p = data_mod.logistic_problem(train.features, train.labels, l2, dim=ds.dim)
            test_p = data_mod.logistic_problem(test.features, test.labels, 0.0, dim=ds.dim)
            pct = round(100 * (1 - holdout))
            return ProblemBundle(train_p, name, (test_p.X, test_p.y),
                                 f"{pct}/{100 - pct} seed={split_seed}")
        return ProblemBundle(ds.problem(l2), name)
    raise ValueError(f"unknown problem kind {kind!r}")


def parse_data_arg(arg: str) -> dict:
    """``PATH`` or ``synth:quadratic:n=100,dim=5,seed=0`` into a problem block."""
    if not arg.startswith("synth:"):
        return {"kind": "libsvm", "path": arg, "holdout": 0.0}
    parts = arg.split(":", 2)
    if len(parts) < 2 or parts[1] not in ("quadratic", "logistic"):
        raise ValueError(f"bad synthetic spec {arg!r}; use synth:quadratic:... or synth:logistic:...")
    spec: dict = {"kind": f"synth_{parts[1]}"}
    if len(parts) == 3 and parts[2]:
        for item in parts[2].split(","):
            key, sep, value = item.partition("=")
            if not sep:
                raise ValueError(f"bad synthetic parameter {item!r}")
            spec[key.strip()] = json.loads(value)
    return spec


def cached_optimum(problem: FiniteSumProblem, cache: str | os.PathLike | None = None,
                   tol: float = 1e-10) -> np.ndarray:
    """w* from ``cache`` when it still certifies, else solved (and written to ``cache``)."""
    if cache is not None and Path(cache).exists():
        w = np.load(cache)
        if w.shape == (problem.dim,) and np.linalg.norm(problem.full_gradient(w)) <= tol:
            return w
    w = solve_optimum(problem, tol=tol)
    if cache is not None:
        Path(cache).parent.mkdir(parents=True, exist_ok=True)
        np.save(cache, w)
    return w


# --------------------------------------------------------------------------
# running one optimizer over a seed set


def make_schedule(spec: dict, T: int, n: int) -> Schedule:
    kind = spec.get("kind", "constant")
    if kind == "constant":
        return constant(T, float(spec["eta"]))
    if kind == "constant_convex":
        return constant_convex(T, n, float(spec["gamma"]))
    if kind == "constant_strongly_convex":
        return constant_strongly_convex(T, n, float(spec["gamma"]))
    if kind == "exponential":
        return exponential(T, float(spec["eta0"]), float(spec["rho"]))
    raise ValueError(f"unknown schedule kind {kind!r}")


@dataclass
class CellResult:
    traces: list[RunTrace]
    requested_scale: float | None = None
    effective_scale: float | None = None


def _fit_schedule(problem, schedule, beta, mode):
    """Apply the feasibility policy; returns (schedule, factor applied)."""
    if mode == "off":
        return schedule, 1.0
    mu = problem.strong_convexity_mu
    if feasible(schedule, problem.smoothness_L, beta, mu).ok:
        return schedule, 1.0
    if mode == "strict":
        raise InfeasibleScheduleError(f"schedule with max eta {schedule.max_eta:.6g} is infeasible")
    factor = max_feasible_gamma(lambda s: schedule.scaled(s), problem.smoothness_L, beta, mu,
                                gamma_hi=0.5)
    return schedule.scaled(factor), factor


def run_optimizer(problem: FiniteSumProblem, name: str, seeds: Sequence[int], T: int, *,
                  lr: float | None = None, schedule: Schedule | None = None,
                  beta: float | None = None, strategy: str = "rr", w0=None,
                  feasibility: str = "autoscale", adam: dict | None = None,
                  hooks: Sequence[Callable] = (), log_gradients: bool | None = None,
                  keep_iterates: bool | None = None, w_star=None) -> CellResult:
    """Run ``name`` once per seed (lockstep) and return the traces."""
    if name not in OPTIMIZERS:
        raise ValueError(f"unknown optimizer {name!r}; choose from {OPTIMIZERS}")
    if feasibility not in FEASIBILITY_MODES:
        raise ValueError(f"feasibility must be one of {FEASIBILITY_MODES}")
    n = problem.n
    w0 = np.zeros(problem.dim) if w0 is None else np.asarray(w0, dtype=np.float64)
    kw = dict(hooks=hooks, log_gradients=log_gradients, keep_iterates=keep_iterates,
              w_star=w_star)
    sources = [PermutationSource(strategy, s, n) for s in seeds]
    if name in ("smg", "ssgd"):
        if schedule is None:
            if lr is None:
                raise ValueError(f"{name} needs lr or a schedule")
            schedule = constant(T, lr * n)
        if schedule.T < T:
            raise ValueError(f"schedule horizon {schedule.T} shorter than T={T}")
        b = (0.5 if beta is None else beta) if name == "smg" else 0.0
        requested = schedule.eta(1)
        schedule, factor = _fit_schedule(problem, schedule, b, feasibility)
        if name == "smg":
            traces = smg_run_many(problem, schedule, b, sources, w0, T, check_feasible=False, **kw)
        else:
            traces = shuffling_sgd_run_many(problem, schedule, sources, w0, T, **kw)
        return CellResult(traces, requested, requested * factor)
    if lr is None:
        raise ValueError(f"{name} needs lr")
    if name == "sgdm":
        traces = sgdm_run_many(problem, lr, 0.9 if beta is None else beta, sources, w0, T, **kw)
    elif name == "adam":
        a = {"beta1": 0.9, "beta2": 0.999, "eps": 1e-8, **(adam or {})}
        traces = adam_run_many(problem, lr, a["beta1"], a["beta2"], a["eps"], sources, w0, T, **kw)
    else:
        traces = iid_sgd_run_many(problem, lr, list(seeds), w0, T, **kw)
    return CellResult(traces, lr, lr)


# --------------------------------------------------------------------------
# curves


@dataclass
class Curve:
    name: str
    epochs: np.ndarray
    mean_loss: np.ndarray
    stderr: np.ndarray
    accuracy: np.ndarray | None = None


def _accuracy_hook(problem, test, store):
    X, y = test if test is not None else (problem.X, problem.y)

    def hook(trace, record, log):
        w = trace.iterates.get(record.t)
        if w is None:
            return
        store.setdefault(trace.seed, []).append(problem.accuracy(w, X, y))
    return hook


def curve_from_traces(name: str, traces: Sequence[RunTrace],
                      accuracy: dict | None = None) -> Curve:
    traces = sorted(traces, key=lambda tr: tr.seed)
    L = np.array([tr.losses for tr in traces])
    mean = L.mean(axis=0)
    se = L.std(axis=0, ddof=1) / math.sqrt(len(traces)) if len(traces) > 1 else np.zeros_like(mean)
    acc = None
    if accuracy:
        acc = np.array([accuracy[tr.seed] for tr in traces]).mean(axis=0)
    return Curve(name, np.arange(L.shape[1]), mean, se, acc)


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return repr(float(x))


def write_curve_csv(curve: Curve, path) -> None:
    """Columns epoch,mean_loss,stderr,accuracy; accuracy is empty where unknown."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["epoch", "mean_loss", "stderr", "accuracy"])
    for k, e in enumerate(curve.epochs):
        acc = None
        if curve.accuracy is not None and k >= 1:
            acc = curve.accuracy[k - 1]
        w.writerow([int(e), _fmt(curve.mean_loss[k]), _fmt(curve.stderr[k]), _fmt(acc)])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def write_checks_csv(checks: Sequence[CheckResult], path) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["inequality", "epoch", "lhs", "rhs", "slack", "ok"])
    for c in checks:
        w.writerow([c.name, c.t, _fmt(c.lhs), _fmt(c.rhs), _fmt(c.slack), "true" if c.ok else "false"])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


# --------------------------------------------------------------------------
# grid search


@dataclass
class ExperimentConfig:
    problem: dict
    optimizers: list
    seeds: list
    epochs: int
    strategy: str = "rr"
    feasibility: str = "autoscale"
    output: str | None = None
    workers: int = 1
    theory_checks: bool = False
    base_dir: str | None = None

    def __post_init__(self):
        if not self.seeds:
            raise ValueError("seeds must be nonempty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seeds must be distinct")
        if self.epochs < 1:
            raise ValueError("epochs must be positive")
        if self.feasibility not in FEASIBILITY_MODES:
            raise ValueError(f"feasibility must be one of {FEASIBILITY_MODES}")

    @classmethod
    def from_dict(cls, d: dict, base_dir=None) -> "ExperimentConfig":
        d = dict(d)
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if base_dir is not None and d.get("base_dir") is None:
            d["base_dir"] = os.fspath(base_dir)
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh), base_dir=path.parent)


@dataclass
class GridCell:
    optimizer: str
    lr: float
    effective_lr: float | None
    final_loss: float
    stderr: float
    accuracy: float | None
    error: str | None = None
    best: bool = False


@dataclass
class GridResult:
    cells: list[GridCell]
    curves: dict = field(default_factory=dict)   # optimizer -> Curve of its best cell
    split: str = "none"

    def best(self, optimizer: str) -> GridCell | None:
        for c in self.cells:
            if c.optimizer == optimizer and c.best:
                return c
        return None


def _run_cell(args):
    bundle, opt, lr, seeds, T, strategy, feas = args
    problem = bundle.problem
    acc: dict = {}
    hooks = [_accuracy_hook(problem, bundle.test, acc)] if isinstance(problem, LogisticProblem) else []
    name = opt["name"]
    extra = {k: opt[k] for k in ("beta1", "beta2", "eps") if k in opt}
    try:
        res = run_optimizer(problem, name, seeds, T, lr=lr, beta=opt.get("beta"),
                            strategy=strategy, feasibility=feas, adam=extra, hooks=hooks,
                            log_gradients=False)
    except (DivergenceError, InfeasibleScheduleError) as exc:
        return GridCell(name, lr, None, math.nan, math.nan, None, error=str(exc)), None
    curve = curve_from_traces(name, res.traces, acc or None)
    eff = res.effective_scale / problem.n if name in ("smg", "ssgd") else res.effective_scale
    final_acc = None if curve.accuracy is None else float(curve.accuracy[-1])
    cell = GridCell(name, lr, eff, float(curve.mean_loss[-1]), float(curve.stderr[-1]), final_acc)
    if not math.isfinite(cell.final_loss):
        cell.error = "non-finite final loss"
    return cell, curve


def run_grid(config: ExperimentConfig) -> GridResult:
    """Every (optimizer, lr) cell over all seeds; the best cell per optimizer by train loss."""
    bundle = build_problem(config.problem, config.base_dir)
    jobs = []
    for opt in config.optimizers:
        lrs = opt.get("lrs", [opt["lr"]] if "lr" in opt else None)
        if not lrs:
            raise ValueError(f"optimizer block {opt} lists no learning rates")
        for lr in lrs:
            jobs.append((bundle, opt, float(lr), list(config.seeds), config.epochs,
                         config.strategy, config.feasibility))
    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_run_cell, jobs))
    else:
        results = [_run_cell(j) for j in jobs]
    cells = [c for c, _ in results]
    curves = {}
    for name in dict.fromkeys(c.optimizer for c in cells):
        idx = [k for k, c in enumerate(cells) if c.optimizer == name and c.error is None
               and math.isfinite(c.final_loss)]
        if not idx:
            continue
        # ties broken by grid order, so the choice does not depend on execution order
        k = min(idx, key=lambda k: (cells[k].final_loss, k))
        cells[k].best = True
        curves[name] = results[k][1]
    return GridResult(cells, curves, bundle.split)


def write_grid_csv(result: GridResult, path) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["optimizer", "lr", "effective_lr", "final_loss", "stderr", "accuracy", "best",
                "error"])
    for c in result.cells:
        w.writerow([c.optimizer, _fmt(c.lr), _fmt(c.effective_lr), _fmt(c.final_loss),
                    _fmt(c.stderr), _fmt(c.accuracy), "true" if c.best else "false", c.error or ""])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


# --------------------------------------------------------------------------
# rate fits and sweeps


@dataclass
class RateFit:
    x: np.ndarray
    y: np.ndarray
    slope: float
    intercept: float
    residual: float
    correction: np.ndarray | None = None


def rate_fit(x, y, log_correction: Callable | None = None) -> RateFit:
    """Least-squares slope of log(y / correction(x)) against log x."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-D arrays of equal length")
    if x.size < 4:
        raise ValueError("need at least 4 grid points")
    if np.any(np.diff(x) <= 0) or np.any(x <= 0):
        raise ValueError("x must be positive and strictly increasing")
    if np.any(y <= 0) or not np.all(np.isfinite(y)):
        raise ValueError("y must be positive and finite")
    corr = None
    yy = y
    if log_correction is not None:
        corr = np.array([float(log_correction(v)) for v in x])
        yy = y / corr
    lx, ly = np.log(x), np.log(yy)
    A = np.column_stack([lx, np.ones_like(lx)])
    (slope, intercept), *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = float(np.sqrt(np.mean((A @ np.array([slope, intercept]) - ly) ** 2)))
    return RateFit(x, y, float(slope), float(intercept), resid, corr)


def corollary3_correction(n: int) -> Callable[[float], float]:
    """x -> (log(sqrt(n) x))^2, the log factor of the strongly convex rate."""
    return lambda T: math.log(math.sqrt(n) * T) ** 2


@dataclass
class SweepResult:
    T: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    rhs: np.ndarray
    gamma: float
    fit: RateFit
    first_cell: Curve | None = None


def convex_rate_sweep(problem, Ts: Sequence[int], seeds: Sequence[int], beta: float, w0,
                      w_star, gamma: float | None = None) -> SweepResult:
    """E[F(w^_T) - F*] for eta = gamma n^(1/3) / T^(1/3) over a T grid.

    gamma defaults to the largest value feasible at the smallest T (hence at
    every T).  The output draw is averaged out exactly.
    """
    n, L = problem.n, problem.smoothness_L
    Ts = sorted(int(T) for T in Ts)
    if gamma is None:
        gamma = max_feasible_gamma(lambda g: constant_convex(Ts[0], n, g), L, beta)
    w_star = np.asarray(w_star, dtype=np.float64)
    f_star = problem.full_value(w_star)
    s2 = sigma_star(problem, w_star)
    dist0 = float((np.asarray(w0) - w_star) @ (np.asarray(w0) - w_star))
    means, ses, rhs = [], [], []
    first = None
    for T in Ts:
        sched = constant_convex(T, n, gamma)
        sources = [PermutationSource("rr", s, n) for s in seeds]
        traces = smg_run_many(problem, sched, beta, sources, w0, w_star=w_star, mu=0.0,
                              log_gradients=False, keep_iterates=False)
        gaps = np.array([expected_output_gap(tr, f_star) for tr in traces])
        means.append(gaps.mean())
        ses.append(gaps.std(ddof=1) / math.sqrt(gaps.size) if gaps.size > 1 else 0.0)
        rhs.append(theorem1_rhs(dist0, sched, beta, 1.0, L, s2, n))
        if first is None:
            first = curve_from_traces(f"smg_T{T}", traces)
    means = np.array(means)
    return SweepResult(np.array(Ts), means, np.array(ses), np.array(rhs), gamma,
                       rate_fit(Ts, means), first)


def largest_common_gamma(problems: Sequence[FiniteSumProblem], T: int, beta: float) -> float:
    """Largest gamma with gamma log(sqrt(n) T)/T feasible for every problem at horizon T."""
    return min(max_feasible_gamma(lambda g, p=p: constant_strongly_convex(T, p.n, g),
                                  p.smoothness_L, beta, p.strong_convexity_mu)
               for p in problems)


def strongly_convex_rate_sweep(problem, Ts: Sequence[int], seeds: Sequence[int], beta: float,
                               w0, gamma: float, w_star=None) -> SweepResult:
    """E||w~_T - w*||^2 for eta = gamma log(sqrt(n) T) / T, fitted after the log^2 correction."""
    n, L, mu = problem.n, problem.smoothness_L, problem.strong_convexity_mu
    if mu <= 0:
        raise ValueError("problem is not strongly convex")
    w_star = problem.known_minimizer if w_star is None else np.asarray(w_star, dtype=np.float64)
    s2 = sigma_star(problem, w_star)
    dist0 = float((np.asarray(w0) - w_star) @ (np.asarray(w0) - w_star))
    Ts = sorted(int(T) for T in Ts)
    means, ses, rhs = [], [], []
    for T in Ts:
        sched = constant_strongly_convex(T, n, gamma)
        sources = [PermutationSource("rr", s, n) for s in seeds]
        traces = smg_run_many(problem, sched, beta, sources, w0, w_star=w_star,
                              log_gradients=False, keep_iterates=False)
        d = np.array([tr.dists[-1] for tr in traces])
        means.append(d.mean())
        ses.append(d.std(ddof=1) / math.sqrt(d.size) if d.size > 1 else 0.0)
        rhs.append(theorem2_rhs(dist0, sched, beta, 1.0, mu, L, s2, n))
    means = np.array(means)
    return SweepResult(np.array(Ts), means, np.array(ses), np.array(rhs), gamma,
                       rate_fit(Ts, means, corollary3_correction(n)))


def verify_run(problem, schedule: Schedule, beta: float, seeds: Sequence[int], w0,
               w_star=None, K: float | None = None) -> list[CheckResult]:
    """Instrumented RR run; every lemma row plus the applicable theorem row per epoch."""
    if w_star is None:
        w_star = solve_optimum(problem)
    w_star = np.asarray(w_star, dtype=np.float64)
    n = problem.n
    sources = [PermutationSource("rr", s, n) for s in seeds]
    traces = smg_run_many(problem, schedule, beta, sources, w0, w_star=w_star,
                          log_gradients=True, check_feasible=False)
    stats = trajectory_stats(problem, traces, w_star, beta)
    checks = lemma1_check(stats, schedule, K) + lemma_B_checks(stats)
    dist0 = float(stats.dist[0])
    mu = problem.strong_convexity_mu
    f_star = problem.full_value(w_star)
    for t in range(1, stats.T + 1):
        if mu > 0:
            rhs = theorem2_rhs(dist0, schedule, beta, schedule.alpha, mu, problem.smoothness_L,
                               stats.sigma_sq, n, t)
            lhs, se = stats.dist[t], stats.dist_se[t]
            name = "theorem2"
        else:
            rhs = theorem1_rhs(dist0, schedule, beta, schedule.alpha, problem.smoothness_L,
                               stats.sigma_sq, n, t)
            gaps = np.array([expected_output_gap_prefix(tr, f_star, t) for tr in traces])
            lhs = gaps.mean()
            se = gaps.std(ddof=1) / math.sqrt(gaps.size) if gaps.size > 1 else 0.0
            name = "theorem1"
        checks.append(CheckResult(name, t, float(lhs), float(rhs), float(3 * se),
                                  bool(lhs <= rhs + 3 * se)))
    return checks


def expected_output_gap_prefix(trace: RunTrace, f_star: float, T: int) -> float:
    etas = trace.etas[:T]
    return float(etas @ (trace.losses[:T] - f_star) / etas.sum())


# --------------------------------------------------------------------------
# reports


def emit_report(outdir, curves: Sequence[Curve] = (), fits: dict | None = None,
                checks: Sequence[CheckResult] = (), notes: Sequence[str] = ()) -> int:
    """Write one CSV per curve, checks.csv and summary.txt; return 0 iff every check passed."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    for c in curves:
        write_curve_csv(c, out / f"{c.name}.csv")
    lines = list(notes)
    if fits:
        for name, fit in fits.items():
            lines.append(f"fit {name}: slope={fit.slope:.6f} intercept={fit.intercept:.6f} "
                         f"rms_residual={fit.residual:.3e}")
    failed = [c for c in checks if not c.ok]
    if checks:
        write_checks_csv(checks, out / "checks.csv")
        lines.append(f"checks: {len(checks) - len(failed)}/{len(checks)} passed")
        for c in failed:
            lines.append(f"FAILED {c.name} epoch {c.t}: lhs={c.lhs:.6e} rhs={c.rhs:.6e} "
                         f"slack={c.slack:.6e}")
    (out / "summary.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return 1 if failed else 0
