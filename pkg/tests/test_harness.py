import csv
import json
import math
import shutil
from pathlib import Path

import numpy as np
import pytest

from smg.data import synth_quadratic_dataset
from smg.harness import (Curve, ExperimentConfig, build_problem, cached_optimum,
                         convex_rate_sweep, corollary3_correction, curve_from_traces, emit_report,
                         largest_common_gamma, make_schedule, parse_data_arg, rate_fit,
                         run_grid, run_optimizer, strongly_convex_rate_sweep, verify_run,
                         write_grid_csv)
from smg.schedules import InfeasibleScheduleError, constant, feasible
from smg.theory import CheckResult

FIXTURES = Path(__file__).parent / "fixtures"


def test_rate_fit_power_laws():
    x = np.array([16.0, 32, 64, 128, 256])
    fit = rate_fit(x, 3 / x ** (2 / 3))
    assert fit.slope == pytest.approx(-2 / 3, abs=1e-12)
    assert fit.intercept == pytest.approx(math.log(3), abs=1e-12)
    n = 250
    y = 0.7 * np.log(np.sqrt(n) * x) ** 2 / x ** 2
    fit = rate_fit(x, y, corollary3_correction(n))
    assert fit.slope == pytest.approx(-2.0, abs=1e-12)
    assert fit.residual < 1e-12


@pytest.mark.parametrize("x, y", [
    ([1, 2, 3], [1, 1, 1]),
    ([1, 2, 3, 4], [1, 0, 1, 1]),
    ([1, 3, 2, 4], [1, 1, 1, 1]),
    ([1, 2, 3, 4], [1, 1, np.inf, 1]),
])
def test_rate_fit_rejects(x, y):
    with pytest.raises(ValueError):
        rate_fit(x, y)


def test_parse_data_arg():
    assert parse_data_arg("synth:quadratic:n=10,dim=3,seed=2") == {
        "kind": "synth_quadratic", "n": 10, "dim": 3, "seed": 2}
    assert parse_data_arg("data/w8a")["kind"] == "libsvm"
    with pytest.raises(ValueError):
        parse_data_arg("synth:cubic:n=1")
    with pytest.raises(ValueError):
        parse_data_arg("synth:quadratic:n")


def test_build_problem_kinds(tmp_path):
    q = build_problem({"kind": "synth_quadratic", "n": 10, "dim": 3, "seed": 1})
    assert q.problem.n == 10 and q.split == "none"
    lg = build_problem({"kind": "synth_logistic", "n": 50, "dim": 4, "holdout": 0.2})
    assert lg.problem.n == 40 and lg.split == "80/20 seed=0" and lg.test[0].shape == (10, 4)
    shutil.copy(FIXTURES / "tiny.libsvm", tmp_path / "a.train")
    (tmp_path / "a.test").write_text("1 9:1\n-1 2:1\n")
    b = build_problem({"kind": "libsvm", "path": "a.train", "test_path": "a.test"}, tmp_path)
    assert b.split == "test-file" and b.problem.dim == 9 and b.test[0].shape == (2, 9)
    b = build_problem({"kind": "libsvm", "path": "a.train", "test_path": "missing"}, tmp_path)
    assert b.split == "80/20 seed=0" and b.problem.n == 3
    with pytest.raises(ValueError):
        build_problem({"kind": "mystery"})


def test_cached_optimum(tmp_path):
    p = build_problem({"kind": "synth_logistic", "n": 60, "dim": 3, "l2": 0.05}).problem
    cache = tmp_path / "w.npy"
    w = cached_optimum(p, cache)
    assert cache.exists() and np.linalg.norm(p.full_gradient(w)) <= 1e-10
    np.testing.assert_array_equal(cached_optimum(p, cache), w)
    np.save(cache, np.zeros(3))
    np.testing.assert_allclose(cached_optimum(p, cache), w, atol=1e-9)


def test_make_schedule():
    assert make_schedule({"kind": "constant", "eta": 0.2}, 5, 10).etas.tolist() == [0.2] * 5
    assert make_schedule({"kind": "exponential", "eta0": 1.0, "rho": 0.25}, 2, 3).T == 2
    assert make_schedule({"kind": "constant_convex", "gamma": 1.0}, 8, 8).eta(1) == pytest.approx(1)
    with pytest.raises(ValueError):
        make_schedule({"kind": "cosine"}, 5, 5)


def test_run_optimizer_feasibility_modes(quad):
    big = constant(3, 10.0)
    res = run_optimizer(quad, "smg", [0, 1], 3, schedule=big, beta=0.5)
    assert res.requested_scale == 10.0 and res.effective_scale < 10.0
    eff = res.traces[0].etas
    assert feasible(constant(3, eff[0]), quad.smoothness_L, 0.5, quad.strong_convexity_mu).ok
    assert not feasible(constant(3, eff[0] * (1 + 1e-9)), quad.smoothness_L, 0.5,
                        quad.strong_convexity_mu).ok
    with pytest.raises(InfeasibleScheduleError):
        run_optimizer(quad, "smg", [0], 3, schedule=big, feasibility="strict")
    ok = run_optimizer(quad, "ssgd", [0], 3, lr=0.001)
    assert ok.traces[0].etas.tolist() == [0.001 * quad.n] * 3
    with pytest.raises(ValueError):
        run_optimizer(quad, "lbfgs", [0], 3, lr=0.1)
    with pytest.raises(ValueError):
        run_optimizer(quad, "adam", [0], 3)


@pytest.mark.parametrize("name", ["smg", "ssgd", "sgdm", "adam", "sgd"])
def test_run_optimizer_all(quad, name):
    res = run_optimizer(quad, name, [0, 1, 2], 4, lr=0.001)
    assert len(res.traces) == 3 and all(tr.T == 4 for tr in res.traces)
    assert res.traces[0].records[-1].loss < res.traces[0].initial_loss


def test_curve_from_traces(quad):
    res = run_optimizer(quad, "smg", [2, 0, 1], 3, lr=0.001)
    c = curve_from_traces("x", res.traces)
    L = np.array([tr.losses for tr in sorted(res.traces, key=lambda t: t.seed)])
    np.testing.assert_allclose(c.mean_loss, L.mean(0), rtol=1e-15)
    np.testing.assert_allclose(c.stderr, L.std(0, ddof=1) / math.sqrt(3), rtol=1e-12)
    assert c.epochs.tolist() == [0, 1, 2, 3]


def grid_config(**kw):
    d = {
        "problem": {"kind": "synth_logistic", "n": 80, "dim": 5, "seed": 2, "holdout": 0.25},
        "optimizers": [
            {"name": "smg", "beta": 0.5, "lrs": [0.1, 0.01]},
            {"name": "ssgd", "lrs": [0.1]},
            {"name": "adam", "lrs": [0.01, 0.001]},
        ],
        "seeds": [0, 1, 2], "epochs": 4, "feasibility": "off",
    }
    d.update(kw)
    return ExperimentConfig.from_dict(d)


def test_grid_search(tmp_path):
    res = run_grid(grid_config())
    assert len(res.cells) == 5 and res.split == "75/25 seed=0"
    for name in ("smg", "ssgd", "adam"):
        best = res.best(name)
        same = [c for c in res.cells if c.optimizer == name]
        assert best.final_loss == min(c.final_loss for c in same)
        assert 0.0 <= best.accuracy <= 1.0
        assert res.curves[name].accuracy.shape == (4,)
    write_grid_csv(res, tmp_path / "a.csv")
    par = run_grid(grid_config(workers=3))
    write_grid_csv(par, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


@pytest.mark.filterwarnings("ignore:overflow")
def test_grid_of_one_and_divergence():
    cfg = grid_config(optimizers=[{"name": "sgd", "lr": 0.05},
                                  {"name": "ssgd", "lrs": [1e300]}])
    res = run_grid(cfg)
    assert len(res.cells) == 2
    assert res.best("sgd") is res.cells[0]
    assert res.cells[1].error and res.best("ssgd") is None


def test_config_validation(tmp_path):
    with pytest.raises(ValueError, match="distinct"):
        grid_config(seeds=[1, 1])
    with pytest.raises(ValueError, match="nonempty"):
        grid_config(seeds=[])
    with pytest.raises(ValueError, match="unknown config keys"):
        ExperimentConfig.from_dict({"problem": {}, "optimizers": [], "seeds": [0], "epochs": 1,
                                    "colour": "red"})
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"problem": {"kind": "libsvm", "path": "x"}, "optimizers": [],
                                "seeds": [0], "epochs": 2}))
    cfg = ExperimentConfig.load(path)
    assert cfg.base_dir == str(tmp_path)


def test_emit_report(tmp_path):
    assert emit_report(tmp_path / "empty") == 0
    good = CheckResult("B0", 1, 1.0, 2.0, 0.1, True)
    bad = CheckResult("sumB", 1, 3.0, 2.0, 0.1, False)
    curve = Curve("c", np.arange(3), np.array([1.0, 0.5, 0.25]), np.zeros(3),
                  np.array([0.5, 0.75]))
    code = emit_report(tmp_path / "r", [curve], {"c": rate_fit([1, 2, 3, 4], [1, 2, 3, 4])},
                       [good, bad])
    assert code == 1
    rows = list(csv.reader(open(tmp_path / "r" / "checks.csv")))
    assert rows[0] == ["inequality", "epoch", "lhs", "rhs", "slack", "ok"]
    assert rows[2][-1] == "false"
    rows = list(csv.reader(open(tmp_path / "r" / "c.csv")))
    assert rows[0] == ["epoch", "mean_loss", "stderr", "accuracy"]
    assert rows[1][3] == "" and rows[2][3] == "0.5"
    summary = (tmp_path / "r" / "summary.txt").read_text()
    assert "FAILED sumB epoch 1" in summary and "fit c: slope=1.0" in summary


def test_convex_sweep_small():
    p = build_problem({"kind": "synth_logistic", "n": 40, "dim": 3, "seed": 1, "rank": 2}).problem
    from smg.theory import solve_optimum
    w_star = solve_optimum(p)
    res = convex_rate_sweep(p, [4, 8, 16, 32], range(4), 0.5, np.zeros(3), w_star)
    assert res.first_cell.name == "smg_T4"
    assert np.all(res.mean <= res.rhs + 3 * res.stderr)
    assert res.fit.slope < 0


def test_strongly_convex_sweep_small():
    p = synth_quadratic_dataset(20, 3, seed=0, condition=2.0)
    g = largest_common_gamma([p], 8, 0.5)
    res = strongly_convex_rate_sweep(p, [8, 16, 32, 64], range(5), 0.5,
                                     p.known_minimizer + 1.0, g)
    assert np.all(res.mean <= res.rhs + 3 * res.stderr)
    assert res.fit.correction is not None and res.fit.slope < 0


def test_verify_run_rows(quad):
    sched = constant(4, 0.5 / (2 * quad.smoothness_L * math.sqrt(1.5)))
    checks = verify_run(quad, sched, 0.5, range(20), quad.known_minimizer + 1.0)
    names = [c.name for c in checks]
    assert names.count("lemma1") == 4 and names.count("theorem2") == 4
    assert names.count("breg_shift") == 3
    assert all(c.ok for c in checks)
