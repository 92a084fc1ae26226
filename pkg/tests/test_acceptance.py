"""Acceptance criteria, one check per criterion.

Each check returns (passed, detail).  Under pytest the outcome lines are
collected and printed in the terminal summary; run this file directly to get
the same lines without pytest.
"""
import math
import os
import subprocess
import sys
import time

import numpy as np
import pytest
from scipy import stats

from ecdss import bounds, config, energy, metrics, simengine
from ecdss.model import ConfigError, DataClass, PowerModel, ServiceFamily, SimControls, SystemConfig, validate
from ecdss.runner import run_point, run_sweep

try:
    from conftest import ACCEPTANCE_LINES
except ImportError:  # running as a script
    ACCEPTANCE_LINES = []

WORKERS = os.cpu_count() or 1
NO_IDLE = PowerModel(d_l=0.0, w_l=0.0)


def _record(name, passed, detail):
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def _scenario_points(name, **overrides):
    sc = config.load(config.shipped()[name], overrides)
    return sc, sc.points()


def _ci(m):
    return m.mean_latency - m.ci95_half_width, m.mean_latency + m.ci95_half_width


# -- 1 ------------------------------------------------------------------------


def check_1():
    t0 = time.perf_counter()
    worst, cases = 0.0, 0
    for n in (1, 3, 10):
        for k in range(1, n + 1):
            for ratio in (0.1, 0.5, 0.9):
                cfg = validate(SystemConfig(n=n, mu=1.0, classes=(DataClass(1, k, 1.0, ratio * k),)))
                naive = bounds.naive_lower(cfg, 1)
                for fn in (bounds.lb_fcfs, bounds.lb_npq, bounds.lb_pq):
                    worst = max(worst, abs(fn(cfg, 1) - naive) / naive)
                cases += 1
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-12 and elapsed < 1.0
    return ok, f"analytic collapse over {cases} configs, max rel diff {worst:.2e} (<= 1e-12), {elapsed:.3f} s (< 1 s)"


# -- 2 ------------------------------------------------------------------------


def check_2():
    cfg = validate(SystemConfig(n=1, mu=1.0, classes=(DataClass(1, 1, 1.0, 0.5),), power=NO_IDLE, sim=SimControls(horizon_jobs=100_000, replications=10)))
    t0 = time.perf_counter()
    res = run_point(cfg, workers=WORKERS).result
    elapsed = time.perf_counter() - t0
    mean = res[1].mean_latency
    err = abs(mean - 2.0) / 2.0
    return err <= 0.02 and elapsed < 30, f"M/M/1 mean {mean:.4f} vs 2.0 (rel err {err:.2%} <= 2%), {elapsed:.1f} s (< 30 s)"


# -- 3 ------------------------------------------------------------------------


def check_3():
    # mu = 1/2 with k = 2 and l = 1 gives mu_i = 1
    cfg = validate(SystemConfig(n=3, mu=0.5, classes=(DataClass(1, 2, 1.0, 0.5),), power=NO_IDLE, sim=SimControls(horizon_jobs=100_000, replications=10, split_merge=True)))
    target = bounds.ub_fcfs(cfg, 1)
    t0 = time.perf_counter()
    res = run_point(cfg, workers=WORKERS).result
    elapsed = time.perf_counter() - t0
    mean = res[1].mean_latency
    err = abs(mean - 1.285714) / 1.285714
    ok = err <= 0.02 and elapsed < 60 and abs(target - 1.285714) < 1e-6
    return ok, f"split-merge mean {mean:.4f} vs {target:.6f} (rel err {err:.2%} <= 2%), {elapsed:.1f} s (< 60 s)"


# -- 4 ------------------------------------------------------------------------

SANDWICH_K2 = (1, 3, 5, 8, 10)


def check_4():
    t0 = time.perf_counter()
    failures, checked, skipped = [], 0, []
    sim = SimControls(horizon_jobs=10_000, replications=20, seed=4)
    for policy in ("fcfs", "npq", "pq"):
        pts = []
        for k2 in SANDWICH_K2:
            classes = (DataClass(1, 5, 1.0, 0.15), DataClass(2, k2, 1.0, 0.5))
            pts.append((k2, validate(SystemConfig(n=10, mu=1 / 6, classes=classes, policy=policy, power=PowerModel(w_l=0.0), sim=sim))))
        for pr in run_sweep(pts, workers=WORKERS):
            for c in pr.cfg.classes:
                cb = pr.result.bound_report.for_class(c.id)
                if not (cb.lower_valid and cb.upper_valid):
                    skipped.append(f"{policy}/k2={pr.sweep_value}/c{c.id}")
                    continue
                m = pr.result[c.id]
                sigma = m.std_error
                half99 = stats.t.ppf(0.995, pr.result.replications - 1) * sigma
                lo, hi = m.mean_latency - half99, m.mean_latency + half99
                checked += 1
                if not (lo >= cb.lower - 3 * sigma and hi <= cb.upper + 3 * sigma):
                    failures.append(f"{policy}/k2={pr.sweep_value}/c{c.id}: CI99 [{lo:.4f}, {hi:.4f}] vs [{cb.lower:.4f}, {cb.upper:.4f}] +- 3 sigma")
    elapsed = time.perf_counter() - t0
    ok = not failures and checked > 0 and elapsed < 600
    detail = f"{checked} (policy, k2, class) cells inside [lb - 3 sigma, ub + 3 sigma], {len(skipped)} skipped as bound-invalid, {elapsed:.0f} s (< 600 s)"
    if failures:
        detail += "; outside: " + "; ".join(failures)
    return ok, detail


# -- 5 ------------------------------------------------------------------------


def check_5():
    power = PowerModel(d_l=0.0, w_l=0.0, c_l=0.0, p_l=0.0)
    cfg = validate(SystemConfig(n=1, mu=1.0, classes=(DataClass(1, 1, 1.0, 0.5),), power=power, sim=SimControls(horizon_jobs=1_000_000)))
    tr = simengine.run(cfg)
    led = energy.accumulate(tr.phase_logs, cfg.p_on, cfg.p_off, *tr.window)
    eff = energy.efficiency(led, tr.completed_per_class(), cfg)
    target = bounds.mm1_energy_efficiency(1.0, cfg.p_on, 1 / cfg.rates[0])
    err = abs(eff - target) / target

    hand = validate(SystemConfig(n=1, mu=1.0, classes=(DataClass(1, 1, 1.0, 0.5),), service=ServiceFamily("deterministic"), power=PowerModel(d_l=0.5, w_l=0.0)))
    htr = simengine.run(hand, arrivals=[(0.0, 1)], horizon=2.0)
    hled = energy.accumulate(htr.phase_logs, hand.p_on, hand.p_off, *htr.window)
    heff = energy.efficiency(hled, htr.completed_per_class(), hand)
    exact = hled.t_a == 1.5 and hled.t_l == 0.5 and math.isclose(hled.energy_J, 498.745, abs_tol=1e-9) and math.isclose(heff, 1000 / 498.745, rel_tol=1e-12)
    ok = err <= 0.02 and exact
    return ok, f"efficiency {eff:.4f} vs l/(P_on T_s) = {target:.4f} (rel err {err:.2%} <= 2%); hand ledger {hled.energy_J:.3f} J, {heff:.4f} bits/J (exact: {exact})"


# -- 6 ------------------------------------------------------------------------


def check_6a():
    t0 = time.perf_counter()
    sc, pts = _scenario_points("fig8_mu1", **{"sim.jobs": 40_000, "sim.replications": 10})
    pts = [(v, c) for v, c in pts if v in (1, 5, 10)]
    res = run_sweep(pts, workers=WORKERS)
    ms = [pr.result[2] for pr in res]
    cis = [_ci(m) for m in ms]
    ok = all(cis[j][1] < cis[j + 1][0] for j in range(2))
    elapsed = time.perf_counter() - t0
    shown = ", ".join(f"k2={pr.sweep_value}: {m.mean_latency:.4f} +- {m.ci95_half_width:.4f}" for pr, m in zip(res, ms))
    return ok and elapsed < 900, f"class-2 latency (mu = 1) {shown}; strictly increasing beyond CI overlap: {ok}; {elapsed:.0f} s"


def check_6b():
    t0 = time.perf_counter()
    sc, pts = _scenario_points("fig12", **{"sim.jobs": 40_000, "sim.replications": 10})
    pts = [(v, c) for v, c in pts if v in (4, 10)]
    lo_r, hi_r = run_sweep(pts, workers=WORKERS)
    m4, m10 = lo_r.result[1], hi_r.result[1]
    lat_ok = _ci(m10)[1] < _ci(m4)[0]
    e4, e10 = lo_r.result.efficiency, hi_r.result.efficiency
    eff_ok = e10 > e4
    elapsed = time.perf_counter() - t0
    detail = (
        f"class-1 latency r1=4 {m4.mean_latency:.4f} +- {m4.ci95_half_width:.4f}, r1=10 {m10.mean_latency:.4f} +- {m10.ci95_half_width:.4f} "
        f"(lower beyond CI: {lat_ok}); efficiency r1=4 {e4:.5f} +- {lo_r.result.efficiency_ci95:.5f}, "
        f"r1=10 {e10:.5f} +- {hi_r.result.efficiency_ci95:.5f} (higher: {eff_ok}); {elapsed:.0f} s"
    )
    return lat_ok and eff_ok and elapsed < 900, detail


def check_6c():
    t0 = time.perf_counter()
    sc, pts = _scenario_points("fig11b", **{"sim.jobs": 20_000, "sim.replications": 10})
    res = run_sweep(pts, workers=WORKERS)
    lat = {pr.sweep_value: pr.result[2].mean_latency for pr in res}
    ends = max(lat[1], lat[10])
    interior = [k for k in range(2, 10) if lat[k] < min(lat[1], lat[10])]
    elapsed = time.perf_counter() - t0
    best = min(range(2, 10), key=lat.get)
    ok = bool(interior) and elapsed < 900
    return ok, f"Pareto(1.1) class-2 latency k2=1 {lat[1]:.3f}, k2=10 {lat[10]:.3f} (max {ends:.3f}), best interior k2={best} {lat[best]:.3f}; interior k2 below both ends: {interior}; {elapsed:.0f} s"


def check_6d():
    t0 = time.perf_counter()
    sc, pts = _scenario_points("fig10", **{"sim.jobs": 10_000, "sim.replications": 5})
    pts = [(v, c) for v, c in pts if 2 <= v <= 30]
    res = run_sweep(pts, workers=WORKERS)
    eff = {pr.sweep_value: pr.result.efficiency for pr in res}
    ns = sorted(eff)
    best = max(ns, key=eff.get)
    ok = ns[0] < best < ns[-1]
    elapsed = time.perf_counter() - t0
    shown = ", ".join(f"n={n}: {eff[n]:.4f}" for n in ns)
    return ok and elapsed < 900, f"efficiency vs n: {shown}; argmax n={best} (interior: {ok}); {elapsed:.0f} s"


# -- 7 ------------------------------------------------------------------------


def check_7(tmp):
    cmd = [sys.executable, "-m", "ecdss.cli", "run", "--config", "default", "--jobs", "3000", "--replications", "2", "--seed", "7"]
    outs = []
    for j in range(2):
        out = os.path.join(tmp, f"run{j}")
        subprocess.run(cmd + ["--out", out], check=True, capture_output=True)
        with open(os.path.join(out, "default.csv"), "rb") as fh:
            outs.append(fh.read())
    same = outs[0] == outs[1] and len(outs[0]) > 0
    return same, f"two cmd_run invocations, seed 7: byte-identical CSV ({len(outs[0])} bytes): {same}"


# -- 8 ------------------------------------------------------------------------


def check_8():
    # lambda * l = n f mu exactly: the strict condition fails
    classes = (DataClass(1, 1, 1.0, 1.0),)
    base = SystemConfig(n=1, mu=1.0, classes=classes, power=NO_IDLE, sim=SimControls(horizon_jobs=200_000, max_queued=1_000))
    try:
        validate(base)
        rejected = False
    except ConfigError as exc:
        rejected = exc.unstable
    cfg = validate(SystemConfig(n=1, mu=1.0, classes=(DataClass(1, 1, 1.0, 1.5),), power=NO_IDLE, sim=SimControls(horizon_jobs=200_000, max_queued=1_000, allow_unstable=True)))
    try:
        simengine.run(cfg)
        diverged = False
    except simengine.Divergence:
        diverged = True
    # the default guard (10^6 queued sub-tasks) also trips on a grossly overloaded run
    big = validate(SystemConfig(n=1, mu=1.0, classes=(DataClass(1, 1, 1.0, 50.0),), power=NO_IDLE, sim=SimControls(horizon_jobs=100_000, allow_unstable=True)))
    pr = run_point(big)
    default_guard = pr.divergence is not None
    ok = rejected and diverged and default_guard
    return ok, f"rejected without allow_unstable: {rejected}; divergence guard with it: {diverged} (small guard), {default_guard} (default guard)"


# -- pytest entry points ------------------------------------------------------


def test_criterion_1():
    assert _record("1", *check_1())


def test_criterion_2():
    assert _record("2", *check_2())


def test_criterion_3():
    assert _record("3", *check_3())


def test_criterion_4():
    assert _record("4", *check_4())


def test_criterion_5():
    assert _record("5", *check_5())


def test_criterion_6a():
    assert _record("6a", *check_6a())


def test_criterion_6b():
    assert _record("6b", *check_6b())


def test_criterion_6c():
    assert _record("6c", *check_6c())


def test_criterion_6d():
    assert _record("6d", *check_6d())


def test_criterion_7(tmp_path):
    assert _record("7", *check_7(str(tmp_path)))


def test_criterion_8():
    assert _record("8", *check_8())


if __name__ == "__main__":
    import tempfile

    checks = [("1", check_1), ("2", check_2), ("3", check_3), ("4", check_4), ("5", check_5), ("6a", check_6a), ("6b", check_6b), ("6c", check_6c), ("6d", check_6d), ("8", check_8)]
    results = [_record(name, *fn()) for name, fn in checks]
    with tempfile.TemporaryDirectory() as tmp:
        results.append(_record("7", *check_7(tmp)))
    sys.exit(0 if all(results) else 1)
