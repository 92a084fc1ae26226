"""Replications and sweeps, optionally spread over worker processes.

Each (sweep point, replication) pair is an independent task.  Every sweep
point reuses the same seed, so replication j of every point draws from the
same streams (common random numbers across the sweep).  Results are put back
in sweep order whatever order the workers finish in.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

from . import energy, metrics, simengine
from .bounds import bound_report
from .model import validate

__all__ = ["PointResult", "replicate", "run_point", "run_sweep"]


@dataclass
class PointResult:
    sweep_value: object
    cfg: object
    result: metrics.RunResult | None
    divergence: str | None = None

    @property
    def ok(self) -> bool:
        return self.divergence is None


def replicate(cfg, rep: int, split_merge: bool | None = None):
    """Run one replication; return (trace without phase logs, energy ledger) or the divergence."""
    try:
        tr = simengine.run(cfg, rep, split_merge=split_merge)
    except simengine.Divergence as exc:
        return None, None, str(exc)
    led = energy.accumulate(tr.phase_logs, cfg.p_on, cfg.p_off, *tr.window)
    return replace(tr, phase_logs=None), led, None


def _task(args):
    return replicate(*args)


def _gather(points, split_merge, workers):
    tasks = [(cfg, rep, split_merge) for _, cfg in points for rep in range(cfg.sim.replications)]
    if workers is None:
        workers = os.cpu_count() or 1
    if workers <= 1 or len(tasks) <= 1:
        return [_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_task, tasks, chunksize=1))


def run_sweep(points, split_merge: bool | None = None, workers: int | None = 1, pq_variant: str = "second-moment") -> list[PointResult]:
    """Simulate every (sweep value, config) point; a divergence marks only its own point."""
    points = [(v, validate(cfg)) for v, cfg in points]
    flat = iter(_gather(points, split_merge, workers))
    out = []
    for value, cfg in points:
        reps = [next(flat) for _ in range(cfg.sim.replications)]
        errors = [e for _, _, e in reps if e]
        report = bound_report(cfg, pq_variant=pq_variant)
        if errors:
            out.append(PointResult(value, cfg, None, errors[0]))
            continue
        traces = [t for t, _, _ in reps]
        result = metrics.summarize(traces, cfg, bound_report=report, ledgers=[led for _, led, _ in reps])
        out.append(PointResult(value, cfg, result))
    return out


def run_point(cfg, split_merge: bool | None = None, workers: int | None = 1) -> PointResult:
    return run_sweep([(None, cfg)], split_merge, workers)[0]
