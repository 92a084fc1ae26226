"""Per-class latency statistics, energy summary and storage figures for a run.

Point estimates pool every recorded job across replications.  Confidence
intervals come from the spread of replication means (Student t) when there
are at least two replications, otherwise from batch means over the single
replication's completion-ordered sample.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import energy
from .model import validate

__all__ = ["ClassMetrics", "RunResult", "summarize", "storage_and_bandwidth", "nearest_rank"]

N_BATCHES = 20


@dataclass(frozen=True)
class ClassMetrics:
    class_id: int
    mean_latency: float
    ci95_half_width: float
    std_error: float
    p50: float
    p95: float
    p99: float
    completed: int
    throughput: float

    @property
    def missing(self) -> bool:
        return self.completed == 0

    @property
    def ci_defined(self) -> bool:
        return math.isfinite(self.ci95_half_width)

    def ci(self, level: float = 0.95) -> tuple[float, float]:
        """Symmetric normal-theory interval at another level, from std_error."""
        z = stats.norm.ppf(0.5 + level / 2)
        return self.mean_latency - z * self.std_error, self.mean_latency + z * self.std_error


@dataclass
class RunResult:
    classes: dict
    t_a: float
    t_l: float
    energy_J: float
    efficiency: float
    efficiency_ci95: float
    storage_per_file: dict
    replications: int
    bound_report: object | None = None
    ledgers: list = field(default_factory=list, repr=False)

    def __getitem__(self, class_id: int) -> ClassMetrics:
        return self.classes[class_id]


def nearest_rank(sorted_x: np.ndarray, p: float) -> float:
    n = len(sorted_x)
    if n == 0:
        return math.nan
    rank = max(1, math.ceil(p / 100.0 * n))
    return float(sorted_x[rank - 1])


def _t_half_width(values) -> tuple[float, float]:
    m = len(values)
    if m < 2:
        return math.nan, math.nan
    se = float(np.std(values, ddof=1)) / math.sqrt(m)
    return float(stats.t.ppf(0.975, m - 1)) * se, se


def _batch_half_width(x: np.ndarray) -> tuple[float, float]:
    b = len(x) // N_BATCHES
    if b < 1:
        return math.nan, math.nan
    means = x[: b * N_BATCHES].reshape(N_BATCHES, b).mean(axis=1)
    return _t_half_width(means)


def summarize(traces, cfg, bound_report=None, ledgers=None) -> RunResult:
    """Fold one or more replication traces of one scenario into a RunResult.

    ``ledgers`` (one per trace) skips re-folding the phase logs, so traces
    shipped back from worker processes can leave their logs behind.
    """
    cfg = validate(cfg)
    if not isinstance(traces, (list, tuple)):
        traces = [traces]
    if not traces:
        raise ValueError("summarize needs at least one trace")
    reps = len(traces)
    total_window = math.fsum(t.window[1] - t.window[0] for t in traces)

    classes = {}
    for c in cfg.classes:
        per_rep = []
        for tr in traces:
            mask = tr.class_id == c.id
            per_rep.append(tr.latency[mask])
        pooled = np.concatenate(per_rep) if per_rep else np.zeros(0)
        count = len(pooled)
        if count == 0:
            classes[c.id] = ClassMetrics(c.id, math.nan, math.nan, math.nan, math.nan, math.nan, math.nan, 0, 0.0)
            continue
        mean = math.fsum(pooled.tolist()) / count
        if reps >= 2:
            rep_means = [x.mean() for x in per_rep if len(x)]
            half, se = _t_half_width(rep_means)
        else:
            half, se = _batch_half_width(pooled)
        srt = np.sort(pooled)
        classes[c.id] = ClassMetrics(
            class_id=c.id,
            mean_latency=mean,
            ci95_half_width=half,
            std_error=se,
            p50=nearest_rank(srt, 50),
            p95=nearest_rank(srt, 95),
            p99=nearest_rank(srt, 99),
            completed=count,
            throughput=count / total_window if total_window > 0 else math.nan,
        )

    if ledgers is None:
        ledgers = [energy.accumulate(tr.phase_logs, cfg.p_on, cfg.p_off, *tr.window) for tr in traces]
    effs = []
    for tr, led in zip(traces, ledgers):
        effs.append(energy.efficiency(led, tr.completed_per_class(), cfg) if led.horizon > 0 else math.nan)
    eff_half, _ = _t_half_width(effs)
    return RunResult(
        classes=classes,
        t_a=float(np.mean([led.t_a for led in ledgers])),
        t_l=float(np.mean([led.t_l for led in ledgers])),
        energy_J=float(np.mean([led.energy_J for led in ledgers])),
        efficiency=float(np.mean(effs)),
        efficiency_ci95=eff_half,
        storage_per_file={cid: v["storage_kb"] for cid, v in storage_and_bandwidth(cfg).items()},
        replications=reps,
        bound_report=bound_report,
        ledgers=ledgers,
    )


def storage_and_bandwidth(cfg) -> dict:
    """Per class: storage n*l/k (kb per file) and write bandwidth n/k relative to l."""
    cfg = validate(cfg)
    return {c.id: {"storage_kb": cfg.n * c.l / c.k, "write_bandwidth_ratio": cfg.n / c.k} for c in cfg.classes}
