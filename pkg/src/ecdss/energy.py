"""Power-state accounting and the bits-per-joule efficiency metric.

Busy, linger and wake time are all drawn at P_on; low-power time at P_off.
Raw ``idle`` intervals (from a plain busy/idle timeline) are split here: the
first d_l seconds count as linger, the rest as low-power.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .simengine import PHASE_NAMES, PhaseLog

__all__ = ["InconsistentLog", "EnergyLedger", "accumulate", "efficiency"]

_CODES = {name: i for i, name in enumerate(PHASE_NAMES)}
_IDLE = len(PHASE_NAMES)
_CODES["idle"] = _IDLE
_TOL = 1e-9


class InconsistentLog(ValueError):
    pass


@dataclass
class EnergyLedger:
    t_busy: np.ndarray
    t_linger: np.ndarray
    t_wake: np.ndarray
    t_low: np.ndarray
    horizon: float
    p_on: float
    p_off: float

    @property
    def n(self) -> int:
        return len(self.t_busy)

    @property
    def t_a(self) -> float:
        return float(np.sum(self.t_busy) + np.sum(self.t_linger) + np.sum(self.t_wake))

    @property
    def t_l(self) -> float:
        return float(np.sum(self.t_low))

    @property
    def energy_J(self) -> float:
        return self.p_on * self.t_a + self.p_off * self.t_l


def _arrays(log):
    if isinstance(log, PhaseLog):
        codes, starts, ends = log.as_arrays()
        return codes.astype(np.int64), starts, ends
    recs = list(log)
    if not recs:
        return np.zeros(0, np.int64), np.zeros(0), np.zeros(0)
    try:
        codes = np.array([p if isinstance(p, (int, np.integer)) else _CODES[p] for p, _, _ in recs], dtype=np.int64)
    except KeyError as exc:
        raise InconsistentLog(f"unknown phase {exc.args[0]!r}") from None
    return codes, np.array([r[1] for r in recs], float), np.array([r[2] for r in recs], float)


def accumulate(logs, p_on: float, p_off: float, start: float = 0.0, end: float | None = None, d_l: float | None = None) -> EnergyLedger:
    """Fold per-server phase logs into an energy ledger over [start, end].

    Each log must tile time contiguously with no overlap and cover the window;
    ``end`` defaults to the latest interval end across servers.
    """
    per = [_arrays(log) for log in logs]
    if end is None:
        end = max((e[-1] for _, _, e in per if len(e)), default=start)
    horizon = end - start
    if horizon < 0:
        raise InconsistentLog(f"window end {end} precedes start {start}")
    scale = max(1.0, abs(end))
    out = np.zeros((len(per), 4))
    for s, (codes, starts, ends) in enumerate(per):
        if np.any(ends < starts):
            raise InconsistentLog(f"server {s}: interval ends before it starts")
        if len(starts) > 1:
            gap = starts[1:] - ends[:-1]
            if np.any(gap < -_TOL * scale):
                raise InconsistentLog(f"server {s}: overlapping phase intervals")
            if np.any(gap > _TOL * scale):
                raise InconsistentLog(f"server {s}: gap in phase intervals")
        if horizon > 0 and (not len(starts) or starts[0] > start + _TOL * scale or ends[-1] < end - _TOL * scale):
            raise InconsistentLog(f"server {s}: phase log does not cover [{start}, {end}]")
        if np.any(codes == _IDLE):
            if d_l is None:
                raise InconsistentLog("raw idle intervals need d_l")
            codes, starts, ends = _split_idle(codes, starts, ends, d_l)
        dur = np.clip(ends, start, end) - np.clip(starts, start, end)
        out[s] = np.bincount(codes, weights=dur, minlength=4)[:4]
    return EnergyLedger(out[:, 0], out[:, 1], out[:, 3], out[:, 2], horizon, p_on, p_off)


def _split_idle(codes, starts, ends, d_l):
    c, a, b = [], [], []
    for code, s, e in zip(codes.tolist(), starts.tolist(), ends.tolist()):
        if code != _IDLE:
            c.append(code), a.append(s), b.append(e)
            continue
        cut = min(e, s + d_l)
        c.append(_CODES["linger"]), a.append(s), b.append(cut)
        if e > cut:
            c.append(_CODES["low"]), a.append(cut), b.append(e)
    return np.array(c, np.int64), np.array(a), np.array(b)


def efficiency(ledger: EnergyLedger, completed: dict, cfg) -> float:
    """Data processed per joule: sum of l_i * N_i (kb -> bits) over energy spent."""
    if not ledger.horizon > 0:
        raise ValueError("efficiency needs a positive horizon")
    sizes = {c.id: c.l for c in cfg.classes}
    bits = math.fsum(sizes[cid] * cnt for cid, cnt in completed.items()) * 1000.0
    if bits == 0:
        return 0.0
    return bits / ledger.energy_J
