"""Stability conditions and per-class latency bounds.

Upper bounds come from the split-merge degradation (every server blocks until
the job's k-th sub-task finishes), which makes each policy an M/G/1 queue whose
class-i service time is the k_i-th order statistic of n exponentials.  Lower
bounds come from the sequential-stage enhancement: stage s of a class-i job is
served at the best feasible rate (n - s + 1) * mu_i, and each stage is an M/G/1
queue shared with every class that still has unfinished stages.

All bounds assume exponential service, full fork (r_i = n) and no wake-up
latency.  Per-class functions take a :class:`~ecdss.model.ValidatedConfig` and
return ``{class_id: value}``; pass ``class_id`` to get one value.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .distributions import harmonic
from .model import Policy

__all__ = [
    "BoundInvalid",
    "Unstable",
    "stability_fcfs",
    "stability_priority",
    "is_stable",
    "mm1_latency",
    "mm1_energy_efficiency",
    "fcfs_mg1_latency",
    "StageContext",
    "stage_context",
    "ub_fcfs",
    "ub_npq",
    "ub_pq",
    "naive_lower",
    "lb_fcfs",
    "lb_npq",
    "lb_pq",
    "lower_bound",
    "upper_bound",
    "ClassBounds",
    "BoundReport",
    "bound_report",
]


class BoundInvalid(ValueError):
    """The bound's own validity condition fails (the system may still be stable)."""


class Unstable(ValueError):
    """The queue (or an M/M/1 stage) has load >= 1."""


def stability_fcfs(cfg) -> bool:
    lam = [c.lam for c in cfg.classes]
    lhs = sum(c.k * c.lam for c in cfg.classes) * sum(c.lam * c.l / c.k for c in cfg.classes)
    return lhs < cfg.n * cfg.f * cfg.mu * sum(lam)


def stability_priority(cfg) -> bool:
    return sum(c.lam * c.l for c in cfg.classes) < cfg.n * cfg.f * cfg.mu


def is_stable(cfg) -> bool:
    if Policy.parse(cfg.policy) is Policy.FCFS:
        return stability_fcfs(cfg)
    return stability_priority(cfg)


def mm1_latency(lam: float, mu_eff: float) -> float:
    if mu_eff <= lam:
        raise Unstable(f"M/M/1 needs mu > lambda, got mu={mu_eff}, lambda={lam}")
    return 1.0 / (mu_eff - lam)


def mm1_energy_efficiency(l: float, p_on: float, mean_service: float) -> float:
    """Bits per joule for one always-on-while-busy server: l / (P_on * T_s), l in kb."""
    return l * 1000.0 / (p_on * mean_service)


def fcfs_mg1_latency(lams, means, variances) -> list[float]:
    """Per-class mean latency of a multi-class M/G/1 FCFS queue (P-K formula)."""
    load = math.fsum(lam * m for lam, m in zip(lams, means))
    if load >= 1:
        raise Unstable(f"M/G/1 utilization {load:.6g} >= 1")
    second = math.fsum(lam * (v + m * m) for lam, m, v in zip(lams, means, variances))
    wait = second / (2.0 * (1.0 - load))
    return [m + wait for m in means]


# -- split-merge upper bounds -------------------------------------------------


def _h(cfg, i: int) -> tuple[float, float]:
    k = cfg.classes[i].k
    return harmonic(cfg.n - k, cfg.n, 1), harmonic(cfg.n - k, cfg.n, 2)


def _rank(cfg, i: int) -> int:
    return cfg.classes[i].priority_rank


def _cumulative_load(cfg, i: int) -> tuple[float, float]:
    """(S_{i-1}, S_i): sum of rho_r * H1_r over classes ranked above i, then including i."""
    above = 0.0
    for r in range(cfg.R):
        if _rank(cfg, r) < _rank(cfg, i):
            above += cfg.classes[r].lam / cfg.rates[r] * _h(cfg, r)[0]
    return above, above + cfg.classes[i].lam / cfg.rates[i] * _h(cfg, i)[0]


def _second_moment_load(cfg, members) -> float:
    total = 0.0
    for r in members:
        h1, h2 = _h(cfg, r)
        total += cfg.classes[r].lam * (h2 + h1 * h1) / cfg.rates[r] ** 2
    return total


def _per_class(cfg, one, class_id):
    if class_id is not None:
        return one(cfg.index_of(class_id))
    return {c.id: one(i) for i, c in enumerate(cfg.classes)}


def ub_fcfs(cfg, class_id: int | None = None):
    def one(i):
        s_total = sum(cfg.classes[r].lam / cfg.rates[r] * _h(cfg, r)[0] for r in range(cfg.R))
        if s_total >= 1:
            raise BoundInvalid(f"FCFS upper bound needs S_R < 1, got {s_total:.6g}")
        return _h(cfg, i)[0] / cfg.rates[i] + _second_moment_load(cfg, range(cfg.R)) / (2 * (1 - s_total))

    return _per_class(cfg, one, class_id)


def ub_npq(cfg, class_id: int | None = None):
    def one(i):
        s_prev, s_i = _cumulative_load(cfg, i)
        if s_i >= 1:
            raise BoundInvalid(f"N-PQ upper bound for class {cfg.classes[i].id} needs S_i < 1, got {s_i:.6g}")
        wait = _second_moment_load(cfg, range(cfg.R)) / (2 * (1 - s_prev) * (1 - s_i))
        return _h(cfg, i)[0] / cfg.rates[i] + wait

    return _per_class(cfg, one, class_id)


def ub_pq(cfg, class_id: int | None = None):
    def one(i):
        s_prev, s_i = _cumulative_load(cfg, i)
        if s_i >= 1:
            raise BoundInvalid(f"PQ upper bound for class {cfg.classes[i].id} needs S_i < 1, got {s_i:.6g}")
        members = [r for r in range(cfg.R) if _rank(cfg, r) <= _rank(cfg, i)]
        wait = _second_moment_load(cfg, members) / (2 * (1 - s_prev) * (1 - s_i))
        return _h(cfg, i)[0] / (cfg.rates[i] * (1 - s_prev)) + wait

    return _per_class(cfg, one, class_id)


# -- sequential-stage lower bounds --------------------------------------------


@dataclass(frozen=True)
class StageContext:
    s: int
    c_s: int  # classes whose k is below s (already finished)
    higher_unfinished: frozenset  # class ids: higher priority than i, still unfinished
    t: dict  # class id -> lambda_r / ((n - s + 1) mu_r), unfinished classes only
    z: float  # 1 - sum of t over higher_unfinished
    active: tuple  # class indices still unfinished at stage s, in k-sorted order


def stage_context(cfg, i: int, s: int) -> StageContext:
    """Stage-s quantities for class index ``i`` (1 <= s <= k_i)."""
    m = cfg.n - s + 1
    c_s = sum(1 for c in cfg.classes if c.k < s)
    active = cfg.k_order[c_s:]
    t = {cfg.classes[r].id: cfg.classes[r].lam / (m * cfg.rates[r]) for r in active}
    higher = frozenset(cfg.classes[r].id for r in active if _rank(cfg, r) < _rank(cfg, i))
    z = 1.0 - math.fsum(t[r] for r in higher)
    return StageContext(s, c_s, higher, t, z, tuple(active))


def _stage_sum(cfg, i: int, term) -> float:
    return math.fsum(term(stage_context(cfg, i, s), cfg.n - s + 1) for s in range(1, cfg.classes[i].k + 1))


def _sq_over_lam(cfg, ctx, ids) -> float:
    # t_r^2 / lambda_r == lambda_r / ((n-s+1) mu_r)^2
    return math.fsum(ctx.t[cid] ** 2 / cfg.classes[cfg.index_of(cid)].lam for cid in ids)


def naive_lower(cfg, class_id: int | None = None):
    def one(i):
        c, mu_i = cfg.classes[i], cfg.rates[i]
        total = 0.0
        for j in range(c.k):
            rate = (cfg.n - j) * mu_i - c.lam
            if rate <= 0:
                raise Unstable(f"class {c.id}: stage rate {(cfg.n - j) * mu_i:.6g} <= lambda {c.lam}")
            total += 1.0 / rate
        return total

    return _per_class(cfg, one, class_id)


def lb_fcfs(cfg, class_id: int | None = None):
    def one(i):
        cid = cfg.classes[i].id

        def term(ctx, m):
            load = math.fsum(ctx.t.values())
            if load >= 1:
                raise BoundInvalid(f"FCFS lower bound, class {cid}, stage {ctx.s}: load {load:.6g} >= 1")
            return 1.0 / (m * cfg.rates[i]) + _sq_over_lam(cfg, ctx, ctx.t) / (1 - load)

        return _stage_sum(cfg, i, term)

    return _per_class(cfg, one, class_id)


def lb_npq(cfg, class_id: int | None = None):
    def one(i):
        cid = cfg.classes[i].id

        def term(ctx, m):
            gap = ctx.z - ctx.t[cid]
            if gap <= 0:
                raise BoundInvalid(f"N-PQ lower bound, class {cid}, stage {ctx.s}: Z - t = {gap:.6g} <= 0")
            return 1.0 / (m * cfg.rates[i]) + _sq_over_lam(cfg, ctx, ctx.t) / (ctx.z * gap)

        return _stage_sum(cfg, i, term)

    return _per_class(cfg, one, class_id)


def lb_pq(cfg, class_id: int | None = None, variant: str = "second-moment"):
    """Preemptive-priority lower bound.

    ``variant="first-moment"`` swaps the waiting-term numerator for
    ``1 - Z + t_i / ((n-s+1) mu_i)``, which uses first moments for the
    higher-priority classes; kept only for side-by-side comparison.
    """
    if variant not in ("second-moment", "first-moment"):
        raise ValueError(f"unknown variant {variant!r}")

    def one(i):
        cid = cfg.classes[i].id

        def term(ctx, m):
            gap = ctx.z - ctx.t[cid]
            if gap <= 0:
                raise BoundInvalid(f"PQ lower bound, class {cid}, stage {ctx.s}: Z - t = {gap:.6g} <= 0")
            if variant == "second-moment":
                num = _sq_over_lam(cfg, ctx, ctx.higher_unfinished | {cid})
            else:
                num = 1 - ctx.z + ctx.t[cid] / (m * cfg.rates[i])
            return 1.0 / (m * cfg.rates[i] * ctx.z) + num / (ctx.z * gap)

        return _stage_sum(cfg, i, term)

    return _per_class(cfg, one, class_id)


_LOWER = {Policy.FCFS: lb_fcfs, Policy.NPQ: lb_npq, Policy.PQ: lb_pq}
_UPPER = {Policy.FCFS: ub_fcfs, Policy.NPQ: ub_npq, Policy.PQ: ub_pq}


def lower_bound(cfg, policy=None, class_id: int | None = None):
    return _LOWER[Policy.parse(policy or cfg.policy)](cfg, class_id)


def upper_bound(cfg, policy=None, class_id: int | None = None):
    return _UPPER[Policy.parse(policy or cfg.policy)](cfg, class_id)


# -- report -------------------------------------------------------------------


@dataclass
class ClassBounds:
    class_id: int
    naive_lower: float = math.nan
    lower: float = math.nan
    upper: float = math.nan
    naive_valid: bool = False
    lower_valid: bool = False
    upper_valid: bool = False
    reasons: list[str] = field(default_factory=list)

    @property
    def sandwich_ok(self) -> bool:
        """naive <= lower <= upper over whichever of the three are valid."""
        vals = [v for v, ok in ((self.naive_lower, self.naive_valid), (self.lower, self.lower_valid), (self.upper, self.upper_valid)) if ok]
        return all(a <= b * (1 + 1e-12) for a, b in zip(vals, vals[1:]))


@dataclass
class BoundReport:
    policy: Policy
    stable: bool
    classes: list[ClassBounds]
    notes: list[str] = field(default_factory=list)

    def for_class(self, class_id: int) -> ClassBounds:
        for c in self.classes:
            if c.class_id == class_id:
                return c
        raise KeyError(class_id)


def bound_report(cfg, policy=None, pq_variant: str = "second-moment") -> BoundReport:
    policy = Policy.parse(policy or cfg.policy)
    stable = (stability_fcfs if policy is Policy.FCFS else stability_priority)(cfg)
    notes = []
    if cfg.service.kind != "exponential":
        notes.append(f"bounds are derived for exponential service only; {cfg.service.kind} service left unbounded")
    partial = [c.id for c in cfg.classes if c.r is not None and c.r < cfg.n]
    if partial:
        notes.append(f"bounds assume full fork (r = n); classes {partial} fork to fewer servers")
    if cfg.power.w_l > 0:
        notes.append("bounds ignore wake-up latency w_l")

    rows = []
    for c in cfg.classes:
        cb = ClassBounds(c.id)
        rows.append(cb)
        if not stable:
            cb.reasons.append("unstable")
            continue
        if cfg.service.kind != "exponential":
            cb.reasons.append("non-exponential service")
            continue
        for attr, fn in (
            ("naive_lower", lambda: naive_lower(cfg, c.id)),
            ("lower", lambda: lb_pq(cfg, c.id, pq_variant) if policy is Policy.PQ else lower_bound(cfg, policy, c.id)),
            ("upper", lambda: upper_bound(cfg, policy, c.id)),
        ):
            try:
                setattr(cb, attr, fn())
            except (BoundInvalid, Unstable) as exc:
                cb.reasons.append(str(exc))
                continue
            setattr(cb, {"naive_lower": "naive_valid", "lower": "lower_valid", "upper": "upper_valid"}[attr], True)
    return BoundReport(policy, stable, rows, notes)
