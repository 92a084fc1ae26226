"""System configuration for the (n, k_1, ..., k_R) storage system.

Units: seconds, kilobits, jobs/s, watts, joules.  ``mu`` is the service rate
per kilobit, so class ``i`` is served at ``k_i * f * mu / l_i`` per server.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, fields, replace

from .distributions import Deterministic, Exponential, Pareto, pareto_mean_matched

__all__ = [
    "Policy",
    "DataClass",
    "PowerModel",
    "SimControls",
    "ServiceFamily",
    "ArrivalFamily",
    "SystemConfig",
    "ValidatedConfig",
    "Issue",
    "ConfigError",
    "validate",
    "effective_rate",
]


class Policy(str, enum.Enum):
    FCFS = "fcfs"
    NPQ = "npq"
    PQ = "pq"

    @classmethod
    def parse(cls, value) -> "Policy":
        if isinstance(value, Policy):
            return value
        aliases = {
            "fcfs": cls.FCFS,
            "npq": cls.NPQ,
            "n-pq": cls.NPQ,
            "nonpreemptive": cls.NPQ,
            "nonpreemptivepriority": cls.NPQ,
            "pq": cls.PQ,
            "preemptive": cls.PQ,
            "preemptivepriority": cls.PQ,
        }
        key = str(value).strip().lower().replace("_", "").replace(" ", "")
        if key not in aliases:
            raise ValueError(f"unknown policy {value!r}")
        return aliases[key]


@dataclass(frozen=True)
class DataClass:
    id: int
    k: int
    l: float
    lam: float
    r: int | None = None  # None: fork to all n servers
    priority_rank: int | None = None  # None: listed order, 1 = highest


@dataclass(frozen=True)
class PowerModel:
    c0: float = 203.13
    p_a: float = 120.0
    c_l: float = 15.0
    p_l: float = 13.1
    d_l: float = 0.5
    w_l: float = 6.0

    def p_on(self, f: float) -> float:
        return self.c0 * f**3 + self.p_a

    @property
    def p_off(self) -> float:
        return self.c_l + self.p_l


@dataclass(frozen=True)
class SimControls:
    horizon_jobs: int = 100_000
    warmup_jobs: int | None = None  # None: 10% of horizon_jobs
    replications: int = 10
    seed: int = 1
    allow_unstable: bool = False
    split_merge: bool = False
    max_queued: int = 1_000_000
    max_time: float = 1e9

    @property
    def warmup(self) -> int:
        if self.warmup_jobs is None:
            return self.horizon_jobs // 10
        return self.warmup_jobs


@dataclass(frozen=True)
class ServiceFamily:
    kind: str = "exponential"  # exponential | pareto | deterministic
    alpha: float | None = None

    def distribution(self, rate: float):
        if self.kind == "exponential":
            return Exponential(rate)
        if self.kind == "pareto":
            return pareto_mean_matched(self.alpha, rate)
        if self.kind == "deterministic":
            return Deterministic(1.0 / rate)
        raise ValueError(f"unknown service family {self.kind!r}")


@dataclass(frozen=True)
class ArrivalFamily:
    kind: str = "poisson"  # poisson | pareto (renewal, mean-matched)
    alpha: float | None = None

    def distribution(self, lam: float):
        if self.kind == "poisson":
            return Exponential(lam)
        if self.kind == "pareto":
            return pareto_mean_matched(self.alpha, lam)
        raise ValueError(f"unknown arrival family {self.kind!r}")


@dataclass(frozen=True)
class SystemConfig:
    n: int
    mu: float
    classes: tuple[DataClass, ...]
    f: float = 1.0
    policy: Policy = Policy.FCFS
    service: ServiceFamily = ServiceFamily()
    arrival: ArrivalFamily = ArrivalFamily()
    power: PowerModel = PowerModel()
    sim: SimControls = SimControls()


@dataclass(frozen=True)
class ValidatedConfig(SystemConfig):
    """A SystemConfig that passed :func:`validate`, with derived values frozen."""

    rates: tuple[float, ...] = field(init=False, repr=False)
    p_on: float = field(init=False, repr=False)
    p_off: float = field(init=False, repr=False)
    # class indices sorted by (k, priority rank, id): the relabeling used by the lower bounds
    k_order: tuple[int, ...] = field(init=False, repr=False)
    # class indices from highest to lowest priority
    priority_order: tuple[int, ...] = field(init=False, repr=False)
    stable: bool = field(init=False, repr=False)

    def __post_init__(self):
        from .bounds import is_stable

        rates = tuple(c.k * self.f * self.mu / c.l for c in self.classes)
        idx = range(len(self.classes))
        set_ = object.__setattr__
        set_(self, "rates", rates)
        set_(self, "p_on", self.power.p_on(self.f))
        set_(self, "p_off", self.power.p_off)
        set_(self, "k_order", tuple(sorted(idx, key=lambda i: (self.classes[i].k, self.classes[i].priority_rank, self.classes[i].id))))
        set_(self, "priority_order", tuple(sorted(idx, key=lambda i: self.classes[i].priority_rank)))
        set_(self, "stable", is_stable(self))

    @property
    def R(self) -> int:
        return len(self.classes)

    def index_of(self, class_id: int) -> int:
        for i, c in enumerate(self.classes):
            if c.id == class_id:
                return i
        raise KeyError(f"unknown class id {class_id}")

    def service_dist(self, i: int):
        return self.service.distribution(self.rates[i])

    def arrival_dist(self, i: int):
        return self.arrival.distribution(self.classes[i].lam)

    def evolve(self, **changes) -> "ValidatedConfig":
        """Copy with changed SystemConfig fields, re-validated."""
        base = {f.name: getattr(self, f.name) for f in fields(SystemConfig)}
        base.update(changes)
        return validate(SystemConfig(**base))


@dataclass(frozen=True)
class Issue:
    path: str
    message: str
    kind: str = "invalid"  # invalid | unstable

    def __str__(self) -> str:
        return f"{self.path}: {self.message}"


class ConfigError(ValueError):
    def __init__(self, issues: list[Issue]):
        self.issues = list(issues)
        super().__init__("; ".join(str(i) for i in self.issues))

    @property
    def unstable(self) -> bool:
        return any(i.kind == "unstable" for i in self.issues)


def _positive(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and x > 0 and math.isfinite(x)


def validate(cfg: SystemConfig) -> ValidatedConfig:
    """Check every invariant and return the frozen, derived config.

    Raises ConfigError listing each violation with its field path.  Stability
    (offered load below service capacity) is reported as an ``unstable`` issue unless
    ``cfg.sim.allow_unstable`` is set.
    """
    if isinstance(cfg, ValidatedConfig):
        return cfg
    issues: list[Issue] = []
    add = lambda path, msg, kind="invalid": issues.append(Issue(path, msg, kind))

    n = cfg.n
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        add("n", "number of servers must be a positive integer")
        n = None
    if not _positive(cfg.mu):
        add("mu", "service rate must be positive")
    if not (isinstance(cfg.f, (int, float)) and 0 < cfg.f <= 1):
        add("f", "CPU frequency factor must be in (0, 1]")
    try:
        policy = Policy.parse(cfg.policy)
    except ValueError as exc:
        add("policy", str(exc))
        policy = Policy.FCFS

    if not cfg.classes:
        add("classes", "at least one data class is required")
    classes = []
    seen_ids, seen_ranks = set(), set()
    for pos, c in enumerate(cfg.classes):
        path = f"classes[{pos}]"
        if c.id in seen_ids:
            add(f"{path}.id", f"duplicate class id {c.id}")
        seen_ids.add(c.id)
        k_ok = isinstance(c.k, int) and not isinstance(c.k, bool) and c.k >= 1 and (n is None or c.k <= n)
        if not k_ok:
            add(f"{path}.k", "k out of range (need 1 <= k <= n)")
        r = c.r if c.r is not None else n
        if c.r is not None:
            if not isinstance(c.r, int) or isinstance(c.r, bool):
                add(f"{path}.r", "redundancy must be an integer")
            elif k_ok and c.r < c.k:
                add(f"{path}.r", "redundancy below recovery threshold (need r >= k)")
            elif n is not None and c.r > n:
                add(f"{path}.r", "redundancy above number of servers (need r <= n)")
        if not _positive(c.lam):
            add(f"{path}.lam", "arrival rate must be positive")
        if not _positive(c.l):
            add(f"{path}.l", "file size must be positive")
        rank = c.priority_rank if c.priority_rank is not None else pos + 1
        if not isinstance(rank, int) or rank < 1:
            add(f"{path}.priority_rank", "priority rank must be a positive integer")
        elif rank in seen_ranks:
            add(f"{path}.priority_rank", f"duplicate priority rank {rank}")
        seen_ranks.add(rank)
        classes.append(replace(c, r=r, priority_rank=rank))

    p = cfg.power
    for name in ("c0", "p_a", "c_l", "p_l", "d_l", "w_l"):
        v = getattr(p, name)
        if not (isinstance(v, (int, float)) and v >= 0 and math.isfinite(v)):
            add(f"power.{name}", "must be finite and >= 0")

    s = cfg.sim
    if not (isinstance(s.horizon_jobs, int) and s.horizon_jobs >= 1):
        add("sim.horizon_jobs", "must be a positive integer")
    elif not (isinstance(s.warmup, int) and 0 <= s.warmup < s.horizon_jobs):
        add("sim.warmup_jobs", "warm-up must satisfy 0 <= warmup < horizon")
    if not (isinstance(s.replications, int) and s.replications >= 1):
        add("sim.replications", "must be >= 1")

    if cfg.service.kind not in ("exponential", "pareto", "deterministic"):
        add("service.family", f"unknown service family {cfg.service.kind!r}")
    elif cfg.service.kind == "pareto" and not (cfg.service.alpha is not None and cfg.service.alpha > 1):
        add("service.alpha", "pareto service needs alpha > 1 (finite mean)")
    if cfg.arrival.kind not in ("poisson", "pareto"):
        add("arrival.family", f"unknown arrival family {cfg.arrival.kind!r}")
    elif cfg.arrival.kind == "pareto" and not (cfg.arrival.alpha is not None and cfg.arrival.alpha > 1):
        add("arrival.alpha", "pareto arrivals need alpha > 1 (finite mean)")

    if issues:
        raise ConfigError(issues)

    vc = ValidatedConfig(
        n=cfg.n,
        mu=float(cfg.mu),
        classes=tuple(classes),
        f=float(cfg.f),
        policy=policy,
        service=cfg.service,
        arrival=cfg.arrival,
        power=cfg.power,
        sim=cfg.sim,
    )
    if not vc.stable and not cfg.sim.allow_unstable:
        rule = "FCFS" if policy is Policy.FCFS else "priority"
        raise ConfigError([Issue("stability", f"configuration violates the {rule} stability condition", "unstable")])
    return vc


def effective_rate(cfg: SystemConfig, class_id: int) -> float:
    for c in cfg.classes:
        if c.id == class_id:
            return c.k * cfg.f * cfg.mu / c.l
    raise KeyError(f"unknown class id {class_id}")
