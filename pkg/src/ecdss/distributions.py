"""Random variates and analytic moments for the service/arrival distributions.

Every sampler draws from an :class:`RngStream`.  Streams are keyed by
``(seed, stream_id)`` through :class:`numpy.random.SeedSequence`, so one
stream per server/arrival process never shares state with another and the
order in which the simulator consumes them cannot shift variates between
streams.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from math import comb

import numpy as np

__all__ = [
    "Exponential",
    "Pareto",
    "Deterministic",
    "Distribution",
    "RngStream",
    "sample",
    "harmonic",
    "order_stat_moments_exp",
    "order_stat_pdf",
    "pareto_mean_matched",
]

_BLOCK = 4096


@dataclass(frozen=True)
class Exponential:
    rate: float

    def __post_init__(self):
        if not self.rate > 0 or math.isinf(self.rate):
            raise ValueError(f"exponential rate must be positive and finite, got {self.rate!r}")

    @property
    def mean(self) -> float:
        return 1.0 / self.rate

    @property
    def variance(self) -> float:
        return 1.0 / self.rate**2

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x < 0, 0.0, -np.expm1(-self.rate * np.maximum(x, 0.0)))

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x < 0, 0.0, self.rate * np.exp(-self.rate * np.maximum(x, 0.0)))

    def support(self) -> tuple[float, float]:
        return 0.0, math.inf


@dataclass(frozen=True)
class Pareto:
    """Pareto with shape ``alpha`` and scale ``s_m``: P(S > s) = (s_m/s)^alpha for s >= s_m."""

    alpha: float
    s_m: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"pareto alpha must be positive, got {self.alpha!r}")
        if not self.s_m > 0:
            raise ValueError(f"pareto scale must be positive, got {self.s_m!r}")

    @property
    def has_finite_mean(self) -> bool:
        return self.alpha > 1

    @property
    def has_finite_variance(self) -> bool:
        return self.alpha > 2

    @property
    def mean(self) -> float:
        if not self.has_finite_mean:
            return math.inf
        return self.alpha * self.s_m / (self.alpha - 1)

    @property
    def variance(self) -> float:
        if not self.has_finite_variance:
            return math.inf
        a = self.alpha
        return self.s_m**2 * a / ((a - 1) ** 2 * (a - 2))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        safe = np.maximum(x, self.s_m)
        return np.where(x < self.s_m, 0.0, 1.0 - (self.s_m / safe) ** self.alpha)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        safe = np.maximum(x, self.s_m)
        return np.where(x < self.s_m, 0.0, self.alpha * self.s_m**self.alpha / safe ** (self.alpha + 1))

    def support(self) -> tuple[float, float]:
        return self.s_m, math.inf


@dataclass(frozen=True)
class Deterministic:
    value: float

    def __post_init__(self):
        if not self.value >= 0 or math.isinf(self.value):
            raise ValueError(f"deterministic value must be finite and >= 0, got {self.value!r}")

    @property
    def mean(self) -> float:
        return self.value

    @property
    def variance(self) -> float:
        return 0.0

    def cdf(self, x):
        return np.where(np.asarray(x, dtype=float) < self.value, 0.0, 1.0)

    def support(self) -> tuple[float, float]:
        return self.value, self.value


Distribution = Exponential | Pareto | Deterministic


def pareto_mean_matched(alpha: float, rate: float) -> Pareto:
    """Pareto with the same mean as an exponential of ``rate`` (needs alpha > 1)."""
    if not alpha > 1:
        raise ValueError(f"mean matching needs alpha > 1, got {alpha!r}")
    return Pareto(alpha, (alpha - 1) / (alpha * rate))


class RngStream:
    """A reproducible, single-owner variate stream.

    ``stream_id`` may be an int or a tuple of non-negative ints; it becomes the
    SeedSequence spawn key, so distinct ids give independent PCG64 streams.
    Variates are pulled from numpy in blocks and handed out one at a time.
    """

    __slots__ = ("seed", "stream_id", "_gen", "_exp", "_exp_i", "_uni", "_uni_i")

    def __init__(self, seed: int, stream_id: int | tuple[int, ...] = 0):
        key = (stream_id,) if isinstance(stream_id, int) else tuple(stream_id)
        self.seed = int(seed)
        self.stream_id = key
        ss = np.random.SeedSequence(self.seed & ((1 << 64) - 1), spawn_key=key)
        self._gen = np.random.Generator(np.random.PCG64(ss))
        self._exp: list[float] = []
        self._exp_i = 0
        self._uni: list[float] = []
        self._uni_i = 0

    def standard_exponential(self) -> float:
        i = self._exp_i
        if i >= len(self._exp):
            self._exp = self._gen.standard_exponential(_BLOCK).tolist()
            i = 0
        self._exp_i = i + 1
        return self._exp[i]

    def random(self) -> float:
        i = self._uni_i
        if i >= len(self._uni):
            self._uni = self._gen.random(_BLOCK).tolist()
            i = 0
        self._uni_i = i + 1
        return self._uni[i]

    def choose(self, n: int, r: int) -> list[int]:
        """r distinct values from range(n), uniformly (partial Fisher-Yates)."""
        pool = list(range(n))
        if r >= n:
            return pool
        for j in range(r):
            m = j + int(self.random() * (n - j))
            pool[j], pool[m] = pool[m], pool[j]
        return pool[:r]


def sample(d: Distribution, rng: RngStream) -> float:
    if isinstance(d, Exponential):
        return rng.standard_exponential() / d.rate
    if isinstance(d, Pareto):
        # inverse-CDF: s_m * U^(-1/alpha) with -log U ~ Exp(1)
        return d.s_m * math.exp(rng.standard_exponential() / d.alpha)
    if isinstance(d, Deterministic):
        return d.value
    raise TypeError(f"unsupported distribution {d!r}")


def harmonic(x: int, y: int, z: int) -> float:
    """Generalized harmonic number: sum of 1/j**z for j = x+1 .. y."""
    if x < 0 or y < 0 or z < 1:
        raise ValueError(f"harmonic needs x, y >= 0 and z >= 1, got ({x}, {y}, {z})")
    if x > y:
        raise ValueError(f"harmonic needs x <= y, got x={x} > y={y}")
    # summing small terms first keeps the float error down
    return math.fsum(1.0 / j**z for j in range(y, x, -1))


def order_stat_moments_exp(n: int, k: int, rate: float) -> tuple[float, float]:
    """Mean and variance of the k-th smallest of n i.i.d. Exponential(rate)."""
    if not 1 <= k <= n:
        raise ValueError(f"order statistic needs 1 <= k <= n, got k={k}, n={n}")
    if not rate > 0:
        raise ValueError(f"rate must be positive, got {rate!r}")
    return harmonic(n - k, n, 1) / rate, harmonic(n - k, n, 2) / rate**2


def order_stat_pdf(n: int, k: int, base: Distribution, x):
    """Density of the k-th smallest of n i.i.d. draws from ``base`` at x."""
    if not 1 <= k <= n:
        raise ValueError(f"order statistic needs 1 <= k <= n, got k={k}, n={n}")
    if isinstance(base, Deterministic):
        raise ValueError("deterministic base has no density")
    coef = comb(n, k - 1) * (n - k + 1)  # multinomial n! / ((k-1)! 1! (n-k)!)
    big_f = base.cdf(x)
    out = coef * big_f ** (k - 1) * (1.0 - big_f) ** (n - k) * base.pdf(x)
    return float(out) if np.ndim(out) == 0 else out
