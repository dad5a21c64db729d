"""Discrete power laws over ranks 1..R and their continuous counterparts."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DomainError

# Below this distance from k = 1 the antiderivative switches to its series.
_K1_SERIES_WIDTH = 1e-9


def harmonic_number(R: int, k: float) -> float:
    """Generalized harmonic number sum_{i=1}^{R} i**-k.

    math.fsum returns the correctly rounded sum, which is at least as good as
    Kahan summation in ascending index order.
    """
    if R < 1:
        raise DomainError(f"R must be >= 1, got {R}")
    if k == 0:
        return float(R)
    return math.fsum(i ** -k for i in range(1, R + 1))


def continuous_h(R: int, k: float) -> float:
    """Integral of r**-k over [1, R]."""
    if R < 1:
        raise DomainError(f"R must be >= 1, got {R}")
    a = math.log(R)
    e = 1.0 - k
    if abs(e) < _K1_SERIES_WIDTH:
        # (exp(e*a) - 1)/e = a * (1 + e*a/2 + (e*a)^2/6 + ...)
        return a * (1.0 + e * a / 2.0 + (e * a) ** 2 / 6.0)
    return math.expm1(e * a) / e


def log_continuous_h(R: int, k: float) -> float:
    """Natural log of continuous_h, safe when R**(1-k) overflows."""
    a = math.log(R)
    e = 1.0 - k
    if abs(e) < _K1_SERIES_WIDTH or e * a < 700:
        return math.log(continuous_h(R, k))
    # e*a large and positive: log((e^{ea} - 1)/e) = ea + log1p(-e^{-ea}) - log e
    return e * a + math.log1p(-math.exp(-e * a)) - math.log(e)


@dataclass(frozen=True)
class PowerLawSpec:
    R: int
    k: float

    def __post_init__(self) -> None:
        if int(self.R) != self.R or self.R < 1:
            raise DomainError(f"R must be a positive integer, got {self.R}")
        if not (self.k >= 0 and math.isfinite(self.k)):
            raise DomainError(f"k must be finite and nonnegative, got {self.k}")

    @cached_property
    def normalizer(self) -> float:
        return harmonic_number(self.R, self.k)

    @cached_property
    def probabilities(self) -> np.ndarray:
        """pmf over ranks 1..R as a float array (index 0 is rank 1)."""
        ranks = np.arange(1, self.R + 1, dtype=float)
        return ranks ** -self.k / self.normalizer

    @cached_property
    def _cdf(self) -> np.ndarray:
        c = np.cumsum(self.probabilities)
        c[-1] = 1.0
        return c


def pmf(spec: PowerLawSpec, r: int) -> float:
    if not 1 <= r <= spec.R:
        raise DomainError(f"rank {r} outside 1..{spec.R}")
    return r ** -spec.k / spec.normalizer


def sample(spec: PowerLawSpec, rng_seed: int | np.random.SeedSequence, count: int) -> list[int]:
    """Draw `count` i.i.d. ranks by inverse-CDF table lookup."""
    if count < 0:
        raise DomainError(f"count must be >= 0, got {count}")
    rng = np.random.default_rng(rng_seed)
    u = rng.random(count)
    idx = np.searchsorted(spec._cdf, u, side="right")
    return (np.minimum(idx, spec.R - 1) + 1).tolist()


@dataclass(frozen=True)
class ProductPowerLaw:
    """Independent product of n copies of one power law over rank vectors."""

    base: PowerLawSpec
    n: int

    def __post_init__(self) -> None:
        if int(self.n) != self.n or self.n < 1:
            raise DomainError(f"n must be a positive integer, got {self.n}")

    def log_pmf(self, ranks) -> float:
        ranks = list(ranks)
        if len(ranks) != self.n:
            raise DomainError(f"expected {self.n} ranks, got {len(ranks)}")
        for r in ranks:
            if not 1 <= r <= self.base.R:
                raise DomainError(f"rank {r} outside 1..{self.base.R}")
        return -self.base.k * math.fsum(math.log(r) for r in ranks) - self.n * math.log(self.base.normalizer)

    def pmf(self, ranks) -> float:
        return math.exp(self.log_pmf(ranks))

    def enumerate(self, limit: int = 10**6):
        """Yield (rank tuple, probability) over all R**n rank vectors."""
        if self.base.R ** self.n > limit:
            raise DomainError(f"R**n = {self.base.R ** self.n} exceeds enumeration limit {limit}")
        p = self.base.probabilities
        for ranks in itertools.product(range(1, self.base.R + 1), repeat=self.n):
            yield ranks, math.prod(p[r - 1] for r in ranks)


def fit_loglog_exponent(profile: np.ndarray) -> float:
    """Negative slope of log(profile) against log(rank) by least squares."""
    x = np.log(np.arange(1, len(profile) + 1, dtype=float))
    slope = np.polyfit(x, np.log(profile), 1)[0]
    return float(-slope)


def subset_exponent_estimate(
    spec: PowerLawSpec, subset_size: int, rng_seed: int, trials: int
) -> float:
    """Exponent seen after restricting the power law to random rank subsets.

    Each trial keeps a uniformly random set of `subset_size` ranks and
    renormalizes their masses. The sorted renormalized vectors are averaged
    over trials and a log-log line is fitted over all subset ranks.
    """
    if not 1 <= subset_size <= spec.R:
        raise DomainError(f"subset_size must lie in 1..{spec.R}, got {subset_size}")
    if trials < 1:
        raise DomainError(f"trials must be >= 1, got {trials}")
    if subset_size == 1:
        # a single rank carries all the mass; no slope to fit
        return 0.0
    p = spec.probabilities
    if subset_size == spec.R:
        return fit_loglog_exponent(p)
    rng = np.random.default_rng(rng_seed)
    # argsort of uniform keys gives uniformly random subsets, vectorized over trials
    keys = rng.random((trials, spec.R))
    idx = np.sort(np.argpartition(keys, subset_size - 1, axis=1)[:, :subset_size], axis=1)
    masses = p[idx]
    masses /= masses.sum(axis=1, keepdims=True)
    return fit_loglog_exponent(masses.mean(axis=0))


def subset_exponent_exhaustive(spec: PowerLawSpec, subset_size: int) -> float:
    """Same fit as subset_exponent_estimate, averaged over every subset exactly."""
    if not 1 <= subset_size <= spec.R:
        raise DomainError(f"subset_size must lie in 1..{spec.R}, got {subset_size}")
    if subset_size == 1:
        return 0.0
    p = spec.probabilities
    total = np.zeros(subset_size)
    count = 0
    for combo in itertools.combinations(range(spec.R), subset_size):
        q = p[list(combo)]
        total += q / q.sum()
        count += 1
    return fit_loglog_exponent(total / count)
