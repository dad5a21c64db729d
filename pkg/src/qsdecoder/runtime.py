"""Closed-form query counts for power-law advised search.

Quantities that scale exponentially in the sequence length n are carried as
natural logarithms; the linear accessors saturate to inf instead of raising.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .powerlaw import harmonic_number, log_continuous_h

GRID_R_VALUES = (3, 5, 10, 15, 20, 30, 40, 60, 100)
GRID_K_STEP = 0.05
GRID_K_MAX = 10.0

_EXP_MAX = math.log(np.finfo(float).max)


def saturating_exp(x: float) -> float:
    return math.exp(x) if x < _EXP_MAX else math.inf


@dataclass(frozen=True)
class RuntimeQuery:
    R: int
    k: float
    n: int

    def __post_init__(self) -> None:
        if int(self.R) != self.R or self.R < 1:
            raise DomainError(f"R must be a positive integer, got {self.R}")
        if int(self.n) != self.n or self.n < 1:
            raise DomainError(f"n must be a positive integer, got {self.n}")
        if not (self.k >= 0 and math.isfinite(self.k)):
            raise DomainError(f"k must be finite and nonnegative, got {self.k}")


def log_harmonic_number(R: int, k: float) -> float:
    """log H_R(k), via log1p of the tail so that small tails keep their digits."""
    if R < 1:
        raise DomainError(f"R must be >= 1, got {R}")
    if k == 0:
        return math.log1p(R - 1)
    return math.log1p(math.fsum(i ** -k for i in range(2, R + 1)))


def mlp_queries(success_prob: float) -> float:
    """Expected Grover queries to amplify a component of mass `success_prob`."""
    if not 0 < success_prob <= 1:
        raise DomainError(f"success_prob must lie in (0, 1], got {success_prob}")
    return (math.pi / 4) / math.sqrt(success_prob)


def mlp_queries_powerlaw(R: int, k: float, n: int) -> float:
    """mlp_queries for the top path of a length-n product power law."""
    return (math.pi / 4) * saturating_exp(0.5 * n * log_harmonic_number(R, k))


def log_rt1(q: RuntimeQuery) -> float:
    return q.n * log_harmonic_number(q.R, q.k / 2) - 0.5 * q.n * log_harmonic_number(q.R, q.k)


def rt1(q: RuntimeQuery) -> float:
    """Expected queries of advised search over the full R-ary tree."""
    return saturating_exp(log_rt1(q))


def speedup_exponent(R: int, k: float) -> float:
    """Exponent f with rt1 = R**(n*f)."""
    if R < 2:
        raise DomainError(f"speedup exponent needs R >= 2, got {R}")
    if k < 0:
        raise DomainError(f"k must be nonnegative, got {k}")
    # log1p(R - 1) matches the numerator's evaluation of log H_R(0), so f(R, 0) is exactly 1/2
    return (log_harmonic_number(R, k / 2) - 0.5 * log_harmonic_number(R, k)) / math.log1p(R - 1)


def log_rt1_continuous(q: RuntimeQuery) -> float:
    if q.R < 2:
        raise DomainError(f"continuous variant needs R >= 2, got {q.R}")
    return q.n * log_continuous_h(q.R, q.k / 2) - 0.5 * q.n * log_continuous_h(q.R, q.k)


def rt1_continuous(q: RuntimeQuery) -> float:
    """rt1 with harmonic sums replaced by integrals over [1, R]."""
    return saturating_exp(log_rt1_continuous(q))


def hsp_classical_baseline(num_accepted: int) -> int:
    """Classical sample complexity of highest-score search: one draw per path."""
    if num_accepted < 1:
        raise DomainError(f"num_accepted must be >= 1, got {num_accepted}")
    return int(num_accepted)


def exponent_k_grid(k_max: float = GRID_K_MAX, step: float = GRID_K_STEP) -> np.ndarray:
    # integer multiples avoid accumulated drift, so 0 is exactly 0
    return np.arange(int(round(k_max / step)) + 1) * step


def speedup_curves(R_values=GRID_R_VALUES, k_values=None) -> list[tuple[int, float, float]]:
    """(R, k, f(R,k)) rows in R-major order."""
    if k_values is None:
        k_values = exponent_k_grid()
    return [(int(R), float(k), speedup_exponent(int(R), float(k))) for R in R_values for k in k_values]
