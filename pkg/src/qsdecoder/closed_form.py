"""Truncated products of Pareto densities over [1, R]^n.

The central quantity is

    M(R, k1, k2, c, n) = h_R(k1)^-n * integral over [1,R]^n of
                         prod(r_i^-k2) * [r_1 * ... * r_n <= c] dr

which, for k1 = k2 = k, is the probability mass of the continuous product
power law on paths whose probability lies above a threshold set by c.

In log coordinates z_i = log r_i the integrand becomes exp(k' * sum z) with
k' = 1 - k2 on the cube [0, a']^n cut by the simplex sum z <= c', where
a' = log R and c' = log c. Inclusion-exclusion over which coordinates
exceed a' gives a finite alternating sum of truncated exponential series.
That sum cancels catastrophically, so it is evaluated in MPFR arithmetic
with automatic precision escalation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import gmpy2
import numpy as np
from gmpy2 import mpfr

from .errors import DomainError, PrecisionExhaustedError, SingularExponentError
from .powerlaw import continuous_h, log_continuous_h

START_DIGITS = 50
MAX_DIGITS = 12800
AGREEMENT = 1e-12
K1_SINGULAR_WIDTH = 1e-9
RICHARDSON_STEPS = (1e-3, 5e-4, 2.5e-4)
BRUTEFORCE_MAX_N = 6
BRUTEFORCE_MIN_RESOLUTION = 64

_LOG2_10 = math.log2(10)


@dataclass(frozen=True)
class TruncatedIntegralSpec:
    """Parameters of M. Pass `log_c` instead of `c` when c overflows a float."""

    R: int
    k1: float
    k2: float
    c: float
    n: int
    log_c: float | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if int(self.R) != self.R or self.R < 2:
            raise DomainError(f"R must be an integer >= 2, got {self.R}")
        if int(self.n) != self.n or self.n < 1:
            raise DomainError(f"n must be a positive integer, got {self.n}")
        if self.log_c is None:
            if not self.c > 0:
                raise DomainError(f"threshold c must be positive, got {self.c}")
            if not math.isfinite(self.c):
                raise DomainError("threshold c is not finite; pass log_c instead")
        elif not math.isfinite(self.log_c):
            raise DomainError(f"log_c must be finite, got {self.log_c}")
        for name in ("k1", "k2"):
            if not math.isfinite(getattr(self, name)):
                raise DomainError(f"{name} must be finite")

    @classmethod
    def from_log_c(cls, R: int, k1: float, k2: float, log_c: float, n: int) -> "TruncatedIntegralSpec":
        c = math.exp(log_c) if log_c < 709 else math.inf
        return cls(R, k1, k2, c, n, log_c=log_c)

    @property
    def cprime(self) -> float:
        return self.log_c if self.log_c is not None else math.log(self.c)

    @property
    def empty(self) -> bool:
        """Threshold excludes all of the domain except a null set."""
        if self.log_c is not None:
            return self.log_c <= 0
        return self.c <= 1

    @property
    def full(self) -> bool:
        """Threshold covers the whole cube [1, R]^n."""
        if self.log_c is not None:
            return self.log_c >= self.n * math.log(self.R)
        # int/float comparison in Python is exact
        return self.c >= self.R ** self.n

    def with_k2(self, k2: float) -> "TruncatedIntegralSpec":
        return TruncatedIntegralSpec(self.R, self.k1, k2, self.c, self.n, log_c=self.log_c)


def _digits_to_bits(digits: int) -> int:
    return int(math.ceil(digits * _LOG2_10)) + 16


def _mp_h(R: int, k: float):
    """h_R(k) in the current MPFR context."""
    e = 1 - mpfr(k)
    a = gmpy2.log(mpfr(R))
    if e == 0:
        return a
    return gmpy2.expm1(e * a) / e


def _alternating_sum(R: int, k2: float, cprime: float, n: int):
    """Integral of exp(k' * sum z) over the cut cube, in the current context.

    Equals (-1)^n / k'^n * sum_{j=0}^{J} (-1)^j C(n,j)
        * (exp(a'k'j) - exp(c'k') * sum_{l<n} (a'k'j - c'k')^l / l!)
    with J = min(n, floor(c'/a')). The j = c'/a' boundary term is zero.
    """
    kp = 1 - mpfr(k2)
    ap = gmpy2.log(mpfr(R))
    cp = mpfr(cprime)
    top = min(n, int(gmpy2.floor(cp / ap)))
    ekc = gmpy2.exp(cp * kp)
    total = mpfr(0)
    for j in range(top + 1):
        x = kp * (ap * j - cp)
        term = mpfr(1)
        series = mpfr(0)
        for l in range(1, n + 1):
            series += term
            term = term * x / l
        piece = gmpy2.comb(n, j) * (gmpy2.exp(ap * kp * j) - ekc * series)
        total = total + piece if j % 2 == 0 else total - piece
    if n % 2:
        total = -total
    return total / kp ** n


def _normalized_at(spec: TruncatedIntegralSpec, bits: int):
    with gmpy2.context(gmpy2.get_context(), precision=bits):
        raw = _alternating_sum(spec.R, spec.k2, spec.cprime, spec.n)
        return raw / _mp_h(spec.R, spec.k1) ** spec.n


def _full_domain_value(spec: TruncatedIntegralSpec, bits: int = 256):
    # the cube integral factorizes into a product of one-dimensional integrals
    with gmpy2.context(gmpy2.get_context(), precision=bits):
        return (_mp_h(spec.R, spec.k2) / _mp_h(spec.R, spec.k1)) ** spec.n


def _escalate(evaluate, start_digits: int = START_DIGITS, max_digits: int = MAX_DIGITS):
    """Double precision until two successive values agree; returns (value, digits)."""
    digits = start_digits
    prev = None
    while digits <= max_digits:
        value = evaluate(_digits_to_bits(digits))
        if prev is not None and value >= 0:
            if value == prev or abs(value - prev) <= AGREEMENT * abs(value):
                return value, digits
        prev = value
        digits *= 2
    if prev is not None and prev < 0:
        raise PrecisionExhaustedError(
            f"closed form still negative at {max_digits} digits ({float(prev):.3e})"
        )
    raise PrecisionExhaustedError(f"closed form did not settle within {max_digits} digits")


def _check_nonsingular(spec: TruncatedIntegralSpec) -> None:
    if abs(1 - spec.k2) < K1_SINGULAR_WIDTH:
        raise SingularExponentError(
            f"k2 = {spec.k2} is within {K1_SINGULAR_WIDTH} of 1; use m_closed_k1limit"
        )


def m_closed_mp(spec: TruncatedIntegralSpec, digits: int | None = None):
    """M as an MPFR number together with the decimal digits used.

    With `digits` given, evaluates once at that precision and skips the
    convergence check; otherwise escalates from START_DIGITS.
    """
    _check_nonsingular(spec)
    if spec.empty:
        return mpfr(0), 0
    if spec.full:
        return _full_domain_value(spec), 0
    if digits is not None:
        return _normalized_at(spec, _digits_to_bits(digits)), digits
    return _escalate(lambda bits: _normalized_at(spec, bits))


def m_closed(spec: TruncatedIntegralSpec) -> float:
    """Closed-form M; raises SingularExponentError near k2 = 1."""
    value, _ = m_closed_mp(spec)
    return float(value)


def log_m_closed(spec: TruncatedIntegralSpec) -> float:
    value, _ = m_closed_mp(spec)
    return -math.inf if value == 0 else float(gmpy2.log(value))


def m_closed_audit(spec: TruncatedIntegralSpec) -> tuple[float, float, int]:
    """Value at the converged precision and at twice that precision.

    Returns (value, value_at_double_precision, converged_digits).
    """
    value, digits = m_closed_mp(spec)
    if digits == 0:
        return float(value), float(value), 0
    doubled, _ = m_closed_mp(spec, digits=2 * digits)
    return float(value), float(doubled), digits


def _richardson(g_h: float, g_h2: float, g_h4: float) -> float:
    # symmetric averages carry only even powers of the step
    a1 = (4 * g_h2 - g_h) / 3
    a2 = (4 * g_h4 - g_h2) / 3
    return (16 * a2 - a1) / 15


def m_closed_k1limit_mp(spec: TruncatedIntegralSpec):
    if spec.empty:
        return mpfr(0)
    if spec.full:
        return _full_domain_value(spec)
    averages = []
    for h in RICHARDSON_STEPS:
        up, _ = m_closed_mp(spec.with_k2(1 + h))
        down, _ = m_closed_mp(spec.with_k2(1 - h))
        averages.append((up + down) / 2)
    with gmpy2.context(gmpy2.get_context(), precision=_digits_to_bits(START_DIGITS)):
        return _richardson(*averages)


def m_closed_k1limit(spec: TruncatedIntegralSpec) -> float:
    """M at k2 = 1 by Richardson extrapolation of symmetric closed-form values."""
    if abs(1 - spec.k2) >= K1_SINGULAR_WIDTH:
        raise DomainError(f"k1limit evaluator expects k2 = 1, got {spec.k2}")
    return float(m_closed_k1limit_mp(spec))


def truncated_mass_mp(spec: TruncatedIntegralSpec):
    """M through whichever evaluator is valid for spec.k2."""
    if abs(1 - spec.k2) < K1_SINGULAR_WIDTH:
        return m_closed_k1limit_mp(spec)
    value, _ = m_closed_mp(spec)
    return value


def truncated_mass(spec: TruncatedIntegralSpec) -> float:
    return float(truncated_mass_mp(spec))


def log_truncated_mass(spec: TruncatedIntegralSpec) -> float:
    value = truncated_mass_mp(spec)
    if value <= 0:
        return -math.inf
    return float(gmpy2.log(value))


def m_bruteforce(spec: TruncatedIntegralSpec, resolution: int = 1024) -> float:
    """Midpoint-rule oracle for M on a grid uniform in log r.

    The first n - 1 log coordinates are discretized into `resolution` cells
    each. The integrand only depends on their sum, so the (n-1)-dimensional
    midpoint sum is collapsed by convolving the per-axis cell counts. The
    last coordinate is integrated exactly.
    """
    if spec.n > BRUTEFORCE_MAX_N:
        raise DomainError(f"quadrature oracle is unreliable beyond n = {BRUTEFORCE_MAX_N}")
    if resolution < BRUTEFORCE_MIN_RESOLUTION:
        raise DomainError(f"resolution must be >= {BRUTEFORCE_MIN_RESOLUTION}")
    if spec.empty:
        return 0.0
    n = spec.n
    kp = 1.0 - spec.k2
    ap = math.log(spec.R)
    cp = spec.cprime
    # no single coordinate can exceed c' inside the region
    width = min(ap, cp)
    step = width / resolution

    multiplicity = np.ones(1)
    cell = np.ones(resolution)
    for _ in range(n - 1):
        multiplicity = np.convolve(multiplicity, cell)
    s = (np.arange(len(multiplicity)) + 0.5 * (n - 1)) * step

    upper = np.clip(np.minimum(width, cp - s), 0.0, None)
    if kp == 0:
        inner = upper
    else:
        inner = np.expm1(kp * upper) / kp
    raw = step ** (n - 1) * float(np.sum(multiplicity * np.exp(kp * s) * inner))
    return raw / continuous_h(spec.R, spec.k1) ** n


def _volume_spec(R: int, n: int, c: float | None, log_c: float | None) -> TruncatedIntegralSpec:
    if log_c is not None:
        return TruncatedIntegralSpec.from_log_c(R, 0.0, 0.0, log_c, n)
    return TruncatedIntegralSpec(R, 0.0, 0.0, c, n)


def hypothesis_count(R: int, c: float, n: int) -> float:
    """Volume of {r in [1,R]^n : prod r <= c}; the full cube has (R-1)^n."""
    spec = _volume_spec(R, n, c, None)
    value, _ = m_closed_mp(spec)
    with gmpy2.context(gmpy2.get_context(), precision=_digits_to_bits(START_DIGITS)):
        return float(value * mpfr(R - 1) ** n)


def log10_hypothesis_count(R: int, log_c: float, n: int) -> float:
    """log10 of hypothesis_count with the threshold given as log c."""
    spec = _volume_spec(R, n, None, log_c)
    value, _ = m_closed_mp(spec)
    if value == 0:
        return -math.inf
    return float(gmpy2.log10(value)) + n * math.log10(R - 1)


def split_threshold_log(R: int, k: float, n: int, f_split: float = 1.0) -> float:
    """log c for the cutoff c = (R / h_R(k))^(n * f_split / k)."""
    if k <= 0:
        raise DomainError(f"threshold needs k > 0, got {k}")
    return n * f_split / k * (math.log(R) - log_continuous_h(R, k))


@dataclass(frozen=True)
class RT2Terms:
    head: float
    tail_mass: float
    total: float


def rt2_terms(R: int, k: float, n: int, C1: float = 1.0, C2: float = 1.0) -> RT2Terms:
    """Both terms of the full query bound.

    head = sqrt(h_R(k)^n) * M(R, k, k/2, c*, n) is the advised search cost over
    paths above probability 1/R^n; tail_mass = 1 - M(R, k, k, c*, n) is the
    probability of landing below it, charged sqrt(n) queries.
    """
    if R < 2:
        raise DomainError(f"R must be >= 2, got {R}")
    if not k > 0:
        raise DomainError(f"k must be positive, got {k}")
    log_c = split_threshold_log(R, k, n)
    head_mass = truncated_mass_mp(TruncatedIntegralSpec.from_log_c(R, k, k / 2, log_c, n))
    head_log = float(gmpy2.log(head_mass)) + 0.5 * n * log_continuous_h(R, k) if head_mass > 0 else -math.inf
    head = math.exp(head_log) if head_log < 709 else math.inf
    inside = truncated_mass(TruncatedIntegralSpec.from_log_c(R, k, k, log_c, n))
    tail = max(0.0, 1.0 - inside)
    return RT2Terms(head, tail, C1 * head + C2 * math.sqrt(n) * tail)


def rt2_full(R: int, k: float, n: int, C1: float = 1.0, C2: float = 1.0) -> float:
    """Full query bound C1 * head + C2 * sqrt(n) * tail_mass; see rt2_terms."""
    return rt2_terms(R, k, n, C1, C2).total
