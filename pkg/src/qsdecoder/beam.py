"""Probability-cutoff beams on top of advised search: cutoffs, counts and costs.

A beam keeps the paths whose continuous power-law probability exceeds a
cutoff. The cutoff is parameterized by a splitting exponent f through the
product threshold c(f) = (R / h_R(k))^(n f / k): paths with r_1 ... r_n <= c
are retained. f = 1 puts the cutoff at probability R^-n; the whole cube is
retained at f_full = k log R / log(R / h_R(k)).

Everything that grows exponentially in n is reported as log10.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Callable, Iterable

import gmpy2
from scipy.optimize import brentq

from .closed_form import TruncatedIntegralSpec, log10_hypothesis_count, split_threshold_log, truncated_mass_mp
from .errors import DomainError, InfeasibleError
from .powerlaw import log_continuous_h

FSPLIT_LOWER = 1e-6
FSPLIT_XTOL = 1e-6
MODES = ("cutoff", "fsplit", "fraction", "capped")

_LN10 = math.log(10)


def full_fsplit(R: int, k: float) -> float:
    """Splitting exponent at which the threshold reaches R^n (any n)."""
    return k * math.log(R) / (math.log(R) - log_continuous_h(R, k))


def _check(R: int, k: float, n: int) -> None:
    if int(R) != R or R < 2:
        raise DomainError(f"R must be an integer >= 2, got {R}")
    if not k > 0:
        raise DomainError(f"k must be positive, got {k}")
    if int(n) != n or n < 1:
        raise DomainError(f"n must be a positive integer, got {n}")


def log_cutoff_probability(R: int, k: float, n: int, f_split: float) -> float:
    """Natural log of the path probability p0 at the boundary of the beam."""
    return -k * split_threshold_log(R, k, n, f_split) - n * log_continuous_h(R, k)


def fsplit_from_cutoff(R: int, k: float, n: int, p0: float) -> float:
    """Inverse of log_cutoff_probability."""
    if not 0 < p0 <= 1:
        raise DomainError(f"p0 must lie in (0, 1], got {p0}")
    log_c = -(math.log(p0) + n * log_continuous_h(R, k)) / k
    return log_c * k / (n * (math.log(R) - log_continuous_h(R, k)))


def _log_mass(R: int, k1: float, k2: float, log_c: float, n: int) -> float:
    value = truncated_mass_mp(TruncatedIntegralSpec.from_log_c(R, k1, k2, log_c, n))
    return -math.inf if value <= 0 else float(gmpy2.log(value))


def retained_mass(R: int, k: float, n: int, f_split: float) -> float:
    """Probability mass of the paths inside the beam."""
    _check(R, k, n)
    return math.exp(_log_mass(R, k, k, split_threshold_log(R, k, n, f_split), n))


@dataclass(frozen=True)
class BeamConfig:
    """Beam policy. `value` is p0, f_split, a constant retained fraction, or N_max."""

    mode: str
    value: float | Callable[[int], float]
    R: int
    k: float
    n: int

    def __post_init__(self) -> None:
        _check(self.R, self.k, self.n)
        if self.mode not in MODES:
            raise DomainError(f"mode must be one of {MODES}, got {self.mode!r}")
        v = self.parameter()
        if self.mode == "cutoff" and not 0 <= v <= 1:
            raise DomainError(f"p0 must lie in [0, 1], got {v}")
        if self.mode in ("fsplit", "fraction") and not 0 < v <= 1:
            raise DomainError(f"{self.mode} parameter must lie in (0, 1], got {v}")
        if self.mode == "capped" and not v >= 1:
            raise DomainError(f"N_max must be >= 1, got {v}")

    def parameter(self) -> float:
        return float(self.value(self.n)) if callable(self.value) else float(self.value)

    def fsplit(self) -> float:
        v = self.parameter()
        if self.mode == "fsplit":
            return v
        if self.mode == "cutoff":
            return FSPLIT_LOWER if v == 0 else fsplit_from_cutoff(self.R, self.k, self.n, v)
        if self.mode == "fraction":
            return optimize_fsplit(self.R, self.k, self.n, v)
        return capped_point(self.R, self.k, self.n, v).f_split


def optimize_fsplit(R: int, k: float, n: int, C0: float) -> float:
    """Smallest splitting exponent whose beam keeps probability mass >= C0.

    Searches [FSPLIT_LOWER, full_fsplit]; C0 = 1 needs the full cube.
    """
    _check(R, k, n)
    if not 0 < C0 <= 1:
        raise DomainError(f"C0 must lie in (0, 1], got {C0}")
    upper = full_fsplit(R, k)
    if C0 >= 1:
        return upper
    target = math.log(C0)

    def gap(f: float) -> float:
        return _log_mass(R, k, k, split_threshold_log(R, k, n, f), n) - target

    lo_gap = gap(FSPLIT_LOWER)
    if lo_gap >= 0:
        return FSPLIT_LOWER
    if gap(upper) < 0:
        raise InfeasibleError(f"mass {C0} unreachable even with the full cube")
    f = brentq(gap, FSPLIT_LOWER, upper, xtol=FSPLIT_XTOL / 4)
    # step onto the feasible side of the root
    while gap(f) < 0:
        f = min(upper, f + FSPLIT_XTOL / 4)
    return f


def log10_retained_hypotheses(R: int, k: float, n: int, f_split: float) -> float:
    """log10 of the continuous volume of the beam."""
    _check(R, k, n)
    return log10_hypothesis_count(R, split_threshold_log(R, k, n, f_split), n)


def retained_hypotheses(R: int, k: float, n: int, f_split: float) -> float:
    lg = log10_retained_hypotheses(R, k, n, f_split)
    return 10.0**lg if lg < 308 else math.inf


def log10_beam_runtime_bound(R: int, k: float, n: int, f_split: float, g: float) -> float:
    """log10 of g^-1/2 * sqrt(h_R(k)^n) * M(R, k, k/2, c, n)."""
    _check(R, k, n)
    if not 0 < g <= 1:
        raise DomainError(f"retained mass g must lie in (0, 1], got {g}")
    log_c = split_threshold_log(R, k, n, f_split)
    ln = -0.5 * math.log(g) + 0.5 * n * log_continuous_h(R, k) + _log_mass(R, k, k / 2, log_c, n)
    return ln / _LN10


def beam_runtime_bound(R: int, k: float, n: int, f_split: float, g: float) -> float:
    lg = log10_beam_runtime_bound(R, k, n, f_split, g)
    return 10.0**lg if lg < 308 else math.inf


@dataclass(frozen=True)
class SweepRow:
    R: int
    k: float
    n: int
    mode: str
    parameter: float
    log10_N_hyp: float
    log10_runtime: float
    f_split: float
    retained_mass: float
    saturated: bool

    def csv_fields(self) -> list[str]:
        return [
            str(self.R),
            repr(float(self.k)),
            str(self.n),
            self.mode,
            f"{self.parameter:.12g}",
            f"{self.log10_N_hyp:.10f}",
            f"{self.log10_runtime:.10f}",
            f"{self.f_split:.10f}",
        ]


SWEEP_COLUMNS = ("R", "k", "n", "mode", "parameter", "log10_N_hyp", "log10_runtime", "f_split")


def capped_point(R: int, k: float, n: int, N_max: float) -> SweepRow:
    """Beam whose continuous volume is min(N_max, (R-1)^n)."""
    _check(R, k, n)
    if not N_max >= 1:
        raise DomainError(f"N_max must be >= 1, got {N_max}")
    target = math.log10(N_max) if math.isfinite(N_max) else math.inf
    full = n * math.log10(R - 1)
    span = n * math.log(R)
    if target >= full:
        log_c = span
        saturated = False
    else:
        log_c = brentq(
            lambda lc: log10_hypothesis_count(R, lc, n) - target,
            1e-12 * span,
            span,
            xtol=1e-10 * span,
        )
        saturated = True
    f = log_c * k / (n * (math.log(R) - log_continuous_h(R, k)))
    log_g = _log_mass(R, k, k, log_c, n)
    g = math.exp(log_g)
    lrt = (-0.5 * log_g + 0.5 * n * log_continuous_h(R, k) + _log_mass(R, k, k / 2, log_c, n)) / _LN10
    return SweepRow(R, k, n, "capped", N_max, log10_hypothesis_count(R, log_c, n), lrt, f, g, saturated)


def capped_width_sweep(R: int, k: float, N_max: float, n_range: Iterable[int]) -> list[SweepRow]:
    """One capped_point per sequence length."""
    return [capped_point(R, k, int(n), N_max) for n in n_range]


def fraction_point(R: int, k: float, n: int, g: float) -> SweepRow:
    """Beam keeping probability mass g(n), cutoff chosen as large as possible."""
    f = optimize_fsplit(R, k, n, g)
    mass = retained_mass(R, k, n, f)
    return SweepRow(
        R, k, n, "fraction", g,
        log10_retained_hypotheses(R, k, n, f),
        log10_beam_runtime_bound(R, k, n, f, g),
        f, mass, False,
    )


def fsplit_point(R: int, k: float, n: int, f_split: float, g: float | None = None) -> SweepRow:
    """Beam at a given splitting exponent, post-amplified for mass g (default: its own mass)."""
    mass = retained_mass(R, k, n, f_split)
    if g is None:
        g = mass
    return SweepRow(
        R, k, n, "fsplit", f_split,
        log10_retained_hypotheses(R, k, n, f_split),
        log10_beam_runtime_bound(R, k, n, f_split, g),
        f_split, mass, False,
    )


def amplification_rounds(C0: float) -> int:
    """Amplitude amplification steps that lift mass C0 to near one."""
    if not 0 < C0 <= 1:
        raise DomainError(f"C0 must lie in (0, 1], got {C0}")
    if C0 >= 1:
        return 0
    return math.ceil((math.pi / 4) / math.asin(math.sqrt(C0)) - 0.5)


def amplitude_gain(C0: float) -> float:
    """1/sqrt(C0): the amplitude boost the rounds must provide, the scale quoted for round counts."""
    if not 0 < C0 <= 1:
        raise DomainError(f"C0 must lie in (0, 1], got {C0}")
    return 1 / math.sqrt(C0)


def sweep_to_csv(rows: Iterable[SweepRow], header_line: str | None = None) -> str:
    buf = io.StringIO()
    if header_line:
        buf.write(header_line.rstrip("\n") + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for row in rows:
        w.writerow(row.csv_fields())
    return buf.getvalue()
