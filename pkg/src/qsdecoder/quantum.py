"""Dense statevector simulation of advised quantum search.

The simulated register is indexed by hypothesis: amplitude q stands for the
basis state that carries path q together with its (classically determined)
score and probability registers. Reflections and phase flips act on this
index space directly, so measurement statistics and oracle-query counts are
those of the full circuit.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .decoder import PathDistribution
from .errors import DomainError, InfeasibleError
from .rng import generator, seed_sequence

GROWTH = 6 / 5
CUTOFF_FACTOR = 3.0

Marked = np.ndarray | Callable[[np.ndarray], np.ndarray]


@dataclass
class AdviceState:
    """Statevector over hypotheses plus the vector it was prepared as."""

    amplitudes: np.ndarray
    scores: np.ndarray
    probs: np.ndarray
    prepared: np.ndarray
    oracle_queries: int = 0

    @property
    def size(self) -> int:
        return len(self.amplitudes)

    def measurement_probs(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def reset(self) -> "AdviceState":
        """Fresh copy in the prepared state, query counter untouched."""
        return replace(self, amplitudes=self.prepared.copy())

    def overlap(self, index: int) -> float:
        """|<x|mu>| for basis state x."""
        return float(abs(self.prepared[index]))


def prepare_advice(dist: PathDistribution, scorer) -> AdviceState:
    """Amplitudes sqrt(p_q); `scorer` is a score array or a callable on paths."""
    probs = dist.probabilities.copy()
    if callable(scorer):
        scores = np.array([float(scorer(tuple(int(t) for t in p))) for p in dist.paths])
    else:
        scores = np.asarray(scorer, dtype=float)
    if scores.shape != probs.shape:
        raise DomainError("scores must align with the distribution's entries")
    return advice_from_arrays(probs, scores)


def advice_from_arrays(probs: np.ndarray, scores: np.ndarray) -> AdviceState:
    probs = np.asarray(probs, dtype=float)
    if probs.ndim != 1 or probs.size == 0:
        raise DomainError("advice needs a nonempty probability vector")
    if np.any(probs < 0) or abs(probs.sum() - 1) > 1e-10:
        raise DomainError("advice probabilities must be nonnegative and sum to 1")
    amp = np.sqrt(probs).astype(complex)
    return AdviceState(amp.copy(), np.asarray(scores, dtype=float).copy(), probs, amp)


def _mask(state: AdviceState, marked: Marked) -> np.ndarray:
    if callable(marked):
        mask = np.asarray(marked(np.arange(state.size)), dtype=bool)
    else:
        mask = np.asarray(marked, dtype=bool)
    if mask.shape != (state.size,):
        raise DomainError("marked set must be a boolean vector over hypotheses")
    return mask


def _iterate_inplace(amp: np.ndarray, prep: np.ndarray, mask: np.ndarray, iterations: int) -> None:
    for _ in range(iterations):
        amp[mask] *= -1
        proj = 2 * np.vdot(prep, amp)
        amp *= -1
        amp += proj * prep


def grover_iterate(state: AdviceState, marked: Marked, iterations: int) -> AdviceState:
    """Apply (2|mu><mu| - I) * (phase flip on marked) `iterations` times.

    Each iteration is one oracle query. Returns a new state.
    """
    if iterations < 0:
        raise DomainError("iterations must be >= 0")
    mask = _mask(state, marked)
    amp = state.amplitudes.copy()
    _iterate_inplace(amp, state.prepared, mask, iterations)
    return replace(state, amplitudes=amp, oracle_queries=state.oracle_queries + iterations)


def _measure(amp: np.ndarray, rng: np.random.Generator) -> int:
    p = np.abs(amp) ** 2
    cdf = np.cumsum(p)
    return int(min(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"), len(p) - 1))


@dataclass(frozen=True)
class ExponentialSearchResult:
    index: int
    queries: int
    found: bool


def exponential_search(state: AdviceState, marked: Marked, rng_seed) -> ExponentialSearchResult:
    """Search with an unknown number of marked items.

    The iteration bound grows by GROWTH after every miss, capped at sqrt(N);
    each attempt restarts from the prepared state with a uniformly random
    iteration count below the bound. Gives up once the spent queries exceed
    ceil(CUTOFF_FACTOR * sqrt(N)).
    """
    rng = generator(rng_seed)
    mask = _mask(state, marked)
    N = state.size
    cap = math.sqrt(N)
    cutoff = math.ceil(CUTOFF_FACTOR * cap)
    bound = 1.0
    spent = 0
    index = 0
    while spent <= cutoff:
        j = int(rng.integers(0, math.ceil(bound)))
        amp = state.prepared.copy()
        _iterate_inplace(amp, state.prepared, mask, j)
        spent += j
        index = _measure(amp, rng)
        if mask[index]:
            return ExponentialSearchResult(index, spent, True)
        if N == 1:
            # the only iteration count is 0, so one measurement settles it
            break
        bound = min(math.ceil(GROWTH * bound), cap)
    return ExponentialSearchResult(index, spent, False)


@dataclass(frozen=True)
class SearchOutcome:
    best_index: int
    best_score: float
    oracle_queries: int
    rounds: int
    success: bool
    # queries spent until the returned optimum was first measured
    queries_to_max: int
    amplification_queries: int = 0


def default_rounds(N: int) -> int:
    return math.ceil(math.log2(max(N, 1))) + 3


def _search_loop(
    state: AdviceState,
    rounds: int,
    seed,
    allowed: np.ndarray,
    start_queries: int = 0,
) -> tuple[int, float, int, int]:
    root = seed_sequence(seed)
    best = -math.inf
    best_index = -1
    queries = start_queries
    to_best = start_queries
    for child in root.spawn(rounds):
        mask = allowed & (state.scores > best)
        res = exponential_search(state, mask, np.random.default_rng(child))
        queries += res.queries
        if res.found and state.scores[res.index] > best:
            best = float(state.scores[res.index])
            best_index = res.index
            to_best = queries
    return best_index, best, queries, to_best


def quantum_search_decode(state: AdviceState, rounds: int | None = None, rng_seed=0) -> SearchOutcome:
    """Advised maximum finding: repeatedly search for a strictly better score."""
    rounds = default_rounds(state.size) if rounds is None else rounds
    if rounds < 1:
        raise DomainError("rounds must be >= 1")
    allowed = np.ones(state.size, dtype=bool)
    idx, best, queries, to_best = _search_loop(state, rounds, rng_seed, allowed)
    top = float(state.scores.max())
    return SearchOutcome(idx, best, queries, rounds, best == top, to_best)


def amplification_rounds(mass: float) -> int:
    """floor(pi / (4 theta)) with sin(theta)^2 = mass.

    The final angle then lies within theta of pi/2, so the amplified
    subspace is measured with probability at least 1 - mass.
    """
    if not 0 < mass <= 1:
        raise DomainError(f"mass must lie in (0, 1], got {mass}")
    if mass >= 1:
        return 0
    return math.floor((math.pi / 4) / math.asin(math.sqrt(mass)))


def retained_mask(state: AdviceState, p0: float) -> np.ndarray:
    return state.probs >= p0


def quantum_beam_decode(
    state: AdviceState, p0: float, rounds: int | None = None, rng_seed=0
) -> SearchOutcome:
    """Prune to hypotheses with p_q >= p0, amplify them, then maximize within them.

    The amplified state serves as advice for the subsequent search. Its
    preparation cost is charged once.
    """
    if not 0 <= p0 <= 1:
        raise DomainError(f"p0 must lie in [0, 1], got {p0}")
    keep = retained_mask(state, p0)
    W = float(state.probs[keep].sum())
    if not keep.any() or W <= 0:
        raise InfeasibleError(f"no hypothesis has probability >= {p0}")
    pre = amplification_rounds(min(W, 1.0)) if not keep.all() else 0
    amp = state.prepared.copy()
    _iterate_inplace(amp, state.prepared, keep, pre)
    amp /= np.linalg.norm(amp)
    amplified = replace(state, amplitudes=amp.copy(), prepared=amp)
    rounds = default_rounds(int(keep.sum())) if rounds is None else rounds
    if rounds < 1:
        raise DomainError("rounds must be >= 1")
    idx, best, queries, to_best = _search_loop(amplified, rounds, rng_seed, keep, start_queries=pre)
    top = float(state.scores[keep].max())
    return SearchOutcome(idx, best, queries, rounds, best == top, to_best, pre)


def _trial(args):
    state, rounds, seed, p0 = args
    if p0 is None:
        return quantum_search_decode(state, rounds, seed)
    return quantum_beam_decode(state, p0, rounds, seed)


def run_trials(
    state: AdviceState,
    trials: int,
    rng_seed=0,
    rounds: int | None = None,
    p0: float | None = None,
    threads: int = 1,
) -> list[SearchOutcome]:
    """Independent decode runs with per-trial child seeds, returned in trial order."""
    seeds = seed_sequence(rng_seed).spawn(trials)
    jobs = [(state, rounds, s, p0) for s in seeds]
    if threads <= 1:
        return [_trial(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(_trial, jobs))


TRIAL_COLUMNS = ("trial", "N", "overlap", "queries", "success", "rounds", "queries_to_max")


def trials_to_csv(state: AdviceState, outcomes: Sequence[SearchOutcome]) -> str:
    """One row per trial followed by a summary row."""
    top = int(np.argmax(state.scores))
    overlap = state.overlap(top)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRIAL_COLUMNS)
    for i, o in enumerate(outcomes):
        w.writerow([i, state.size, f"{overlap:.12g}", o.oracle_queries, int(o.success), o.rounds, o.queries_to_max])
    if outcomes:
        mean_q = sum(o.oracle_queries for o in outcomes) / len(outcomes)
        rate = sum(o.success for o in outcomes) / len(outcomes)
        mean_max = sum(o.queries_to_max for o in outcomes) / len(outcomes)
        w.writerow(["mean", state.size, f"{overlap:.12g}", f"{mean_q:.6g}", f"{rate:.6g}", outcomes[0].rounds, f"{mean_max:.6g}"])
    return buf.getvalue()
