"""Deterministic acceptors, path distributions and classical samplers.

Strings are tuples of token indices into the acceptor's alphabet. Path
probabilities are kept as natural logs; linear values are produced on demand.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError, EmptyLanguageError, EnumerationOverflowError, InputFormatError
from .rng import seed_sequence

ENUMERATION_LIMIT = 10**6
KAPPA_PILOT_DRAWS = 1000
_DEAD = -1


class Acceptor:
    """Deterministic finite acceptor. Missing transitions go to an implicit sink."""

    def __init__(
        self,
        states: Sequence[str],
        alphabet: Sequence[str],
        start: str,
        accepting: Iterable[str],
        transitions: Iterable[tuple[str, str, str]],
    ):
        self.states = tuple(str(s) for s in states)
        self.alphabet = tuple(str(a) for a in alphabet)
        if len(set(self.states)) != len(self.states):
            raise DomainError("duplicate state names")
        if len(set(self.alphabet)) != len(self.alphabet):
            raise DomainError("duplicate tokens in alphabet")
        sidx = {s: i for i, s in enumerate(self.states)}
        tidx = {a: i for i, a in enumerate(self.alphabet)}
        if str(start) not in sidx:
            raise DomainError(f"unknown start state {start!r}")
        self.start = sidx[str(start)]
        acc = set()
        for s in accepting:
            if str(s) not in sidx:
                raise DomainError(f"unknown accepting state {s!r}")
            acc.add(sidx[str(s)])
        self.accepting = frozenset(acc)
        delta = np.full((len(self.states), len(self.alphabet)), _DEAD, dtype=np.int64)
        for src, tok, dst in transitions:
            src, tok, dst = str(src), str(tok), str(dst)
            for name, table in ((src, sidx), (dst, sidx)):
                if name not in table:
                    raise DomainError(f"unknown state {name!r} in transition")
            if tok not in tidx:
                raise DomainError(f"unknown token {tok!r} in transition")
            i, a = sidx[src], tidx[tok]
            if delta[i, a] != _DEAD and delta[i, a] != sidx[dst]:
                raise DomainError(f"nondeterministic transition on ({src!r}, {tok!r})")
            delta[i, a] = sidx[dst]
        delta.setflags(write=False)
        self.delta = delta
        self._count_cache: dict[int, list[list[int]]] = {}

    @property
    def num_states(self) -> int:
        return len(self.states)

    @property
    def alphabet_size(self) -> int:
        return len(self.alphabet)

    @classmethod
    def full(cls, R: int) -> "Acceptor":
        """Single-state acceptor of every string over tokens 1..R."""
        tokens = [str(i) for i in range(1, R + 1)]
        return cls(["q"], tokens, "q", ["q"], [("q", t, "q") for t in tokens])

    @classmethod
    def from_strings(cls, strings: Iterable[Sequence[str]], alphabet: Sequence[str]) -> "Acceptor":
        """Trie acceptor for a finite set of equal-length strings."""
        strings = [tuple(str(t) for t in s) for s in strings]
        states = ["root"]
        transitions = []
        children: dict[tuple[str, str], str] = {}
        accepting = set()
        for s in strings:
            node = "root"
            for tok in s:
                key = (node, tok)
                if key not in children:
                    child = f"s{len(states)}"
                    states.append(child)
                    children[key] = child
                    transitions.append((node, tok, child))
                node = children[key]
            accepting.add(node)
        return cls(states, alphabet, "root", accepting, transitions)

    @classmethod
    def from_json(cls, source: str | Path | dict) -> "Acceptor":
        if isinstance(source, dict):
            data = source
        else:
            try:
                data = json.loads(Path(source).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise InputFormatError(f"cannot read acceptor: {exc}") from exc
        try:
            return cls(
                data["states"],
                data["alphabet"],
                data["start"],
                data["accepting"],
                [tuple(t) for t in data["transitions"]],
            )
        except KeyError as exc:
            raise InputFormatError(f"acceptor JSON is missing field {exc}") from exc
        except (TypeError, ValueError) as exc:
            raise InputFormatError(f"invalid acceptor: {exc}") from exc

    def to_json(self) -> dict:
        transitions = [
            [self.states[i], self.alphabet[a], self.states[int(self.delta[i, a])]]
            for i in range(self.num_states)
            for a in range(self.alphabet_size)
            if self.delta[i, a] != _DEAD
        ]
        return {
            "states": list(self.states),
            "start": self.states[self.start],
            "accepting": [self.states[i] for i in sorted(self.accepting)],
            "transitions": transitions,
            "alphabet": list(self.alphabet),
        }

    def run(self, tokens: Sequence[int], state: int | None = None) -> int:
        """State after reading token indices, or -1 once the sink is hit."""
        q = self.start if state is None else state
        for a in tokens:
            if q == _DEAD:
                return _DEAD
            q = int(self.delta[q, a])
        return q

    def counts(self, n: int) -> list[list[int]]:
        """counts[m][q]: accepted strings of length m readable from state q (exact ints)."""
        if n in self._count_cache:
            return self._count_cache[n]
        level = [1 if q in self.accepting else 0 for q in range(self.num_states)]
        table = [level]
        for _ in range(n):
            prev = table[-1]
            level = [
                sum(prev[int(d)] for d in self.delta[q] if d != _DEAD)
                for q in range(self.num_states)
            ]
            table.append(level)
        self._count_cache[n] = table
        return table

    def count_accepted(self, n: int) -> int:
        return self.counts(n)[n][self.start]

    def token_indices(self, tokens: Sequence[str]) -> tuple[int, ...]:
        lookup = {a: i for i, a in enumerate(self.alphabet)}
        try:
            return tuple(lookup[str(t)] for t in tokens)
        except KeyError as exc:
            raise DomainError(f"token {exc} not in alphabet") from exc


@dataclass(frozen=True)
class TokenTable:
    """Per-position token probabilities; row i is the distribution at step i."""

    probs: np.ndarray
    tokens: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        p = np.array(self.probs, dtype=float)
        if p.ndim != 2 or p.shape[0] < 1:
            raise DomainError("token table must be a nonempty 2-D array")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise DomainError("token probabilities must be finite and nonnegative")
        bad = np.flatnonzero(np.abs(p.sum(axis=1) - 1) > 1e-12)
        if bad.size:
            raise DomainError(f"row {int(bad[0])} does not sum to 1")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)
        tokens = tuple(str(t) for t in self.tokens) or tuple(str(i) for i in range(1, p.shape[1] + 1))
        if len(tokens) != p.shape[1]:
            raise DomainError("token names do not match table width")
        object.__setattr__(self, "tokens", tokens)

    @property
    def n(self) -> int:
        return self.probs.shape[0]

    @cached_property
    def log_probs(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.probs)

    @classmethod
    def powerlaw(cls, R: int, k: float, n: int) -> "TokenTable":
        """Every row equal to the rank power law over tokens 1..R."""
        w = np.arange(1, R + 1, dtype=float) ** -k
        row = w / math.fsum(w)
        return cls(np.tile(row, (n, 1)))

    @classmethod
    def from_csv(cls, path: str | Path) -> "TokenTable":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise InputFormatError(f"cannot read token table: {exc}") from exc
        reader = csv.reader(io.StringIO(text))
        try:
            header = next(reader)
        except StopIteration:
            raise InputFormatError("empty token table", line=1) from None
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise InputFormatError(f"expected {len(header)} columns, got {len(row)}", line=lineno)
            try:
                rows.append([float(x) for x in row])
            except ValueError as exc:
                raise InputFormatError(str(exc), line=lineno) from None
        try:
            return cls(np.array(rows), tuple(header))
        except DomainError as exc:
            raise InputFormatError(str(exc)) from exc

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.tokens)
        for row in self.probs:
            w.writerow([repr(float(x)) for x in row])
        return buf.getvalue()


def _check_compatible(acceptor: Acceptor, table: TokenTable) -> None:
    if table.probs.shape[1] != acceptor.alphabet_size:
        raise DomainError(
            f"table has {table.probs.shape[1]} columns but alphabet has {acceptor.alphabet_size} tokens"
        )


@dataclass(frozen=True)
class PathDistribution:
    """Normalized distribution over accepted strings, in lexicographic index order."""

    paths: np.ndarray  # (N, n) token indices
    log_probs: np.ndarray  # normalized natural-log probabilities
    log_normalizer: float  # log of the raw mass of all accepted strings
    alphabet: tuple[str, ...] = field(default=())

    def __len__(self) -> int:
        return len(self.log_probs)

    @cached_property
    def probabilities(self) -> np.ndarray:
        return np.exp(self.log_probs)

    @property
    def entries(self) -> list[tuple[tuple[int, ...], float]]:
        return [(tuple(int(t) for t in p), float(lp)) for p, lp in zip(self.paths, self.log_probs)]

    def index_of(self, path: Sequence[int]) -> int:
        hits = np.flatnonzero(np.all(self.paths == np.asarray(path), axis=1))
        if hits.size == 0:
            raise DomainError(f"path {tuple(path)} is not accepted")
        return int(hits[0])

    def argmax(self) -> int:
        # rows are lexicographic, so the first maximum is the smallest string
        return int(np.argmax(self.log_probs))

    def tokens_of(self, index: int) -> tuple[str, ...]:
        return tuple(self.alphabet[t] for t in self.paths[index])


def enumerate_paths(acceptor: Acceptor, table: TokenTable, limit: int = ENUMERATION_LIMIT) -> PathDistribution:
    """All accepted strings of length table.n with their normalized probabilities."""
    _check_compatible(acceptor, table)
    n = table.n
    total = acceptor.count_accepted(n)
    if total == 0:
        raise EmptyLanguageError(f"no accepted string of length {n}")
    if total > limit:
        raise EnumerationOverflowError(f"{total} accepted strings exceed the limit {limit}")
    counts = acceptor.counts(n)
    S = acceptor.alphabet_size
    states = np.array([acceptor.start])
    logp = np.zeros(1)
    paths = np.zeros((1, 0), dtype=np.int64)
    for i in range(n):
        alive_next = np.array([c > 0 for c in counts[n - i - 1]])
        nxt = acceptor.delta[states]  # (P, S)
        keep = nxt != _DEAD
        keep[keep] = alive_next[nxt[keep]]
        rows, toks = np.nonzero(keep)  # row-major: lexicographic order preserved
        states = nxt[rows, toks]
        logp = logp[rows] + table.log_probs[i, toks]
        paths = np.concatenate([paths[rows], toks[:, None]], axis=1)
    finite = np.isfinite(logp)
    if not finite.any():
        raise EmptyLanguageError("every accepted string has probability zero")
    shift = logp[finite].max()
    log_norm = shift + math.log(math.fsum(np.exp(logp[finite] - shift)))
    return PathDistribution(paths, logp - log_norm, log_norm, acceptor.alphabet)


class UniformSampler:
    """Uniform sampling of accepted strings by backward path counting."""

    def __init__(self, acceptor: Acceptor, n: int):
        self.acceptor = acceptor
        self.n = n
        counts = acceptor.counts(n)
        if counts[n][acceptor.start] == 0:
            raise EmptyLanguageError(f"no accepted string of length {n}")
        Q, S = acceptor.num_states, acceptor.alphabet_size
        # cdf[m][q, a]: probability of choosing a token <= a with m steps left at q
        cdf = np.zeros((n + 1, Q, S))
        for m in range(1, n + 1):
            for q in range(Q):
                total = counts[m][q]
                if total == 0:
                    continue
                running = 0
                for a in range(S):
                    d = int(acceptor.delta[q, a])
                    if d != _DEAD:
                        running += counts[m - 1][d]
                    cdf[m, q, a] = running / total
                cdf[m, q, S - 1] = 1.0
        self._cdf = cdf
        self._counts = counts

    def completions(self, prefix: Sequence[int], count: int, rng: np.random.Generator) -> np.ndarray:
        """`count` uniform accepted strings starting with `prefix`, shape (count, n)."""
        q = self.acceptor.run(prefix)
        m0 = self.n - len(prefix)
        if m0 < 0 or q == _DEAD or self._counts[m0][q] == 0:
            raise EmptyLanguageError(f"prefix {tuple(prefix)} has no accepted completion")
        out = np.empty((count, self.n), dtype=np.int64)
        out[:, : len(prefix)] = prefix
        states = np.full(count, q, dtype=np.int64)
        for pos in range(len(prefix), self.n):
            m = self.n - pos
            u = rng.random(count)
            cdf = self._cdf[m, states]  # (count, S)
            toks = (cdf <= u[:, None]).sum(axis=1)
            toks = np.minimum(toks, self.acceptor.alphabet_size - 1)
            out[:, pos] = toks
            states = self.acceptor.delta[states, toks]
        return out

    def draw(self, rng: np.random.Generator) -> tuple[int, ...]:
        return tuple(int(t) for t in self.completions((), 1, rng)[0])


def uniform_sample(acceptor: Acceptor, n: int, rng_seed) -> tuple[int, ...]:
    """One accepted length-n string, uniformly at random."""
    return UniformSampler(acceptor, n).draw(np.random.default_rng(rng_seed))


def _suffix_mass(acceptor: Acceptor, table: TokenTable) -> tuple[np.ndarray, np.ndarray]:
    """Weighted backward DP, normalized per level.

    mass[i, q] is proportional to the probability mass of accepted suffixes
    read from state q at position i; scale[i] is the log of the factor
    divided out at that level.
    """
    n, Q = table.n, acceptor.num_states
    mass = np.zeros((n + 1, Q))
    scale = np.zeros(n + 1)
    mass[n, list(acceptor.accepting)] = 1.0
    delta = acceptor.delta
    safe = np.maximum(delta, 0)
    for i in range(n - 1, -1, -1):
        nxt = np.where(delta == _DEAD, 0.0, mass[i + 1][safe])
        level = nxt @ table.probs[i]
        top = level.max()
        if top > 0:
            level = level / top
            scale[i] = math.log(top)
        mass[i] = level
    return mass, scale


def biased_conditional_exact(acceptor: Acceptor, table: TokenTable, prefix: Sequence[int]) -> np.ndarray:
    """Exact next-token distribution given a prefix, as a ratio of suffix masses."""
    _check_compatible(acceptor, table)
    i = len(prefix)
    if i >= table.n:
        raise DomainError(f"prefix length {i} leaves no next token (n = {table.n})")
    q = acceptor.run(prefix)
    if q == _DEAD:
        raise EmptyLanguageError(f"prefix {tuple(prefix)} is dead")
    mass, _ = _suffix_mass(acceptor, table)
    row = acceptor.delta[q]
    weights = np.where(row == _DEAD, 0.0, table.probs[i] * mass[i + 1][np.maximum(row, 0)])
    total = weights.sum()
    if total <= 0:
        raise EmptyLanguageError(f"prefix {tuple(prefix)} has no weighted completion")
    return weights / total


def _completion_log_weights(table: TokenTable, samples: np.ndarray) -> np.ndarray:
    return table.log_probs[np.arange(table.n), samples].sum(axis=1)


def biased_conditional_estimate(
    acceptor: Acceptor,
    table: TokenTable,
    prefix: Sequence[int],
    samples: int,
    rng_seed,
    sampler: UniformSampler | None = None,
) -> np.ndarray:
    """Monte-Carlo estimate d_a of the next-token distribution.

    Uniform accepted completions of the prefix are weighted by their path
    probability; d_a is the weighted share of completions whose next token
    is a.
    """
    _check_compatible(acceptor, table)
    if samples < 1:
        raise DomainError(f"samples must be >= 1, got {samples}")
    i = len(prefix)
    if i >= table.n:
        raise DomainError(f"prefix length {i} leaves no next token (n = {table.n})")
    sampler = sampler or UniformSampler(acceptor, table.n)
    rng = np.random.default_rng(rng_seed)
    b = sampler.completions(prefix, samples, rng)
    logw = _completion_log_weights(table, b)
    d = np.zeros(acceptor.alphabet_size)
    finite = np.isfinite(logw)
    if not finite.any():
        # all sampled completions carry zero weight; fall back to counts
        np.add.at(d, b[:, i], 1.0)
        return d / d.sum()
    w = np.exp(logw[finite] - logw[finite].max())
    np.add.at(d, b[finite, i], w)
    return d / d.sum()


def relative_variances(
    acceptor: Acceptor,
    table: TokenTable,
    prefix: Sequence[int],
    rng_seed,
    draws: int = KAPPA_PILOT_DRAWS,
    sampler: UniformSampler | None = None,
) -> np.ndarray:
    """Var(Y_a)/E(Y_a)^2 per next token a from a pilot run; nan where E(Y_a) = 0."""
    sampler = sampler or UniformSampler(acceptor, table.n)
    rng = np.random.default_rng(rng_seed)
    b = sampler.completions(prefix, draws, rng)
    logw = _completion_log_weights(table, b)
    w = np.exp(logw - logw[np.isfinite(logw)].max()) if np.isfinite(logw).any() else np.zeros(draws)
    out = np.full(acceptor.alphabet_size, np.nan)
    nxt = b[:, len(prefix)]
    for a in range(acceptor.alphabet_size):
        y = np.where(nxt == a, w, 0.0)
        mean = y.mean()
        if mean > 0:
            out[a] = y.var(ddof=1) / mean**2 if draws > 1 else 0.0
    return out


def estimate_kappa(
    acceptor: Acceptor,
    table: TokenTable,
    prefixes: Iterable[Sequence[int]] = ((),),
    rng_seed=0,
    draws: int = KAPPA_PILOT_DRAWS,
) -> float:
    """Largest pilot relative variance over the given prefixes and tokens."""
    sampler = UniformSampler(acceptor, table.n)
    seeds = seed_sequence(rng_seed)
    prefixes = list(prefixes)
    best = 0.0
    for prefix, child in zip(prefixes, seeds.spawn(len(prefixes))):
        rv = relative_variances(acceptor, table, prefix, child, draws, sampler)
        if np.isfinite(rv).any():
            best = max(best, float(np.nanmax(rv)))
    return best


def sample_size_bound(relative_variance_kappa: float, n: int, epsilon: float) -> int:
    """Samples per step for relative error epsilon/n by Chebyshev."""
    if not relative_variance_kappa > 0:
        raise DomainError("kappa must be positive")
    if not 0 < epsilon <= 1:
        raise DomainError("epsilon must lie in (0, 1]")
    if n < 1:
        raise DomainError("n must be >= 1")
    raw = relative_variance_kappa * n * n / (epsilon * epsilon)
    nearest = round(raw)
    # 4*100/0.1**2 evaluates to 40000.000000000004; do not round that up
    if abs(raw - nearest) <= 1e-9 * max(1.0, raw):
        return max(1, int(nearest))
    return max(1, math.ceil(raw))


def classical_mlp_baseline(dist: PathDistribution, rng_seed, batch: int = 4096) -> tuple[int, int]:
    """Sample paths until the most likely one appears; returns (its index, draws)."""
    if len(dist) == 0:
        raise EmptyLanguageError("empty distribution")
    top = dist.argmax()
    rng = np.random.default_rng(rng_seed)
    cdf = np.cumsum(dist.probabilities)
    cdf[-1] = 1.0
    drawn = 0
    while True:
        idx = np.searchsorted(cdf, rng.random(batch), side="right")
        hits = np.flatnonzero(idx == top)
        if hits.size:
            return top, drawn + int(hits[0]) + 1
        drawn += batch


def weighted_sample(acceptor: Acceptor, table: TokenTable, count: int, rng_seed) -> np.ndarray:
    """Exact draws from the normalized path distribution by chained conditionals."""
    _check_compatible(acceptor, table)
    if acceptor.count_accepted(table.n) == 0:
        raise EmptyLanguageError(f"no accepted string of length {table.n}")
    mass, _ = _suffix_mass(acceptor, table)
    if mass[0, acceptor.start] <= 0:
        raise EmptyLanguageError("every accepted string has probability zero")
    rng = np.random.default_rng(rng_seed)
    delta = acceptor.delta
    safe = np.maximum(delta, 0)
    out = np.empty((count, table.n), dtype=np.int64)
    states = np.full(count, acceptor.start, dtype=np.int64)
    for i in range(table.n):
        w = np.where(delta[states] == _DEAD, 0.0, table.probs[i] * mass[i + 1][safe[states]])
        cdf = np.cumsum(w, axis=1)
        u = rng.random(count) * cdf[:, -1]
        toks = np.minimum((cdf <= u[:, None]).sum(axis=1), acceptor.alphabet_size - 1)
        out[:, i] = toks
        states = delta[states, toks]
    return out


def estimated_sample(
    acceptor: Acceptor, table: TokenTable, samples_per_step: int, rng_seed
) -> tuple[int, ...]:
    """One string built token by token from Monte-Carlo conditional estimates."""
    sampler = UniformSampler(acceptor, table.n)
    root = seed_sequence(rng_seed)
    est_seeds = root.spawn(table.n)
    rng = np.random.default_rng(root.spawn(1)[0])
    prefix: list[int] = []
    for i in range(table.n):
        d = biased_conditional_estimate(acceptor, table, prefix, samples_per_step, est_seeds[i], sampler)
        prefix.append(int(rng.choice(acceptor.alphabet_size, p=d)))
    return tuple(prefix)
