"""Rank-frequency profiles of per-frame softmax dumps and power-law fits."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy import stats

from .errors import DomainError, InputFormatError
from .powerlaw import PowerLawSpec

NORMALIZATION_TOLERANCE = 1e-6
WARNING_TOLERANCE = 1e-3
TAIL_FLOOR = 10 * np.finfo(float).eps


@dataclass(frozen=True)
class FrameDump:
    frames: np.ndarray  # (num_frames, num_symbols)
    symbols: tuple[str, ...]
    warnings: int = 0

    def __len__(self) -> int:
        return self.frames.shape[0]


def _validate(rows: list[list[float]], lines: list[int], symbols: tuple[str, ...]) -> FrameDump:
    if not rows:
        raise InputFormatError("dump contains no frames")
    width = len(symbols)
    for row, line in zip(rows, lines):
        if len(row) != width:
            raise InputFormatError(f"frame has {len(row)} entries, expected {width}", line=line)
    frames = np.array(rows, dtype=float)
    warnings = 0
    for i, line in enumerate(lines):
        f = frames[i]
        if not np.all(np.isfinite(f)) or np.any(f < 0):
            raise InputFormatError("probabilities must be finite and nonnegative", line=line)
        total = f.sum()
        if total <= 0:
            raise InputFormatError("frame has zero total mass", line=line)
        if abs(total - 1) > NORMALIZATION_TOLERANCE:
            frames[i] = f / total
            if abs(total - 1) > WARNING_TOLERANCE:
                warnings += 1
    return FrameDump(frames, symbols, warnings)


def _parse_csv(text: str) -> FrameDump:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise InputFormatError("empty file", line=1) from None
    rows, lines = [], []
    for line, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        try:
            rows.append([float(x) for x in row])
        except ValueError as exc:
            raise InputFormatError(str(exc), line=line) from None
        lines.append(line)
    return _validate(rows, lines, tuple(h.strip() for h in header))


def _parse_json(text: str) -> FrameDump:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputFormatError(exc.msg, line=exc.lineno) from None
    if not isinstance(data, dict) or "frames" not in data or "symbols" not in data:
        raise InputFormatError('JSON dump needs "symbols" and "frames" fields')
    frames = data["frames"]
    if not isinstance(frames, list) or not all(isinstance(f, list) for f in frames):
        raise InputFormatError('"frames" must be an array of arrays')
    try:
        rows = [[float(x) for x in f] for f in frames]
    except (TypeError, ValueError) as exc:
        raise InputFormatError(f"non-numeric probability: {exc}") from None
    # frame i is reported as "line" i + 1 for JSON input
    return _validate(rows, list(range(1, len(rows) + 1)), tuple(str(s) for s in data["symbols"]))


def ingest_frames(path: str | Path) -> FrameDump:
    """Read a CSV or JSON frame dump; JSON is detected by extension or leading brace."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputFormatError(f"cannot read {path}: {exc}") from exc
    if str(path).lower().endswith(".json") or text.lstrip().startswith("{"):
        return _parse_json(text)
    return _parse_csv(text)


def frames_to_csv(dump: FrameDump) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(dump.symbols)
    for f in dump.frames:
        w.writerow([repr(float(x)) for x in f])
    return buf.getvalue()


def frames_to_json(dump: FrameDump) -> str:
    return json.dumps({"symbols": list(dump.symbols), "frames": dump.frames.tolist()})


def synthetic_frames(
    R: int, k: float, num_frames: int, rng_seed, mode: str = "exact", draws: int = 1000
) -> FrameDump:
    """Frames whose sorted profile follows PowerLaw(R, k), symbols randomly permuted.

    mode "exact" uses the pmf itself; mode "histogram" uses the empirical
    frequencies of `draws` samples per frame.
    """
    spec = PowerLawSpec(R, k)
    rng = np.random.default_rng(rng_seed)
    if mode == "exact":
        base = np.tile(spec.probabilities, (num_frames, 1))
    elif mode == "histogram":
        cdf = np.cumsum(spec.probabilities)
        cdf[-1] = 1.0
        ranks = np.searchsorted(cdf, rng.random((num_frames, draws)), side="right")
        base = np.zeros((num_frames, R))
        np.add.at(base, (np.repeat(np.arange(num_frames), draws), ranks.ravel()), 1.0)
        base /= draws
    else:
        raise DomainError(f"unknown mode {mode!r}")
    perm = np.argsort(rng.random((num_frames, R)), axis=1)
    frames = np.take_along_axis(base, perm, axis=1)
    return FrameDump(frames, tuple(f"symbol_{i}" for i in range(R)))


def rank_frequency(dump: FrameDump) -> np.ndarray:
    """Mean probability at each rank after sorting every frame in descending order."""
    if len(dump) == 0:
        raise DomainError("empty dump")
    ordered = -np.sort(-dump.frames, axis=1)
    profile = ordered.mean(axis=0)
    # averaging can leave 1-ulp upticks; the profile is nonincreasing by construction
    return np.minimum.accumulate(profile)


def default_rank_range(profile: np.ndarray, tail_cutoff: bool = True) -> tuple[int, int]:
    """[1, R], or up to the last rank whose mean probability stays above TAIL_FLOOR."""
    last = len(profile)
    if tail_cutoff:
        above = np.flatnonzero(profile >= TAIL_FLOOR)
        if above.size:
            last = int(above[-1]) + 1
    return 1, last


def resolvable_rank_range(profile: np.ndarray, draws: int, min_count: float = 5.0) -> tuple[int, int]:
    """Ranks whose mean frequency corresponds to at least `min_count` draws per frame.

    Sorted histograms of few draws are zero-inflated in the tail, which
    steepens any fit that reaches into it.
    """
    above = np.flatnonzero(np.asarray(profile) * draws >= min_count)
    if above.size == 0:
        raise DomainError("no rank reaches the minimum expected count")
    return 1, int(above[-1]) + 1


@dataclass(frozen=True)
class FitResult:
    a: float
    b: float
    stderr_a: float
    stderr_b: float
    r2: float
    rank_range: tuple[int, int]

    def to_json(self) -> str:
        d = asdict(self)
        d["rank_range"] = list(self.rank_range)
        return json.dumps(d, sort_keys=True)


def fit_powerlaw(profile, rank_range: tuple[int, int] | None = None) -> FitResult:
    """Least squares line through (log r, log p): p ~ a * r^-b."""
    profile = np.asarray(profile, dtype=float)
    lo, hi = rank_range if rank_range is not None else (1, len(profile))
    if not 1 <= lo <= hi <= len(profile):
        raise DomainError(f"rank range {(lo, hi)} outside 1..{len(profile)}")
    if hi - lo + 1 < 3:
        raise DomainError("need at least 3 ranks to fit")
    y = profile[lo - 1 : hi]
    if np.any(y <= 0):
        raise DomainError("profile values must be positive within the fitted range")
    x = np.log(np.arange(lo, hi + 1, dtype=float))
    ly = np.log(y)
    if np.ptp(ly) == 0:
        # flat profile: exact zero-slope fit with no residual
        return FitResult(float(y[0]), 0.0, 0.0, 0.0, 1.0, (lo, hi))
    res = stats.linregress(x, ly)
    a = math.exp(res.intercept)
    b = -res.slope + 0.0
    return FitResult(a, b, a * res.intercept_stderr, res.stderr, res.rvalue**2, (lo, hi))
