"""Command-line entry point: `qsdecoder <command> [options]`.

Every command computes its full result before touching the filesystem, then
writes the data file (and the optional figure) atomically.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import re
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .beam import (
    capped_point,
    fraction_point,
    fsplit_from_cutoff,
    fsplit_point,
    sweep_to_csv,
)
from .closed_form import rt2_terms
from .decoder import (
    Acceptor,
    TokenTable,
    UniformSampler,
    enumerate_paths,
    estimated_sample,
    weighted_sample,
)
from .errors import (
    DomainError,
    EmptyLanguageError,
    EnumerationOverflowError,
    InfeasibleError,
    InputFormatError,
    PrecisionExhaustedError,
)
from .quantum import prepare_advice, run_trials, trials_to_csv
from .rankfreq import default_rank_range, fit_powerlaw, frames_to_csv, frames_to_json, ingest_frames, rank_frequency, synthetic_frames
from .runtime import GRID_R_VALUES, RuntimeQuery, exponent_k_grid, log_rt1, log_rt1_continuous, speedup_curves

log = logging.getLogger("qsdecoder")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INFEASIBLE = 3
EXIT_BUDGET = 4
EXIT_INPUT = 5

DEFAULT_MAX_HYPOTHESES = 2**16
FIGURE_SUFFIXES = (".png", ".pdf", ".svg")


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- parsing helpers


def _int_list(text: str) -> list[int]:
    """Comma list and lo:hi[:step] ranges, e.g. "2,3,10:50:10"."""
    out: list[int] = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        if ":" in part:
            bits = [int(b) for b in part.split(":")]
            if len(bits) not in (2, 3):
                raise argparse.ArgumentTypeError(f"bad range {part!r}")
            lo, hi = bits[0], bits[1]
            step = bits[2] if len(bits) == 3 else 1
            if step <= 0 or hi < lo:
                raise argparse.ArgumentTypeError(f"bad range {part!r}")
            out.extend(range(lo, hi + 1, step))
        else:
            out.append(int(part))
    if not out:
        raise argparse.ArgumentTypeError("empty list")
    return out


def _float_list(text: str) -> list[float]:
    try:
        out = [float(p) for p in str(text).split(",") if p.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    if not out:
        raise argparse.ArgumentTypeError("empty list")
    return out


_SCHEDULE = re.compile(r"^\s*n\s*\^\s*(?P<exp>[-+]?[0-9.eE+-]+)\s*$")


def parse_schedule(text: str):
    """A constant ("0.25") or a power of n ("n^-0.5"); returns a callable of n."""
    text = str(text)
    m = _SCHEDULE.match(text)
    if m:
        e = float(m.group("exp"))
        return lambda n: float(n) ** e
    try:
        v = float(text)
    except ValueError:
        raise UsageError(f"cannot parse schedule {text!r}; use a number or n^EXP") from None
    return lambda n: v


def _range_pair(text: str) -> tuple[int, int]:
    try:
        lo, hi = (int(x) for x in str(text).split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO:HI, got {text!r}") from None
    return lo, hi


# ---------------------------------------------------------------- output helpers


# options that do not change the numbers are left out of the metadata
_NON_PARAMS = ("func", "config", "out", "figure", "threads", "command", "subcommands")


def run_params(args: argparse.Namespace) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in _NON_PARAMS}


def metadata_line(command: str, args: argparse.Namespace) -> str:
    return f"# qsdecoder {__version__} {command} " + json.dumps(run_params(args), sort_keys=True, default=str)


def write_atomic(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    target = Path(path)
    fd, tmp = tempfile.mkstemp(dir=target.parent, prefix=f".{target.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.chmod(tmp, 0o666 & ~_umask())
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _umask() -> int:
    mask = os.umask(0)
    os.umask(mask)
    return mask


def _table(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _emit(args, command: str, header, rows, records=None) -> str:
    """CSV with a metadata line, or JSON with a "meta" field when --json is set."""
    if args.json:
        records = records if records is not None else [dict(zip(header, r)) for r in rows]
        meta = {"tool": "qsdecoder", "version": __version__, "command": command, "params": run_params(args)}
        return json.dumps({"meta": meta, "rows": records}, sort_keys=True, default=str) + "\n"
    return metadata_line(command, args) + "\n" + _table(header, rows)


def _pool_map(fn, items, threads: int):
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _fmt(x: float) -> str:
    return repr(float(x))


# ---------------------------------------------------------------- commands


def cmd_curves(args) -> tuple[str, callable]:
    k_values = args.k if args.k is not None else list(exponent_k_grid(args.k_max, args.k_step))
    if any(b <= a for a, b in zip(k_values, k_values[1:])):
        raise UsageError("k grid must be strictly ascending")
    if any(k < 0 for k in k_values):
        raise UsageError("k values must be nonnegative")
    if any(R < 2 for R in args.R):
        raise UsageError("R values must be >= 2")
    rows = _pool_map(lambda R: speedup_curves([R], k_values), args.R, args.threads)
    flat = [r for block in rows for r in block]
    text = _emit(args, "curves", ("R", "k", "f"), [(R, _fmt(k), _fmt(f)) for R, k, f in flat])

    def figure(path):
        from .plotting import plot_curves

        plot_curves(flat, path)

    return text, figure


def _runtime_row(task):
    R, k, n, C1, C2 = task
    q = RuntimeQuery(R, k, n)
    l1 = log_rt1(q) / math.log(10)
    lc = log_rt1_continuous(q) / math.log(10)
    terms = rt2_terms(R, k, n, C1, C2) if k > 0 else None
    rt2 = terms.total if terms else math.nan
    ratio = rt2 / 10**lc if terms else math.nan
    return {"R": R, "k": k, "n": n, "log10_rt1": l1, "log10_rt1_continuous": lc,
            "rt2_full": rt2, "ratio": ratio}


def cmd_runtime(args):
    if any(R < 2 for R in args.R) or any(n < 1 for n in args.n) or any(k < 0 for k in args.k):
        raise UsageError("need R >= 2, n >= 1, k >= 0")
    tasks = [(R, k, n, args.C1, args.C2) for R in args.R for k in args.k for n in args.n]
    records = _pool_map(_runtime_row, tasks, args.threads)
    header = ("R", "k", "n", "log10_rt1", "log10_rt1_continuous", "rt2_full", "ratio")
    rows = [[r["R"], _fmt(r["k"]), r["n"], f"{r['log10_rt1']:.12g}", f"{r['log10_rt1_continuous']:.12g}",
             f"{r['rt2_full']:.12g}", f"{r['ratio']:.12g}"] for r in records]
    text = _emit(args, "runtime", header, rows, records)

    def figure(path):
        from .plotting import plot_runtime

        plot_runtime(records, path)

    return text, figure


def cmd_beam(args):
    if args.R < 2 or args.k <= 0 or any(n < 1 for n in args.n):
        raise UsageError("need R >= 2, k > 0, n >= 1")
    mode = args.mode
    if mode == "capped":
        try:
            n_max = float(args.value)
        except ValueError:
            raise UsageError(f"capped mode needs a number or inf, got {args.value!r}") from None
        task = lambda n: capped_point(args.R, args.k, n, n_max)
    else:
        sched = parse_schedule(args.value)
        if mode == "fraction":
            task = lambda n: fraction_point(args.R, args.k, n, sched(n))
        elif mode == "fsplit":
            task = lambda n: fsplit_point(args.R, args.k, n, sched(n))
        else:
            task = lambda n: fsplit_point(args.R, args.k, n, fsplit_from_cutoff(args.R, args.k, n, sched(n)))
    rows = _pool_map(task, args.n, args.threads)
    if args.json:
        records = [dict(zip(("R", "k", "n", "mode", "parameter", "log10_N_hyp", "log10_runtime", "f_split"),
                            (r.R, r.k, r.n, r.mode, r.parameter, r.log10_N_hyp, r.log10_runtime, r.f_split)))
                   for r in rows]
        text = _emit(args, "beam", (), (), records)
    else:
        text = sweep_to_csv(rows, metadata_line("beam", args))

    def figure(path):
        from .plotting import plot_beam

        plot_beam(rows, path)

    return text, figure


def _load_instance(args):
    if args.acceptor or args.table:
        if not (args.acceptor and args.table):
            raise UsageError("--acceptor and --table go together")
        acceptor = Acceptor.from_json(args.acceptor)
        table = TokenTable.from_csv(args.table)
    else:
        R, k, n = args.powerlaw
        acceptor = Acceptor.full(int(R))
        table = TokenTable.powerlaw(int(R), float(k), int(n))
    return acceptor, table


def _scores(dist, kind: str, seed) -> np.ndarray:
    if kind == "probability":
        return dist.log_probs.copy()
    if kind == "random":
        return np.random.default_rng(seed).permutation(len(dist)).astype(float)
    if kind == "reverse":
        return -dist.log_probs
    raise UsageError(f"unknown score kind {kind!r}")


def cmd_simulate(args):
    if args.trials < 1:
        raise UsageError("trials must be >= 1")
    acceptor, table = _load_instance(args)
    try:
        dist = enumerate_paths(acceptor, table, limit=args.max_hypotheses)
    except EmptyLanguageError as exc:
        raise InfeasibleError(str(exc)) from exc
    root = np.random.SeedSequence(args.seed)
    score_seed, trial_seed = root.spawn(2)
    state = prepare_advice(dist, _scores(dist, args.scores, score_seed))
    outcomes = run_trials(state, args.trials, trial_seed, rounds=args.rounds, p0=args.p0, threads=args.threads)
    if args.json:
        records = [dict(trial=i, N=state.size, queries=o.oracle_queries, success=o.success,
                        rounds=o.rounds, queries_to_max=o.queries_to_max) for i, o in enumerate(outcomes)]
        text = _emit(args, "simulate", (), (), records)
    else:
        text = metadata_line("simulate", args) + "\n" + trials_to_csv(state, outcomes)

    def figure(path):
        from .plotting import plot_trials

        plot_trials(outcomes, state.size, state.overlap(int(np.argmax(state.scores))), path)

    return text, figure


def cmd_fit(args):
    dump = ingest_frames(args.input)
    profile = rank_frequency(dump)
    rr = args.rank_range or default_rank_range(profile, tail_cutoff=not args.no_tail_cutoff)
    fit = fit_powerlaw(profile, rr)
    if dump.warnings:
        log.warning("%d frame(s) renormalized", dump.warnings)
    if args.json:
        text = fit.to_json() + "\n"
    else:
        text = metadata_line("fit", args) + "\n" + _table(
            ("a", "b", "stderr_a", "stderr_b", "r2", "rank_lo", "rank_hi", "renormalized_frames"),
            [[_fmt(fit.a), _fmt(fit.b), _fmt(fit.stderr_a), _fmt(fit.stderr_b), _fmt(fit.r2), rr[0], rr[1], dump.warnings]],
        )

    def figure(path):
        from .plotting import plot_fit

        plot_fit(profile, fit, path)

    return text, figure


def cmd_sample(args):
    if args.count < 0:
        raise UsageError("count must be >= 0")
    if args.kind == "frames":
        R, k = args.frames_powerlaw
        dump = synthetic_frames(int(R), float(k), args.count, args.seed, mode=args.frame_mode, draws=args.draws)
        text = frames_to_json(dump) + "\n" if args.json else frames_to_csv(dump)

        def figure(path):
            from .plotting import plot_fit

            profile = rank_frequency(dump)
            plot_fit(profile, fit_powerlaw(profile, default_rank_range(profile)), path)

        return text, figure

    acceptor, table = _load_instance(args)
    n = table.n
    if args.kind == "uniform":
        strings = UniformSampler(acceptor, n).completions((), args.count, np.random.default_rng(args.seed))
    elif args.kind == "weighted":
        strings = weighted_sample(acceptor, table, args.count, args.seed)
    else:
        seeds = np.random.SeedSequence(args.seed).spawn(args.count)
        strings = np.array(
            _pool_map(lambda s: estimated_sample(acceptor, table, args.samples_per_step, s), seeds, args.threads),
            dtype=np.int64,
        ).reshape(args.count, n)
    rendered = [" ".join(acceptor.alphabet[t] for t in row) for row in strings]
    text = _emit(args, "sample", ("draw", "string"), list(enumerate(rendered)))

    def figure(path):
        from collections import Counter

        from .plotting import plot_counts

        common = Counter(rendered).most_common(20)
        plot_counts([s for s, _ in common], [c for _, c in common], path, xlabel="string")

    return text, figure


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=None, help="output file (default: stdout)")
    common.add_argument("--seed", type=int, default=0, help="root random seed")
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1, help="worker threads")
    common.add_argument("--config", default=None, help="JSON file whose keys mirror the flags")
    common.add_argument("--json", action="store_true", help="emit JSON instead of CSV")
    common.add_argument("--figure", default=None, help="also render a figure to this path (png, pdf, svg)")

    parser = argparse.ArgumentParser(prog="qsdecoder", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("curves", parents=[common], help="runtime exponent f(R, k) on a grid")
    p.add_argument("--R", type=_int_list, default=list(GRID_R_VALUES))
    p.add_argument("--k", type=_float_list, default=None, help="explicit ascending k values")
    p.add_argument("--k-max", type=float, default=10.0)
    p.add_argument("--k-step", type=float, default=0.05)
    p.set_defaults(func=cmd_curves)

    p = sub.add_parser("runtime", parents=[common], help="rt1, continuous rt1 and the full bound against n")
    p.add_argument("--R", type=_int_list, default=[10])
    p.add_argument("--k", type=_float_list, default=[2.0])
    p.add_argument("--n", type=_int_list, default=list(range(1, 41)))
    p.add_argument("--C1", type=float, default=1.0)
    p.add_argument("--C2", type=float, default=1.0)
    p.set_defaults(func=cmd_runtime)

    p = sub.add_parser("beam", parents=[common], help="beam sizes and runtime bounds against n")
    p.add_argument("--R", type=int, default=3)
    p.add_argument("--k", type=float, default=2.91)
    p.add_argument("--n", type=_int_list, default=[500])
    p.add_argument("--mode", choices=("capped", "fraction", "fsplit", "cutoff"), default="capped")
    p.add_argument("--value", default="1e6", help="N_max, or a number / n^EXP schedule for other modes")
    p.set_defaults(func=cmd_beam)

    def instance_flags(p):
        p.add_argument("--acceptor", default=None, help="acceptor JSON")
        p.add_argument("--table", default=None, help="token table CSV")
        p.add_argument("--powerlaw", type=_float_list, default=[3, 2.0, 2], help="R,k,n full tree when no files are given")

    p = sub.add_parser("simulate", parents=[common], help="batches of simulated quantum decoding")
    instance_flags(p)
    p.add_argument("--trials", type=int, default=500)
    p.add_argument("--rounds", type=int, default=None)
    p.add_argument("--p0", type=float, default=None, help="beam cutoff probability")
    p.add_argument("--scores", choices=("probability", "random", "reverse"), default="probability")
    p.add_argument("--max-hypotheses", type=int, default=DEFAULT_MAX_HYPOTHESES)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", parents=[common], help="rank-frequency power-law fit of a frame dump")
    p.add_argument("--input", required=False, default=None, help="CSV or JSON frame dump")
    p.add_argument("--rank-range", type=_range_pair, default=None, help="LO:HI inclusive")
    p.add_argument("--no-tail-cutoff", action="store_true")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("sample", parents=[common], help="draw strings or synthetic frame dumps")
    instance_flags(p)
    p.add_argument("--kind", choices=("uniform", "weighted", "estimated", "frames"), default="uniform")
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--samples-per-step", type=int, default=1000)
    p.add_argument("--frames-powerlaw", type=_float_list, default=[29, 3.03], help="R,k for --kind frames")
    p.add_argument("--frame-mode", choices=("exact", "histogram"), default="exact")
    p.add_argument("--draws", type=int, default=1000)
    p.set_defaults(func=cmd_sample)
    parser.set_defaults(subcommands=sub.choices)
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    """Parse twice so config values act as defaults and explicit flags win."""
    args = parser.parse_args(argv)
    if not args.config:
        return args
    try:
        config = json.loads(Path(args.config).read_text())
    except OSError as exc:
        raise InputFormatError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputFormatError(f"config: {exc.msg}", line=exc.lineno) from exc
    if not isinstance(config, dict):
        raise InputFormatError("config must be a JSON object")
    if config.get("command", args.command) != args.command:
        raise UsageError(f"config is for command {config['command']!r}")
    config.pop("command", None)
    subparser = args.subcommands[args.command]
    by_dest = {a.dest: a for a in subparser._actions}
    unknown = sorted(k for k in (c.replace("-", "_") for c in config) if k not in by_dest or k in ("help", "config"))
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(unknown)}")
    defaults = {}
    for key, value in config.items():
        dest = key.replace("-", "_")
        convert = by_dest[dest].type
        if convert is not None and value is not None and not isinstance(value, bool):
            if convert in (_int_list, _float_list, _range_pair):
                sep = ":" if convert is _range_pair else ","
                value = sep.join(map(str, value)) if isinstance(value, list) else str(value)
            value = convert(value)
        defaults[dest] = value
    subparser.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    # InputFormatError is a ValueError, so it must be caught first
    except InputFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (UsageError, argparse.ArgumentTypeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.command == "fit" and not args.input:
        print("error: fit needs --input", file=sys.stderr)
        return EXIT_USAGE
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    if args.figure and Path(args.figure).suffix.lower() not in FIGURE_SUFFIXES:
        print(f"error: --figure must end in one of {', '.join(FIGURE_SUFFIXES)}", file=sys.stderr)
        return EXIT_USAGE
    try:
        text, figure = args.func(args)
        # the figure goes first so that a rendering failure leaves no data file behind
        if args.figure:
            figure(args.figure)
        write_atomic(args.out, text)
    except (UsageError, DomainError, argparse.ArgumentTypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InfeasibleError, EmptyLanguageError) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (EnumerationOverflowError, PrecisionExhaustedError) as exc:
        print(f"resource budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except InputFormatError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        # unwritable --out or --figure location
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
