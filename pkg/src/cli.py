"""
Command-line interface for PruferLab.

Results go to stdout (or --out); diagnostics go to stderr. Exit codes: 0 on
success, 2 on invalid arguments, 3 when an enumeration exceeds the cap, 4 on
malformed input data.
"""

import argparse
import json
import logging
import sys
from typing import Callable, Dict, List, Optional, Sequence, TextIO

import numpy as np

from .config import ConfigError, load_settings
from .coupled import CoupledDecoderError
from .enumerator import EnumerationError, TooLarge
from .export import (
    ENUMERATE_COLUMNS,
    EVENT_COLUMNS,
    SIMULATE_COLUMNS,
    SWEEP_COLUMNS,
    ExportError,
    write_table,
    write_trace,
)
from .lab import PruferLab
from .metrics import track_run
from .models.mutation import EVENT_NAMES, InvalidPair, StateMachineMismatch, TraceDetail
from .models.prufer import (
    PruferError,
    PruferFormatError,
    format_prufer,
    parse_entries,
    read_strings,
)
from .models.tree import (
    NotATree,
    SizeMismatch,
    TreeError,
    TreeFormatError,
    format_tree,
    parse_tree,
    read_trees,
)
from .simulation import SimulationError, bimodality, event_rows

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2
EXIT_TOO_LARGE = 3
EXIT_BAD_INPUT = 4


class UsageError(Exception):
    """Raised when flags are individually valid but inconsistent."""
    pass


def exit_code_for(error: BaseException) -> int:
    """Map an error to the exit code of its family."""
    if isinstance(error, TooLarge):
        return EXIT_TOO_LARGE
    if isinstance(error, (TreeFormatError, PruferFormatError, NotATree, SizeMismatch,
                          OSError)):
        return EXIT_BAD_INPUT
    if isinstance(error, StateMachineMismatch):
        return EXIT_INTERNAL
    if isinstance(error, (UsageError, ConfigError, InvalidPair, CoupledDecoderError,
                          PruferError, TreeError, EnumerationError, SimulationError,
                          ExportError, ValueError)):
        return EXIT_USAGE
    return EXIT_INTERNAL


def parse_int_list(text: str) -> List[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def parse_alpha_grid(text: str) -> List[float]:
    """'0.1,0.5,0.9' or an inclusive range 'start:stop:step'."""
    try:
        if ":" in text:
            start, stop, step = (float(t) for t in text.split(":"))
            if step <= 0:
                raise ValueError
            grid = np.arange(start, stop + step / 2, step)
            return [float(round(a, 10)) for a in grid]
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected 'a1,a2,...' or 'start:stop:step', got {text!r}"
        )


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("csv", "json", "xlsx"), default=None,
                        help="output format (default from settings: csv)")
    common.add_argument("--out", default=None, help="write results to this file")
    common.add_argument("--workers", type=int, default=None,
                        help="worker processes (default: PRUFERLAB_WORKERS or 1)")
    common.add_argument("--config", default=None, help="JSON settings file")
    common.add_argument("--metrics-file", default=None,
                        help="write Prometheus metrics in text format to this file")
    common.add_argument("-v", "--verbose", action="count", default=0,
                        help="-v for INFO, -vv for DEBUG logging on stderr")
    return common


def _add_pair_arguments(parser: argparse.ArgumentParser):
    parser.add_argument("--n", type=int, required=True)
    parser.add_argument("--string", default=None, help="entries p1,...,p_{n-2}")
    parser.add_argument("--mu", type=int, default=None, help="mutation position")
    parser.add_argument("--value", type=int, default=None, help="new entry at mu")
    parser.add_argument("--random", action="store_true",
                        help="draw the string, mu and value that are not given")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--detail", choices=[d.value for d in TraceDetail],
                        default=TraceDetail.SUMMARY.value)
    parser.add_argument("--verify", action="store_true",
                        help="recompute the block sizes from scratch at every step")


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(
        prog="pruferlab",
        description="Locality experiments for the Prufer tree code",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    encode = sub.add_parser("encode", parents=[common], help="tree -> P-string")
    source = encode.add_mutually_exclusive_group(required=True)
    source.add_argument("--tree", help="'n; u-v, u-v, ...'")
    source.add_argument("--tree-file", help="file with one tree per line")
    source.add_argument("--random", type=int, metavar="N", help="encode a uniform random tree")
    encode.add_argument("--seed", type=int, default=None)

    decode = sub.add_parser("decode", parents=[common], help="P-string -> tree")
    decode.add_argument("--n", type=int, default=None)
    source = decode.add_mutually_exclusive_group(required=True)
    source.add_argument("--string", help="entries p1,...,p_{n-2} (needs --n)")
    source.add_argument("--string-file", help="file with one 'n; p1,...' per line")

    dist = sub.add_parser("dist", parents=[common], help="distance between two tree files")
    dist.add_argument("--tree-a", required=True)
    dist.add_argument("--tree-b", required=True)

    mutate = sub.add_parser("mutate", parents=[common], help="report on one mutation")
    _add_pair_arguments(mutate)
    mutate.add_argument("--trace", action="store_true", help="also print the trace")

    trace = sub.add_parser("trace", parents=[common], help="coupled decoding trace")
    _add_pair_arguments(trace)

    enumerate_ = sub.add_parser("enumerate", parents=[common], help="exact distribution")
    enumerate_.add_argument("--n", type=int, required=True)
    enumerate_.add_argument("--mu", type=int, default=None, help="omit for the marginal")
    enumerate_.add_argument("--cap", type=int, default=None)
    enumerate_.add_argument("--acknowledge-cost", action="store_true")
    enumerate_.add_argument("--method", choices=("grouped", "coupled"), default="grouped")

    simulate = sub.add_parser("simulate", parents=[common], help="Monte Carlo estimate")
    simulate.add_argument("--n", type=int, required=True)
    grid = simulate.add_mutually_exclusive_group(required=True)
    grid.add_argument("--mu", type=parse_int_list)
    grid.add_argument("--alpha-grid", type=parse_alpha_grid)
    grid.add_argument("--marginal", action="store_true")
    simulate.add_argument("--samples", type=int, default=10_000)
    simulate.add_argument("--seed", type=int, default=0)
    simulate.add_argument("--max-ell", type=int, default=None)
    simulate.add_argument("--no-events", action="store_true",
                          help="skip event flags and use the faster distance-only decode")
    simulate.add_argument("--bimodality", action="store_true",
                          help="print the Delta=1 / middle / large split on stderr")

    sweep = sub.add_parser("sweep", parents=[common], help="p_hat(1) against (1-alpha)^2")
    sweep.add_argument("--n", type=int, required=True)
    sweep.add_argument("--alpha-grid", type=parse_alpha_grid, default=parse_alpha_grid("0.1:0.9:0.1"))
    sweep.add_argument("--samples", type=int, default=10_000)
    sweep.add_argument("--seed", type=int, default=0)

    events = sub.add_parser("events", parents=[common], help="empirical event frequencies")
    events.add_argument("--n", type=int, required=True)
    grid = events.add_mutually_exclusive_group(required=True)
    grid.add_argument("--mu", type=parse_int_list)
    grid.add_argument("--alpha-grid", type=parse_alpha_grid)
    events.add_argument("--samples", type=int, default=10_000)
    events.add_argument("--seed", type=int, default=0)
    return parser


def _require_text_format(args):
    if args.format_given and args.format == "xlsx":
        raise ExportError(f"{args.command} writes text; --format xlsx is only for tables and traces")


def _text_out(args, text: str, stdout: TextIO):
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            f.write(text)
    else:
        stdout.write(text)


def _pair_from_args(lab: PruferLab, args):
    string = parse_entries(args.n, args.string) if args.string is not None else None
    if not args.random:
        missing = [flag for flag, v in (("--string", string), ("--mu", args.mu),
                                        ("--value", args.value)) if v is None]
        if missing:
            raise UsageError(f"{', '.join(missing)} required unless --random is given")
    return lab.make_pair(args.n, string, args.mu, args.value, args.seed)


def cmd_encode(lab: PruferLab, args, stdout: TextIO):
    _require_text_format(args)
    if args.tree is not None:
        trees = [parse_tree(args.tree)]
    elif args.tree_file is not None:
        trees = read_trees(args.tree_file)
    else:
        trees = [lab.random_tree(args.random, args.seed)]
    _text_out(args, "".join(format_prufer(lab.encode(t)) + "\n" for t in trees), stdout)


def cmd_decode(lab: PruferLab, args, stdout: TextIO):
    _require_text_format(args)
    if args.string is not None:
        if args.n is None:
            raise UsageError("--string needs --n")
        strings = [parse_entries(args.n, args.string)]
    else:
        strings = read_strings(args.string_file)
    _text_out(args, "".join(format_tree(lab.decode(s)) + "\n" for s in strings), stdout)


def cmd_dist(lab: PruferLab, args, stdout: TextIO):
    _require_text_format(args)
    trees_a = read_trees(args.tree_a)
    trees_b = read_trees(args.tree_b)
    if len(trees_a) != len(trees_b):
        raise SizeMismatch(f"{args.tree_a} holds {len(trees_a)} trees, {args.tree_b} holds {len(trees_b)}")
    _text_out(args, "".join(f"{lab.distance(a, b)}\n" for a, b in zip(trees_a, trees_b)), stdout)


def _flag_text(value: bool) -> str:
    return "true" if value else "false"


def cmd_mutate(lab: PruferLab, args, stdout: TextIO):
    _require_text_format(args)
    report = lab.mutate(_pair_from_args(lab, args), args.detail, args.verify)
    pair, trace = report.pair, report.trace
    if args.format == "json":
        body = {
            "n": pair.n, "mu": pair.mu, "value": pair.value,
            "string": format_prufer(pair.original), "mutant": format_prufer(pair.mutant),
            "tree": format_tree(report.tree), "tree_star": format_tree(report.tree_star),
            "delta": report.delta,
            **{k: v for k, v in trace.header().items() if k in EVENT_NAMES},
        }
        text = json.dumps(body) + "\n"
    else:
        flags = trace.flags.as_dict()
        text = (
            f"P  = {format_prufer(pair.original)}\n"
            f"P* = {format_prufer(pair.mutant)}\n"
            f"T  = {format_tree(report.tree)}\n"
            f"T* = {format_tree(report.tree_star)}\n"
            f"mu={pair.mu} p_mu={pair.original[pair.mu]} p*_mu={pair.value}\n"
            f"delta={report.delta}\n"
            + " ".join(f"{name}={_flag_text(hit)}" for name, hit in flags.items()) + "\n"
            + f"tau0={trace.tau0} tau_delta={trace.tau_delta}\n"
        )
    _text_out(args, text, stdout)
    if args.trace:
        write_trace(trace, "json", stream=stdout)


def cmd_trace(lab: PruferLab, args, stdout: TextIO):
    trace = lab.trace(_pair_from_args(lab, args), args.detail, args.verify)
    fmt = args.format if args.format_given else "json"
    write_trace(trace, fmt, out=args.out, stream=stdout)


def cmd_enumerate(lab: PruferLab, args, stdout: TextIO):
    dist = lab.enumerate(args.n, args.mu, args.acknowledge_cost, args.method, args.cap)
    if dist.event_e_violations:
        raise StateMachineMismatch(f"{dist.event_e_violations} pairs in event E have Delta != 1")
    write_table(dist.to_rows(), ENUMERATE_COLUMNS, args.format, args.out, stdout)


def cmd_simulate(lab: PruferLab, args, stdout: TextIO):
    events = not args.no_events
    if args.marginal:
        estimates = [lab.marginal(args.n, args.samples, args.seed, events, args.max_ell)]
    else:
        estimates = lab.simulate(args.n, args.mu or (), args.alpha_grid or (), args.samples,
                                 args.seed, events, args.max_ell)
    rows = [row for estimate in estimates for row in estimate.to_rows()]
    write_table(rows, SIMULATE_COLUMNS, args.format, args.out, stdout)
    if args.bimodality:
        for estimate in estimates:
            split = bimodality(estimate)
            print(f"mu={estimate.mu} P(D=1)={split['p_one']:.4f} "
                  f"P(2<=D<{split['threshold']})={split['p_middle']:.4f} "
                  f"P(D>={split['threshold']})={split['p_large']:.4f}", file=sys.stderr)


def cmd_sweep(lab: PruferLab, args, stdout: TextIO):
    rows = lab.sweep(args.n, args.alpha_grid, args.samples, args.seed)
    write_table(rows, SWEEP_COLUMNS, args.format, args.out, stdout)


def cmd_events(lab: PruferLab, args, stdout: TextIO):
    estimates = lab.simulate(args.n, args.mu or (), args.alpha_grid or (), args.samples,
                             args.seed, events=True)
    rows = [row for estimate in estimates for row in event_rows(estimate)]
    write_table(rows, EVENT_COLUMNS, args.format, args.out, stdout)


COMMANDS: Dict[str, Callable] = {
    "encode": cmd_encode,
    "decode": cmd_decode,
    "dist": cmd_dist,
    "mutate": cmd_mutate,
    "trace": cmd_trace,
    "enumerate": cmd_enumerate,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "events": cmd_events,
}


def _configure_logging(level: str, verbose: int):
    if verbose >= 2:
        level = "DEBUG"
    elif verbose == 1:
        level = "INFO"
    logging.basicConfig(level=level, stream=sys.stderr,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s", force=True)


def run(argv: Optional[Sequence[str]] = None, stdout: Optional[TextIO] = None) -> int:
    """
    Parse argv, run one subcommand and return the exit code.

    Every failure is reported as a single line on stderr.
    """
    stdout = stdout or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE

    try:
        settings = load_settings(args.config, overrides={"workers": args.workers})
        args.format_given = args.format is not None
        if args.format is None:
            args.format = settings.output_format
        _configure_logging(settings.log_level, args.verbose)
        with PruferLab(settings, args.metrics_file) as lab:
            with track_run(args.command):
                COMMANDS[args.command](lab, args, stdout)
    except Exception as e:
        code = exit_code_for(e)
        if code == EXIT_INTERNAL:
            logger.debug("Unhandled error", exc_info=True)
        print(f"❌ {type(e).__name__}: {e}", file=sys.stderr)
        return code
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
