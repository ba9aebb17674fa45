"""Command line: ``deeptwist run|spectrum|histogram|verify``.

Exit codes: 0 success, 1 verification failed, 2 bad configuration or input
file, 3 numerical failure during a run.
"""

import argparse
import json
import sys

from .distortion import verify_compressed_form
from .exceptions import (
    CheckpointError,
    ConfigError,
    ConvergenceError,
    DomainError,
    IdxFormatError,
    NonFiniteError,
    RankError,
    ShapeError,
)
from .experiment import load_config, report_histogram, report_spectrum, run_experiment
from .nn import load_checkpoint

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

_CONFIG_ERRORS = (ConfigError, CheckpointError, IdxFormatError, DomainError, ShapeError)
_NUMERIC_ERRORS = (NonFiniteError, RankError, ConvergenceError, FloatingPointError)


def _emit(args, report):
    if args.out:
        with open(args.out, "w", newline="") as fh:
            report.to_csv(fh)
    else:
        report.to_csv(sys.stdout)


def cmd_run(args):
    cfg = load_config(args.config)
    results = run_experiment(cfg, log_stream=None if args.quiet else sys.stderr)
    for r in results:
        s = r.summary
        print(f"{r.output_dir}: final_accuracy={s['final_accuracy']:.4f}", end="")
        if s["verification"] is not None:
            print(f" verified={s['verification']['passed']}", end="")
        print()
    return EXIT_OK


def cmd_spectrum(args):
    spectrum = report_spectrum(load_checkpoint(args.checkpoint), args.layer, args.rank)
    _emit(args, spectrum)
    if args.rank is not None:
        print(f"tail_mass_beyond_rank={spectrum.tail_mass!r}", file=sys.stderr)
    return EXIT_OK


def cmd_histogram(args):
    hist = report_histogram(load_checkpoint(args.checkpoint), args.layer, args.bins)
    _emit(args, hist)
    print(f"zeros={hist.zeros} near_zero_fraction={hist.near_zero_fraction()!r}", file=sys.stderr)
    return EXIT_OK


def cmd_verify(args):
    cfg = load_config(args.config, check_paths=False)
    report = verify_compressed_form(load_checkpoint(args.checkpoint), cfg.deeptwist)
    print(json.dumps(report.to_dict(), indent=2))
    return EXIT_OK if report.passed else EXIT_FAILED


def build_parser():
    parser = argparse.ArgumentParser(prog="deeptwist", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="train a configured experiment (or sweep)")
    p.add_argument("config", help="TOML experiment file")
    p.add_argument("-q", "--quiet", action="store_true", help="no progress lines on stderr")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("spectrum", help="singular values of one layer as CSV")
    p.add_argument("checkpoint")
    p.add_argument("--layer", required=True)
    p.add_argument("--rank", type=int, help="also report the energy share beyond this rank")
    p.add_argument("--out", help="write CSV here instead of stdout")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("histogram", help="nonzero-weight histogram of one layer as CSV")
    p.add_argument("checkpoint")
    p.add_argument("--layer", required=True)
    p.add_argument("--bins", type=int, default=50)
    p.add_argument("--out", help="write CSV here instead of stdout")
    p.set_defaults(func=cmd_histogram)

    p = sub.add_parser("verify", help="check a checkpoint is in the compressed form a config asks for")
    p.add_argument("checkpoint")
    p.add_argument("config")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _CONFIG_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _NUMERIC_ERRORS as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
