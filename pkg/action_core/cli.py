"""Command-line entry point: gradcheck, cost, synth, train, eval and cam."""

import argparse
import logging
import sys
from typing import Callable, Dict, List, Optional, Sequence

from .config import RunConfig, parse_ints, parse_names
from .errors import ActionKitError
from .facade import ExperimentRunner
from .report import render_json

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2

_names = parse_names
_ints = parse_ints


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None, help="Global seed (default 0).")
    parser.add_argument("--out", default=None, help="Output directory (default runs/).")
    parser.add_argument("--config", default=None, help="TOML or JSON run configuration file.")


def _segments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("-T", "--segments", type=int, default=None, help="Segments per clip (default 8).")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="action_kit",
        description="Multipath temporal excitation toolkit: gradient checks, cost model, synthetic data, training.",
    )
    parser.add_argument("--log-level", default="INFO", help="Logging level for stderr (default INFO).")
    commands = parser.add_subparsers(dest="command", metavar="COMMAND")

    grad = commands.add_parser("gradcheck", help="Finite-difference check of every op and excitation path.")
    _common(grad)
    grad.add_argument("--write", action="store_true", default=None, help="Also write gradcheck.json to --out.")

    cost = commands.add_parser("cost", help="Analytic MACs and parameters of a backbone variant.")
    _common(cost)
    _segments(cost)
    cost.add_argument("--backbone", choices=["resnet50", "mobilenet_v2", "toynet"], default=None)
    cost.add_argument("--variant", type=str.lower, choices=["tsn", "tsm", "ste", "ce", "me", "action"], default=None)
    cost.add_argument("--cls", type=int, default=None, help="Class count (default 83).")
    cost.add_argument("--stages", type=_names, default=None, help="Comma-separated insertion stages.")
    cost.add_argument("--convention", choices=["reported", "strict"], default=None)
    cost.add_argument("--base-top1", type=float, default=None)
    cost.add_argument("--variant-top1", type=float, default=None)
    cost.add_argument("--table3", action="store_true", default=None, help="All six ResNet-50 rows.")
    cost.add_argument("--table4", action="store_true", default=None, help="ResNet-50 and MobileNet V2 rows.")

    synth = commands.add_parser("synth", help="Generate a synthetic reversal-pair dataset.")
    _common(synth)
    synth.add_argument("--n-per-class", type=int, default=None)
    synth.add_argument("--frames", type=int, default=None, help="Raw frames per video.")
    synth.add_argument("--size", type=int, default=None, help="Frame height and width.")
    synth.add_argument("--noise", type=float, default=None)
    synth.add_argument("--split", choices=["train", "val", "test"], default=None)
    synth.add_argument("--channels", type=int, choices=[1, 3], default=None)

    train = commands.add_parser("train", help="Train a ToyNet and write history, weights and summary.")
    _common(train)
    _segments(train)
    train.add_argument("--data", default=None, help="Dataset directory from 'synth' (synthesized if omitted).")
    train.add_argument("--val-data", default=None)
    train.add_argument("--module", choices=["none", "shift", "ste", "ce", "me", "action"], default=None)
    train.add_argument("--widths", type=_ints, default=None, help="Comma-separated stage widths.")
    train.add_argument("--stages", type=_names, default=None)
    train.add_argument("--epochs", type=int, default=None)
    train.add_argument("--lr", type=float, default=None)
    train.add_argument("--lr-decay-epochs", type=_ints, default=None)
    train.add_argument("--batch-size", type=int, default=None)
    train.add_argument("--gate-lr-mult", type=float, default=None, help="Learning-rate multiplier for temporal-module weights (default 1).")
    train.add_argument("--reduce-ratio", type=int, default=None, help="Excitation channel reduction (default 16).")

    evaluate = commands.add_parser("eval", help="Top-1/top-5 of trained weights on a dataset.")
    _common(evaluate)
    _segments(evaluate)
    evaluate.add_argument("--data", default=None)
    evaluate.add_argument("--weights", default=None, help="Weights directory written by 'train'.")

    cam = commands.add_parser("cam", help="Class activation maps for one clip.")
    _common(cam)
    _segments(cam)
    cam.add_argument("--data", default=None)
    cam.add_argument("--weights", default=None)
    cam.add_argument("--index", type=int, default=None, help="Clip index in the dataset (default 0).")
    cam.add_argument("--class", dest="class_index", type=int, default=None, help="Class to explain (default: label).")
    return parser


def _configure_logging(level: str) -> None:
    logging.basicConfig(
        level=getattr(logging, str(level).upper(), logging.INFO),
        stream=sys.stderr,
        format="%(message)s",
        force=True,
    )


def dispatch(argv: Optional[Sequence[str]] = None) -> int:
    """Run one command and return its exit code (0 ok, 1 failed, 2 usage)."""
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE

    _configure_logging(args.log_level)
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config", "log_level")}
    try:
        run = RunConfig.resolve(args.command, flags, args.config)
        runner = ExperimentRunner(run)
        handlers: Dict[str, Callable[[], dict]] = {
            "gradcheck": runner.gradcheck,
            "cost": runner.cost,
            "synth": runner.synth,
            "train": runner.train,
            "eval": runner.evaluate,
            "cam": runner.cam,
        }
        result = handlers[args.command]()
    except ActionKitError as exc:
        print(f"action_kit {args.command}: {exc}", file=sys.stderr)
        return EXIT_FAILED
    sys.stdout.write(render_json(result))
    if args.command == "gradcheck" and not result["passed"]:
        return EXIT_FAILED
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> None:
    sys.exit(dispatch(argv))
