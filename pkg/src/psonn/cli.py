"""Command line entry point.

    psonn train CONFIG
    psonn evaluate CONFIG MODEL_JSON
    psonn sweep CONFIG --epochs 200,500,700
    psonn compare DATASET_CSV --seed N --out DIR

Exit codes: 0 success, 1 usage or config error, 2 data error, 3 training
failure. Diagnostics go to stderr, reports to stdout and the output files.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .config import parse_config
from .errors import ConfigError, PipelineError, PsonnError, TrainingError
from .runner import compare_models, epoch_sweep, evaluate_saved, render_comparison, \
    render_run_report, render_sweep_table, run_experiment

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_TRAINING = 0, 1, 2, 3

log = logging.getLogger("psonn")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _epoch_list(text: str) -> list[int]:
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of integers: {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("at least one epoch value is required")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="psonn", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train and evaluate one configured model")
    p.add_argument("config")

    p = sub.add_parser("evaluate", help="re-evaluate a saved model.json")
    p.add_argument("config")
    p.add_argument("model")

    p = sub.add_parser("sweep", help="PSONN runs over several epoch budgets")
    p.add_argument("config")
    p.add_argument("--epochs", type=_epoch_list, default=[200, 500, 700])
    p.add_argument("--workers", type=int, default=None)

    p = sub.add_parser("compare", help="run all five models and rank them")
    p.add_argument("dataset")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="compare")
    p.add_argument("--workers", type=int, default=None)
    return parser


def _exit_code(exc: Exception) -> int:
    cause = exc.cause if isinstance(exc, PipelineError) else exc
    if isinstance(cause, ConfigError):
        return EXIT_USAGE
    if isinstance(cause, TrainingError) or (
            isinstance(exc, PipelineError) and exc.stage == "train"):
        return EXIT_TRAINING
    return EXIT_DATA


def _dispatch(args) -> None:
    if args.command == "train":
        cfg = parse_config(args.config)
        result = run_experiment(cfg)
        print(render_run_report(result.config, result))
        log.info("wrote %s (%.2fs)", cfg.output_dir, result.duration_s)
    elif args.command == "evaluate":
        cfg = parse_config(args.config)
        result = evaluate_saved(cfg, args.model)
        print(render_run_report(result.config, result))
    elif args.command == "sweep":
        cfg = parse_config(args.config)
        results = epoch_sweep(cfg, args.epochs, workers=args.workers)
        print(render_sweep_table(results))
    elif args.command == "compare":
        rows = compare_models(args.dataset, args.seed, args.out, workers=args.workers)
        print(render_comparison(rows, args.seed))


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        _dispatch(args)
    except (PsonnError, ValueError) as exc:
        print(f"psonn: error: {exc}", file=sys.stderr)
        return _exit_code(exc)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
