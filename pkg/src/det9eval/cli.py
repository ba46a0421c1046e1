"""Command-line entry point: evaluate, validate, stats, compare-annotations, gen-fixtures."""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

from det9eval import dataset
from det9eval.errors import Det9Error, EmptyComparison, ParseError, ValidationError
from det9eval.evaluate import evaluate
from det9eval.fixtures import FixtureSpec, write_fixtures
from det9eval.matching import MetricConfig
from det9eval.scoring import FORMATS, compare_annotations, dataset_stats, emit_report

EXIT_OK, EXIT_VALIDATION, EXIT_IO, EXIT_INTERNAL = 0, 1, 2, 3

log = logging.getLogger("det9eval")


def _digest(path) -> str:
    return "sha256:" + hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _metric_config(args) -> MetricConfig:
    default = MetricConfig()
    try:
        return MetricConfig(
            x_max=args.x_max if args.x_max is not None else default.x_max,
            delta_s=args.delta_s if args.delta_s is not None else default.delta_s,
            iou_threshold=args.iou if args.iou is not None else default.iou_threshold,
            ignore_cover_threshold=args.ignore_cover if args.ignore_cover is not None else default.ignore_cover_threshold,
        )
    except ValueError as e:
        raise ValidationError(str(e), field="config") from None


def _workers(args) -> int:
    if args.workers is not None:
        return args.workers
    env = os.environ.get("DET9_WORKERS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValidationError(f"DET9_WORKERS must be an integer, got {env!r}") from None
    return 1


def _write_or_print(text: str, out) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _require(args, *names):
    for n in names:
        if getattr(args, n) is None:
            raise ValidationError(f"--{n.replace('_', '-')} is required for {args.command}")


def cmd_evaluate(args) -> int:
    _require(args, "gt", "pred")
    config = _metric_config(args)
    gt = dataset.parse_ground_truth(args.gt)
    preds = dataset.parse_predictions(args.pred)
    report = evaluate(
        gt, preds, config, workers=_workers(args), inputs={"gt": _digest(args.gt), "pred": _digest(args.pred)}
    )
    text = emit_report(report, args.format)
    if args.out is not None:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    if not config.is_standard:
        log.warning("non-standard metric configuration")
    print(f"mDS={report.mds:.6g} classes={report.n_present} frames={report.n_frames}")
    return EXIT_OK


def cmd_validate(args) -> int:
    if args.gt is None and args.pred is None:
        raise ValidationError("validate needs --gt and/or --pred")
    errors = []
    if args.gt is not None:
        errors += dataset.validate_ground_truth(args.gt)
    if args.pred is not None:
        errors += dataset.validate_predictions(args.pred)
    for e in errors:
        print(f"error: {e}")
    print(f"{len(errors)} errors")
    return EXIT_OK if not errors else EXIT_VALIDATION


def cmd_stats(args) -> int:
    _require(args, "gt")
    config = _metric_config(args)
    stats = dataset_stats(dataset.parse_ground_truth(args.gt), x_max=config.x_max, bin_width=config.delta_s)
    _write_or_print(json.dumps(stats.to_dict(), indent=2, sort_keys=True) + "\n", args.out)
    return EXIT_OK


def cmd_compare(args) -> int:
    _require(args, "gt", "candidate")
    delta = compare_annotations(dataset.parse_ground_truth(args.gt), dataset.parse_ground_truth(args.candidate))
    _write_or_print(json.dumps(delta.to_dict(), indent=2, sort_keys=True) + "\n", args.out)
    return EXIT_OK


def cmd_gen_fixtures(args) -> int:
    _require(args, "out")
    raw = {}
    if args.spec is not None:
        try:
            raw = json.loads(Path(args.spec).read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ParseError(e.msg, path=args.spec, line=e.lineno, column=e.colno) from None
    if args.seed is not None:
        raw["seed"] = args.seed
    try:
        spec = FixtureSpec.from_dict(raw)
    except (TypeError, ValueError) as e:
        raise ValidationError(str(e), field="spec", path=args.spec) from None
    paths = write_fixtures(spec, args.out, _metric_config(args))
    for name, p in paths.items():
        print(f"{name}: {p}")
    return EXIT_OK


COMMANDS = {
    "evaluate": cmd_evaluate,
    "validate": cmd_validate,
    "stats": cmd_stats,
    "compare-annotations": cmd_compare,
    "gen-fixtures": cmd_gen_fixtures,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="det9eval", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--gt", help="ground-truth JSON file (reference set for compare-annotations)")
    common.add_argument("--pred", help="prediction JSON file")
    common.add_argument("--candidate", help="candidate annotation file for compare-annotations")
    common.add_argument("--out", help="output file (directory for gen-fixtures)")
    common.add_argument("--format", choices=FORMATS, default="json")
    common.add_argument("--x-max", type=float, dest="x_max")
    common.add_argument("--delta-s", type=float, dest="delta_s")
    common.add_argument("--iou", type=float)
    common.add_argument("--ignore-cover", type=float, dest="ignore_cover")
    common.add_argument("--workers", type=int, help="frame-level worker processes (default: $DET9_WORKERS or 1)")
    common.add_argument("--seed", type=int)
    common.add_argument("--spec", help="fixture spec JSON for gen-fixtures")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s: %(message)s")
    if args.workers is not None and args.workers < 1:
        print("error: --workers must be at least 1", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        return COMMANDS[args.command](args)
    except (ParseError, ValidationError, EmptyComparison) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except Det9Error as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as e:  # noqa: BLE001
        log.exception("internal error")
        print(f"internal error: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
