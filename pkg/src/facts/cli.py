"""Command-line entry point: ``facts <command> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import autodiff as ad
from .config import ForecastConfig
from .errors import FactsError, TrainingDiverged

log = logging.getLogger("facts")


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
        log.info("wrote %s", out)
    else:
        sys.stdout.write(text)


def _dump(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def cmd_train(args) -> int:
    from .pipeline import train
    from .plotting import plot_training

    cfg = ForecastConfig.from_json(args.config)
    ckpt = args.ckpt_out or str(Path(args.config).with_suffix(".ckpt"))
    with ad.precision(32):
        result = train(cfg, ckpt_path=ckpt)
    result.report["checkpoint"] = ckpt
    if args.fig_dir:
        result.report["figures"] = [plot_training(result.history, Path(args.fig_dir) / "training.png")]
    _emit(_dump(result.report), args.out)
    return 0


def cmd_eval(args) -> int:
    from .pipeline import evaluate
    from .plotting import plot_permutation

    cfg = ForecastConfig.from_json(args.config)
    with ad.precision(32):
        report = evaluate(args.ckpt, cfg, permute_seeds=args.permute_seeds, raw_scale=args.raw_scale)
    if args.fig_dir and "permutation" in report:
        report["figures"] = [plot_permutation(report, Path(args.fig_dir) / "permutation.png")]
    _emit(_dump(report), args.out)
    return 0


def cmd_verify(args) -> int:
    from .verify import run_all

    results = run_all(fault=args.inject_fault, echo=print)
    failed = [r.name for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} properties passed")
    return 1 if failed else 0


def cmd_bench(args) -> int:
    from .bench import bench_scan, to_csv
    from .plotting import plot_bench

    rows = bench_scan(args.lengths, B=args.batch, k=args.k, d=args.d, repeats=args.repeats)
    _emit(to_csv(rows), args.out)
    if args.fig_dir:
        log.info("wrote %s", plot_bench(rows, Path(args.fig_dir) / "bench_scan.png"))
    return 0


def cmd_synthetic(args) -> int:
    from .data import synthetic_ar_mixture, write_csv

    write_csv(args.out, synthetic_ar_mixture(args.steps, args.vars, args.seed))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="facts", description="Factor-routed state-space forecasting.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and report test metrics")
    p.add_argument("--config", required=True)
    p.add_argument("--ckpt-out", help="checkpoint path (default: config path with .ckpt)")
    p.add_argument("--out", help="write the JSON report here instead of stdout")
    p.add_argument("--fig-dir", help="also render the training curve into this directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on the test split")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--permute-seeds", type=_ints, default=None, help="e.g. 0,1,2,3,4")
    p.add_argument("--raw-scale", action="store_true", help="metrics on the original data scale")
    p.add_argument("--out")
    p.add_argument("--fig-dir", help="also render the permutation figure into this directory")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("verify", help="run the property suite at 64-bit")
    p.add_argument("--inject-fault", action="store_true", help="break the routers' row-wise contract")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bench-scan", help="time sequential vs parallel scan")
    p.add_argument("--lengths", type=_ints, default=[64, 512, 4096])
    p.add_argument("--batch", type=int, default=8)
    p.add_argument("--k", type=int, default=8)
    p.add_argument("--d", type=int, default=64)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--out")
    p.add_argument("--fig-dir")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("make-synthetic", help="write the seeded AR-mixture dataset as CSV")
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--vars", type=int, default=8)
    p.add_argument("--seed", type=int, default=42)
    p.set_defaults(func=cmd_synthetic)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (FactsError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
