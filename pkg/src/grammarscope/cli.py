"""Command-line entry point: ``grammarscope <command> --config run.cfg``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import pipeline
from .config import ConfigError, RunConfig, describe_keys, load_config

LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
EXIT_CODES = {ConfigError: 2, pipeline.DependencyError: 3, FileExistsError: 4}

COMMANDS = {
    "gen-data": "render the synthetic dataset and train/val/test manifests",
    "corrupt": "corrupt half of the val and test splits, writing labels and records",
    "train-cluster": "two-view clustering, merge map and supervised fine-tuning",
    "segment": "predict masks for every split under the configured mask_source",
    "train-syntax": "fit the syntax model on training masks",
    "calibrate": "choose the decision threshold on the corrupted val split",
    "evaluate": "score the corrupted test split and write detection metrics",
    "puzzle": "pick the original among permuted copies of test images",
    "report": "merge result files into one CSV",
}


def _overrides(pairs: list[str]) -> dict[str, str]:
    out = {}
    for p in pairs:
        key, sep, val = p.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {p!r}")
        out[key.strip()] = val
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="grammarscope", description="Patch-grammar anomaly detection on segmentation masks.")
    sub = parser.add_subparsers(dest="command", required=True)
    epilog = "config keys (key=value, one per line; '#' starts a comment):\n" + describe_keys()
    for name, help in COMMANDS.items():
        p = sub.add_parser(name, help=help, description=help, epilog=epilog,
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        p.add_argument("--work", type=Path, default=Path("."), help="work directory (default: .)")
        if name == "report":
            p.add_argument("--config", type=Path, help="unused; accepted for symmetry")
            p.add_argument("--out", type=Path, help="output CSV (default: <work>/report.csv)")
            p.add_argument("results", nargs="*", type=Path, help="result JSON files (default: all under <work>/results)")
            continue
        p.add_argument("--config", type=Path, required=True, help="run configuration file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
        p.add_argument("--jobs", type=int, default=1, help="worker threads for image I/O (default: 1)")
        p.add_argument("--force", action="store_true", help="overwrite existing outputs")
        if name == "corrupt":
            p.add_argument("--split", action="append", choices=["val", "test"], help="splits to corrupt (default: both)")
    return parser


def run(args: argparse.Namespace) -> None:
    work = args.work
    if args.command == "report":
        paths = args.results or sorted((work / "results").glob("*/*.json"))
        if not paths:
            raise pipeline.DependencyError(f"no result files under {work / 'results'}; run `grammarscope evaluate` first")
        out = args.out or work / "report.csv"
        n = pipeline.cmd_report(paths, out)
        print(f"wrote {n} rows to {out}")
        return
    cfg: RunConfig = load_config(args.config).with_overrides(_overrides(args.set))
    jobs = max(1, args.jobs)
    if args.command == "gen-data":
        mans = pipeline.gen_data(cfg, work, args.force)
        print(" ".join(f"{k}={len(v)}" for k, v in mans.items()))
    elif args.command == "corrupt":
        pipeline.cmd_corrupt(cfg, work, tuple(args.split or ("val", "test")), args.force)
        print(f"corrupted {cfg.scenario}")
    elif args.command == "train-cluster":
        pipeline.train_cluster(cfg, work, jobs)
        print(f"models written to {work / 'cluster'}")
    elif args.command == "segment":
        done = pipeline.segment_all(cfg, work, jobs)
        print(f"segmented {len([p for p in done if p.exists()])} manifests")
    elif args.command == "train-syntax":
        hist = pipeline.cmd_train_syntax(cfg, work)
        print(f"final loss {hist[-1]:.6f}" if hist else "no epochs run")
    elif args.command == "calibrate":
        tm = pipeline.cmd_calibrate(cfg, work)
        print(f"tau={tm.tau:.6g} balanced_accuracy={tm.balanced_accuracy:.4f}")
    elif args.command == "evaluate":
        rep = pipeline.cmd_evaluate(cfg, work)
        print(f"accuracy={rep.accuracy:.4f} recall={rep.recall:.4f}")
    elif args.command == "puzzle":
        print(f"puzzle_rate={pipeline.cmd_puzzle(cfg, work):.4f}")


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get("GRAMMARSCOPE_LOG", "error").lower()
    logging.basicConfig(level=LOG_LEVELS.get(level, logging.ERROR), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        run(args)
    except Exception as exc:  # one machine-readable line, nonzero exit
        code = next((c for t, c in EXIT_CODES.items() if isinstance(exc, t)), 1)
        print("error " + json.dumps({"command": args.command, "type": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        if logging.getLogger().isEnabledFor(logging.DEBUG):
            raise
        return code
    return 0


if __name__ == "__main__":
    sys.exit(main())
