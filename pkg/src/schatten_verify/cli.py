"""Command-line entry point.

    schatten-verify SUBCOMMAND [--config PATH] [--out DIR] [--seed INT] [--max-dim INT]

Subcommands: verify (impurity battery), scale (volume sweep), clip
(coefficient clipping sequence), refine (grid ladder), constants (print the
bound constants). Exit codes: 0 all assertions pass, 1 an assertion failed,
2 config or I/O error. SCHATTEN_THREADS caps worker parallelism.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from importlib import resources

from .errors import ConfigError
from .harness import (
    HarnessConfig,
    StudyResult,
    load_config,
    run_clip,
    run_constants,
    run_refine,
    run_scale,
    run_verify,
    write_report,
)

SUBCOMMANDS = ("verify", "scale", "clip", "refine", "constants")


def default_config_path() -> str:
    return str(resources.files("schatten_verify").joinpath("configs/default.json"))


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="schatten-verify",
        description="Verify resolvent-difference trace-norm bounds on desk-scale grids.",
    )
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", default=None, help="JSON config path (default: bundled)")
    parser.add_argument("--out", default="out", help="output directory for CSV/JSON reports")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--max-dim", type=int, default=None, help="override the dense-dimension cap")
    return parser


_RUNNERS = {
    "verify": run_verify,
    "scale": run_scale,
    "clip": run_clip,
    "refine": run_refine,
}


def run_cli(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = load_config(args.config or default_config_path())
        if args.seed is not None:
            config = dataclasses.replace(config, seed=args.seed)
        if args.max_dim is not None:
            config = dataclasses.replace(config, max_dim=args.max_dim)
        return _execute(args.subcommand, config, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 2


def _execute(subcommand: str, config: HarnessConfig, out_dir: str) -> int:
    if subcommand == "constants":
        lines, extras = run_constants(config)
        os.makedirs(out_dir, exist_ok=True)
        csv_path = os.path.join(out_dir, "constants_report.csv")
        with open(csv_path, "w", encoding="utf-8", newline="\n") as f:
            f.write("\n".join(lines) + "\n")
        summary = {
            "study": "constants",
            "config": config.raw,
            "csv": os.path.basename(csv_path),
            "assertions": [],
            "all_passed": True,
            "extras": extras,
        }
        json_path = os.path.join(out_dir, "constants_summary.json")
        with open(json_path, "w", encoding="utf-8") as f:
            json.dump(summary, f, indent=2, sort_keys=True)
            f.write("\n")
        for line in lines:
            print(line)
        return 0

    result: StudyResult = _RUNNERS[subcommand](config)
    csv_path, json_path = write_report(
        out_dir, subcommand, result.rows, result.assertions, config, result.extras
    )
    failed = [a for a in result.assertions if not a.passed]
    print(f"{subcommand}: {len(result.rows)} rows -> {csv_path}")
    print(f"{subcommand}: {len(result.assertions) - len(failed)}/{len(result.assertions)} assertions passed -> {json_path}")
    for a in failed:
        print(f"FAILED {a.name}: {a.detail}", file=sys.stderr)
    return 0 if not failed else 1


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
