"""Command-line entry point: ``multibeam --config scenario.ini [--seed N] [--output DIR]``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .scenario import EXIT_CONFIG, PRESETS, ScenarioError, parse_scenario, run


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="multibeam", description=__doc__)
    p.add_argument("--config", type=Path, help="INI scenario file")
    p.add_argument("--preset", choices=sorted(PRESETS), help="override the scenario preset")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.add_argument("--output", type=Path, help="artifact directory (overrides output_dir)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.config is None and args.preset is None:
        print("multibeam: need --config or --preset", file=sys.stderr)
        return EXIT_CONFIG
    try:
        text = args.config.read_text(encoding="utf-8") if args.config else ""
    except OSError as exc:
        print(f"multibeam: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        scenario = parse_scenario(text, preset=args.preset, seed=args.seed, output_dir=args.output)
    except ScenarioError as exc:
        print(f"multibeam: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run(scenario)


if __name__ == "__main__":
    sys.exit(main())
