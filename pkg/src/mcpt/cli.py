"""Command-line front end: ``mcpt <experiment> [--config PATH] [--seed N] [--out DIR] ...``.

Each run writes its artifacts plus ``summary.json`` into the output
directory. The summary holds the resolved config, the version string and
the results rounded to six significant digits. Wall-clock timing goes to
``timing.log`` so that the CSV/JSON artifacts stay byte-identical across
re-runs with the same config and seed.

Exit status: 0 when every acceptance check passed, 1 when a check failed,
2 on usage or configuration errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import subprocess
import sys
import time
from pathlib import Path

from . import __version__
from .experiments import DEFAULT_VARIANTS, RECIPES, SEED_MAX, ConfigError, resolve_config

log = logging.getLogger("mcpt")


def version_string() -> str:
    """``git describe`` of the source tree, or the package version outside a checkout."""
    try:
        res = subprocess.run(
            ["git", "describe", "--tags", "--always", "--dirty"],
            cwd=Path(__file__).resolve().parent, capture_output=True, text=True, timeout=10,
        )
    except (OSError, subprocess.SubprocessError):
        return __version__
    if res.returncode != 0 or not res.stdout.strip():
        return __version__
    return f"{__version__}+g{res.stdout.strip()}"


def round_sig(obj, digits: int = 6):
    """Recursively round floats to ``digits`` significant digits."""
    if isinstance(obj, float):
        if not math.isfinite(obj) or obj == 0.0:
            return obj
        return float(f"{obj:.{digits}g}")
    if isinstance(obj, dict):
        return {k: round_sig(v, digits) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [round_sig(v, digits) for v in obj]
    return obj


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"{path}: no such config file")
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}:1:1: config must be a JSON object")
    return data


def _seed(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}") from None
    if not 0 <= value <= SEED_MAX:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return value


def _workers(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("workers must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mcpt", description="MTJ TRNG and Monte Carlo transport experiments")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="experiment", required=True, metavar="experiment")
    for name in RECIPES:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", help="JSON config; unknown keys are rejected")
        p.add_argument("--seed", type=_seed, default=0, help="64-bit root seed (default 0)")
        p.add_argument("--out", default=f"out/{name}", help="output directory")
        p.add_argument("--workers", type=_workers, default=os.cpu_count() or 1,
                       help="worker processes for transport solves (default: CPU count)")
        p.add_argument("--variant", choices=["bidirectional", "unidirectional", "both"],
                       help=f"generator variant(s); default {'/'.join(DEFAULT_VARIANTS[name])}")
    return parser


def run(experiment: str, config: dict, seed: int, out: Path, workers: int = 1,
        variant: str | None = None) -> tuple[dict, bool]:
    """Execute one experiment and write ``summary.json``. Returns (summary, passed)."""
    cfg = resolve_config(experiment, config)
    if variant is None:
        variants = DEFAULT_VARIANTS[experiment]
    elif variant == "both":
        variants = ["bidirectional", "unidirectional"]
    else:
        variants = [variant]
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    outcome = RECIPES[experiment](cfg, seed, out, workers, variants)
    elapsed = time.perf_counter() - start
    summary = {
        "experiment": experiment,
        "version": version_string(),
        "seed": seed,
        "variants": variants,
        "config": cfg,
        "results": outcome.results,
        "checks": outcome.checks,
        "passed": outcome.passed,
        "files": sorted(outcome.files),
    }
    (out / "summary.json").write_text(json.dumps(round_sig(summary), indent=2, sort_keys=True) + "\n")
    with open(out / "timing.log", "a") as fh:
        fh.write(f"{experiment} seed={seed} workers={workers} wall_clock_s={elapsed:.3f}\n")
    return summary, outcome.passed


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
        summary, passed = run(args.experiment, config, args.seed, Path(args.out), args.workers, args.variant)
    except ConfigError as exc:
        print(f"mcpt: config error: {exc}", file=sys.stderr)
        return 2
    for name, ok in summary["checks"].items():
        log.info("%s %s", "PASS" if ok else "FAIL", name)
    log.info("wrote %s", Path(args.out) / "summary.json")
    return 0 if passed else 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
