"""Command-line entry point: ``damdc --preset fig3-msd --out results/``."""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import kernels
from .algorithms import ALGORITHMS
from .config import PRESETS, ConfigError, load_preset, parse_config
from .harness import run_experiment, write_artifacts
from .network import TopologyError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_IO = 4


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="damdc",
        description="Run diffusion sparse-estimation experiments and write metrics, PSD and report files.")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--config", type=Path, help="JSON experiment file")
    src.add_argument("--preset", choices=PRESETS, help="built-in experiment")
    p.add_argument("--out", type=Path, default=None,
                   help="output directory (default: $DAMDC_OUT or ./damdc-out)")
    p.add_argument("--seed", type=int, help="override the master seed")
    p.add_argument("--runs", type=int, help="override the number of Monte-Carlo runs")
    p.add_argument("--iterations", type=int, help="override the number of iterations")
    p.add_argument("--algorithms", help=f"comma-separated subset of {','.join(ALGORITHMS)}")
    p.add_argument("--workers", type=int, help="worker processes (results do not depend on this)")
    p.add_argument("--backend", choices=["auto", *sorted(kernels.AVAILABLE)], default=None,
                   help="kernel backend for real-valued data")
    p.add_argument("--quiet", action="store_true", help="suppress progress and summary output")
    return p


def _load(args):
    if args.config is not None:
        text = args.config.read_text()
        cfg = parse_config(text)
    else:
        cfg = load_preset(args.preset or "fig3-msd")
    changes = {}
    if args.seed is not None:
        changes["master_seed"] = args.seed
    if args.runs is not None:
        changes["n_runs"] = args.runs
    if args.iterations is not None:
        changes["n_iterations"] = args.iterations
    if args.workers is not None:
        changes["n_workers"] = args.workers
    if args.algorithms:
        changes["algorithm_set"] = tuple(a.strip() for a in args.algorithms.split(",") if a.strip())
    return cfg.replace(**changes) if changes else cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = args.out or Path(os.environ.get("DAMDC_OUT", "damdc-out"))
    try:
        cfg = _load(args)
    except ConfigError as exc:
        for err in exc.errors:
            print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO

    backend = None if args.backend in (None, "auto") else args.backend

    def progress(done, total):
        if not args.quiet and (done == total or done % max(1, total // 10) == 0):
            print(f"  run {done}/{total}", file=sys.stderr)

    try:
        result = run_experiment(cfg, backend=backend, progress=progress)
    except TopologyError as exc:
        print(f"config error: topology: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        write_artifacts(result, out)
    except OSError as exc:
        print(f"cannot write results to {out}: {exc}", file=sys.stderr)
        return EXIT_IO

    if not args.quiet:
        print(f"{cfg.name}: {cfg.n_runs} runs x {cfg.n_iterations} iterations "
              f"({result.backend} kernels) -> {out}")
        for name, entry in result.report["algorithms"].items():
            ss = entry["steady_state_msd_db"]
            ss = "n/a" if ss is None else f"{ss:8.2f} dB"
            print(f"  {name:9s} steady-state MSD {ss}  support recovery "
                  f"{entry['final_support_recovery']}  diverged runs {entry['diverged_runs']}")
    if result.any_diverged:
        print("error: some runs diverged (see report.json)", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
