"""Run every power-experiment config under scripts/configs.

Each config produces a results/<name>/ directory holding power.json,
power.csv, and the resolved config, exactly as the ``simulate``
subcommand would.  ``--quick`` shrinks iteration counts for a smoke run;
the full settings reproduce the study-scale curves.

Usage:
    python3 scripts/run_power_curves.py [--quick] [--threads T] [--only NAME]
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from repeatr.simulate import ExperimentConfig

CONFIG_DIR = Path(__file__).resolve().parent / "configs"
RESULTS_DIR = Path(__file__).resolve().parent.parent / "results"


def run_one(path: Path, out_dir: Path, threads: int, quick: bool) -> None:
    config = ExperimentConfig.from_toml(path)
    if quick:
        config = ExperimentConfig(
            scenario=config.scenario,
            n_grid=config.n_grid[:2],
            statistics=config.statistics,
            iterations=20,
            B=50,
            alpha=config.alpha,
        )
    started = time.time()
    result = config.run(threads=threads)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "power.json").write_text(result.to_json() + "\n", encoding="utf-8")
    (out_dir / "power.csv").write_text(result.to_csv(), encoding="utf-8")
    (out_dir / "config_resolved.toml").write_text(config.to_toml(), encoding="utf-8")
    print(f"{path.stem}: {len(result.cells)} cells in {time.time() - started:.1f}s -> {out_dir}")


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--quick", action="store_true", help="tiny iteration counts, smoke run")
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--only", help="run a single config by stem, e.g. gaussian_power")
    args = parser.parse_args(argv)

    configs = sorted(CONFIG_DIR.glob("*.toml"))
    if args.only:
        configs = [p for p in configs if p.stem == args.only]
        if not configs:
            print(f"no config named {args.only!r} under {CONFIG_DIR}", file=sys.stderr)
            return 1
    for path in configs:
        run_one(path, RESULTS_DIR / path.stem, args.threads, args.quick)
    return 0


if __name__ == "__main__":
    sys.exit(main())
