#!/usr/bin/env python3
"""End-to-end demo: synthesize data, train the engine, train agents, compare.

Runs the desk preset through the CLI so every stage leaves a manifest.
"""

import argparse
import sys
from pathlib import Path

from gridrl.cli import run_command
from gridrl.config import desk_preset, save_config, with_overrides


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="runs/demo")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--episodes", type=int, default=60,
                        help="shortened by default; the acceptance suite runs 200")
    args = parser.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = with_overrides(desk_preset(seed=args.seed), episodes=args.episodes,
                         eval_window=min(20, args.episodes))
    cfg_path = out / "config.json"
    save_config(cfg, cfg_path)

    stages = [
        ["synth-data", "--config", str(cfg_path), "--out", str(out / "data")],
        ["train-lstm", "--config", str(cfg_path), "--out", str(out / "lstm")],
        ["forecast", "--config", str(cfg_path),
         "--model", str(out / "lstm" / "forecaster.json"), "--out", str(out / "fc")],
        ["compare", "--config", str(cfg_path),
         "--scenarios", "fixed,dynamic_lstm", "--out", str(out / "table")],
    ]
    for argv in stages:
        print(f"$ gridrl {' '.join(argv)}")
        code = run_command(argv)
        if code != 0:
            return code
    print(f"done; see {out}/table/scenarios.csv")
    return 0


if __name__ == "__main__":
    sys.exit(main())
