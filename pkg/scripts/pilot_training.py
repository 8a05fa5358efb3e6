#!/usr/bin/env python3
"""Learning-curve probe on the desk preset: prices, battery behavior, PAR.

Prints smoothed episode metrics during training and an hourly breakdown of
the final day, the view used to calibrate the preset.
"""

import argparse
import sys

import numpy as np


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--episodes", type=int, default=200)
    parser.add_argument("--fixed", action="store_true",
                        help="train against the flat 0.125 $/kWh baseline instead")
    args = parser.parse_args()

    from gridrl.config import desk_preset, with_overrides
    from gridrl.env import build_world, run_training, train_wind_forecaster

    cfg = with_overrides(desk_preset(seed=args.seed), episodes=args.episodes,
                         eval_window=min(50, args.episodes))
    world = build_world(cfg)
    forecaster, fc_metrics = train_wind_forecaster(cfg, world)
    print(f"forecaster held-out rmse: {fc_metrics.get('rmse')}")

    def progress(episode, row):
        if episode % 20 == 19:
            print(f"ep {episode:4d}: profit={row['lse_profit']:9.0f} "
                  f"par={row['par']:.3f} mean_cs={row['mean_cs']:.3f} "
                  f"lsa_return={row['lsa_return']:.1f}")

    schedule = np.full(cfg.steps_per_day, 0.125) if args.fixed else None
    result = run_training(cfg, price_schedule=schedule, world=world,
                          forecaster=forecaster, progress=progress)

    W = cfg.eval_window
    print(f"\nfinal-{W} means: profit={result.metric_series('lse_profit')[-W:].mean():.0f} "
          f"par={result.metric_series('par')[-W:].mean():.4f} "
          f"bill={result.metric_series('mean_bill')[-W:].mean():.3f}")
    log = result.episode_logs[-1]
    cs = log.cs.reshape(24, 4).mean(axis=1)
    act = log.pros_action_eff.mean(axis=0).reshape(24, 4).mean(axis=1)
    load = (log.l_d_kw / 1000.0).reshape(24, 4).mean(axis=1)
    print("\nfinal day by hour (cs $/kWh, mean battery kW, net load MW):")
    for h in range(24):
        print(f"  h{h:02d} cs={cs[h]:.3f} act={act[h]:+.2f} load={load[h]:7.2f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
