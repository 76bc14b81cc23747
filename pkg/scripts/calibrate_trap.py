#!/usr/bin/env python3
"""Sweep the trap-family training regime and report the over-optimism margins.

For each (lr, epochs) candidate this prints, over a seed batch:

* mean post-training expert-step probability for the plain imitation run
  (the regime target is the 0.6-0.9 band),
* greedy and beam@{2,5} accuracy for v_weight 0 and 0.2,
* the fraction of seeds where the v-weighted run's beam@5 is at least the
  plain run's, and the value-gap shrink fraction.

Usage: python scripts/calibrate_trap.py [--seeds 30] [--lr 0.5 --epochs 40,60,80]
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from beamlab.harness import TRAP_INIT, TRAP_PARAMS, ExperimentConfig, run_experiment
from beamlab.model import InitSpec, LogitModel
from beamlab.objectives import TrainConfig
from beamlab.tasks import generate_task
from beamlab.harness import train_run


def expert_step_probability(n_seeds: int, cfg: TrainConfig) -> float:
    """Mean post-training probability of the demonstrated action, over seeds and steps."""
    probs = []
    for seed in range(n_seeds):
        mdp, demos = generate_task("branchy-trap", seed, TRAP_PARAMS)
        model = LogitModel(mdp, InitSpec(cfg.init.scheme, cfg.init.sigma, seed))
        trained, _ = train_run(model, demos, cfg)
        for ctx, action in demos.pairs:
            probs.append(float(trained.policy(ctx)[action]))
    return float(np.mean(probs))


def sweep(n_seeds: int, lrs: list[float], epoch_grid: list[int]) -> None:
    widths = (2, 5)
    header = (
        "lr epochs | p_expert | plain: greedy beam2 beam5 oo5 | boosted: greedy beam2 beam5 oo5 "
        "| b5>=p5 | b2>=p5 | gap_shrink"
    )
    print(header)
    print("-" * len(header))
    for lr in lrs:
        for epochs in epoch_grid:
            sft_cfg = TrainConfig(v_weight=0.0, lr=lr, epochs=epochs, init=TRAP_INIT)
            p_expert = expert_step_probability(n_seeds, sft_cfg)
            cfg = ExperimentConfig(
                family="branchy-trap",
                params=dict(TRAP_PARAMS),
                seeds=tuple(range(n_seeds)),
                train=(
                    sft_cfg,
                    TrainConfig(v_weight=0.2, lr=lr, epochs=epochs, init=TRAP_INIT),
                ),
                widths=widths,
            )
            report = run_experiment(cfg)
            rows = report.rows

            def cell(v_weight: float, width: int):
                return [r for r in rows if r.v_weight == v_weight and r.width == width]

            def acc(v_weight: float, width: int) -> float:
                return float(np.mean([r.beam_accuracy for r in cell(v_weight, width)]))

            def oo(v_weight: float, width: int) -> float:
                return float(np.mean([r.over_optimism_rate for r in cell(v_weight, width)]))

            greedy_plain = float(np.mean([r.greedy_accuracy for r in cell(0.0, 5)]))
            greedy_boosted = float(np.mean([r.greedy_accuracy for r in cell(0.2, 5)]))
            per_seed_ok = np.mean(
                [
                    s.beam_accuracy >= f.beam_accuracy
                    for s, f in zip(cell(0.2, 5), cell(0.0, 5))
                ]
            )
            gap_shrink = np.mean(
                [r.value_gap <= r.value_gap_init for r in cell(0.2, 5)]
            )
            print(
                f"{lr:.2f} {epochs:4d} | {p_expert:.3f} | "
                f"{greedy_plain:.2f} {acc(0.0, 2):.2f} {acc(0.0, 5):.2f} {oo(0.0, 5):.2f} | "
                f"{greedy_boosted:.2f} {acc(0.2, 2):.2f} {acc(0.2, 5):.2f} {oo(0.2, 5):.2f} | "
                f"{per_seed_ok:.2f} | {float(acc(0.2, 2) >= acc(0.0, 5))} | {gap_shrink:.2f}"
            )


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seeds", type=int, default=30)
    parser.add_argument("--lr", default="0.5")
    parser.add_argument("--epochs", default="30,45,60,90,120")
    args = parser.parse_args()
    lrs = [float(x) for x in args.lr.split(",")]
    epoch_grid = [int(x) for x in args.epochs.split(",")]
    sweep(args.seeds, lrs, epoch_grid)
    return 0


if __name__ == "__main__":
    sys.exit(main())
