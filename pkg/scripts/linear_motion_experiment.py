#!/usr/bin/env python3
"""Desk-scale ablation: how much each forecaster recovers under latency.

Runs a noisy oracle tracker over synthetic linear motion at several simulated
processing costs, scores every mode, and prints an ablation table (DP, AUC,
and percent change against the latency-aware bare baseline).

    python3 scripts/linear_motion_experiment.py [--frames 300] [--seed 48]
"""
from __future__ import annotations

import argparse

from latbench import (
    BoundingBox,
    LatencyModel,
    RunConfig,
    SyntheticTracker,
    run,
)
from latbench.dataset_io import MotionSegment, MotionSpec, synth_sequence
from latbench.metrics import auc, dp, format_delta, improvement_delta, precision_curve, success_curve

MODES = ("offline", "lae_bare", "lae_pre_only", "lae_post_only", "lae_pvt")


def score(seq, mode, cost_s, seed):
    tracker = SyntheticTracker(seq, noise_sigma=1.0, search_radius=40.0, seed=seed)
    cfg = RunConfig(mode=mode, latency=LatencyModel.constant(cost_s), frame_rate=30.0, seed=seed)
    _, paired = run(seq, tracker, cfg)
    return dp(precision_curve(paired, seq)), auc(success_curve(paired, seq))


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--frames", type=int, default=300)
    parser.add_argument("--speed", type=float, default=4.0, help="target speed, px/frame")
    parser.add_argument("--seed", type=int, default=48)
    parser.add_argument(
        "--costs", type=float, nargs="+", default=[2 / 30, 5 / 30, 8 / 30],
        help="simulated per-frame processing times, seconds",
    )
    args = parser.parse_args()

    seq = synth_sequence(
        MotionSpec(
            initial_box=BoundingBox(0, 0, 100, 100),
            segments=(MotionSegment(frames=args.frames - 1, velocity=(args.speed, 0, 0, 0)),),
        )
    )

    for cost in args.costs:
        print(f"\nprocessing cost {cost * 1000:.1f} ms/frame "
              f"(~{cost * 30:.1f} world frames each)")
        print(f"{'mode':<14} {'DP@20':>7} {'AUC':>7} {'dDP%':>8} {'dAUC%':>8}")
        base_dp, base_auc = score(seq, "lae_bare", cost, args.seed)
        for mode in MODES:
            mode_dp, mode_auc = score(seq, mode, cost, args.seed)
            if mode == "lae_bare" or mode == "offline":
                d_dp = d_auc = ""
            else:
                d_dp = format_delta(improvement_delta(base_dp, mode_dp))
                d_auc = format_delta(improvement_delta(base_auc, mode_auc))
            print(f"{mode:<14} {mode_dp:>7.3f} {mode_auc:>7.3f} {d_dp:>8} {d_auc:>8}")


if __name__ == "__main__":
    main()
