#!/usr/bin/env python3
"""Throughput benchmark across observation modes on the default busy map."""

import argparse

from sidewalksim import suites
from sidewalksim.evaluate import BENCH_MODES, bench


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--steps", type=int, default=5000)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    report = bench(suites.bench_config(), modes=BENCH_MODES,
                   n_steps=args.steps, seed=args.seed)
    rates = report.steps_per_second
    for mode in BENCH_MODES:
        print(f"{mode:16s} {rates[mode]:10.1f} steps/s")
    print(f"lidar_only / full_privileged ratio: "
          f"{rates['lidar_only'] / rates['full_privileged']:.1f}x")


if __name__ == "__main__":
    main()
