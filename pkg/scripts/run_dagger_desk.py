#!/usr/bin/env python3
"""Desk-scale distillation run on the built-in synthetic map suites.

Produces model.json and dagger_report.json in the working directory; takes a
few minutes single-threaded.
"""

import argparse
import json
import time

from sidewalksim import suites
from sidewalksim.distill import NORMALIZATION, TrainConfig, dagger_run
from sidewalksim.nets import save_model


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--prefill", type=int, default=20_000)
    parser.add_argument("--rounds", type=int, default=10)
    parser.add_argument("--out", default="model.json")
    parser.add_argument("--report", default="dagger_report.json")
    args = parser.parse_args()

    t0 = time.perf_counter()
    train = suites.training_suite(obs_mode="both", render_bev=False)
    val = suites.validation_suite(obs_mode="realistic")
    config = TrainConfig(seed=args.seed, prefill_count=args.prefill,
                         rounds=args.rounds)
    result = dagger_run(train, val, config,
                        log=lambda m: print(f"[{time.perf_counter() - t0:7.1f}s] {m}",
                                            flush=True))
    save_model(result.net, NORMALIZATION, args.out)
    with open(args.report, "w") as f:
        json.dump(result.report.to_dict(), f, indent=2)
    rep = result.report
    print(f"wrote {args.out} and {args.report}")
    print(f"baseline success {rep.baseline_final['success_rate']:.2f} -> "
          f"student success {rep.best_final['success_rate']:.2f} "
          f"(best round {rep.best_round})")


if __name__ == "__main__":
    main()
