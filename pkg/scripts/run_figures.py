#!/usr/bin/env python3
"""Reproduce the benchmark comparison tables (error-vs-cost, employments, regret).

Runs the 50-worker desk-scale benchmark for all four policies and writes the
figure tables plus summary.json. Use --quick for a reduced setup when smoke
testing.
"""

import argparse
import sys
import time

from banditsgd.harness import benchmark_config, run_comparison


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="results/benchmark", help="output directory")
    parser.add_argument("--seeds", default=None, help="comma-separated seeds (default 0..9)")
    parser.add_argument("--pool-seed", type=int, default=None, help="pin one worker pool across seeds")
    parser.add_argument("--quick", action="store_true", help="small setup for a fast smoke run")
    args = parser.parse_args(argv)

    overrides = {"out_dir": args.out}
    if args.seeds:
        overrides["seeds"] = tuple(int(tok) for tok in args.seeds.split(","))
    if args.pool_seed is not None:
        overrides["pool_seed"] = args.pool_seed
    if args.quick:
        overrides.update(
            n=10, b=4, m=200, d=10,
            schedule="150,350,600,900",
            seeds=overrides.get("seeds", (0, 1, 2)),
        )
    config = benchmark_config(**overrides)

    start = time.time()
    result = run_comparison(config)
    for policy, entry in result["summary"]["policies"].items():
        line = (
            f"{policy:>14}: final_error={entry['final_error_mean']:.4g} "
            f"wall_clock={entry['final_time_mean']:.1f} employments={entry['total_employments']}"
        )
        if "identification_accuracy" in entry:
            line += f" identification={entry['identification_accuracy']:.3f}"
        print(line)
    print(f"done in {time.time() - start:.0f}s -> {config.out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
