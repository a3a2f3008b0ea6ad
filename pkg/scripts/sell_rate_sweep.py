"""How the policy gaps change as the export (sell) rates are scaled down.

Both sell rates are multiplied by a factor in [0, 1]; retail rates, salvage
and penalty stay put, so every point keeps the arbitrage-free ordering.
"""

import argparse
from dataclasses import replace

import numpy as np

from evnem.model import validate_config
from evnem.simulator import benchmark_config, benchmark_scenario, monte_carlo


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--runs", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--factors", type=float, nargs="+", default=[0.25, 0.5, 0.75, 1.0])
    args = ap.parse_args()

    base = benchmark_config()
    policies = ("mo", "cco", "nco", "pr")
    print(f"{'factor':>6} {'pi_off-':>8} {'pi_on-':>8} " + " ".join(f"{p:>8}" for p in policies))
    for k in args.factors:
        tar = replace(base.tariff, pi_off_minus=k * base.tariff.pi_off_minus, pi_on_minus=k * base.tariff.pi_on_minus)
        cfg = replace(base, tariff=tar)
        report = validate_config(cfg)
        if not report.ok:
            print(f"{k:6.2f} skipped: {report}")
            continue
        run = monte_carlo(policies, benchmark_scenario(), cfg, args.runs, seed=args.seed)
        gaps = " ".join(f"{100 * run.get(p).gap_to_oracle:7.3f}%" for p in policies)
        print(f"{k:6.2f} {tar.pi_off_minus:8.3f} {tar.pi_on_minus:8.3f} {gaps}")


if __name__ == "__main__":
    main()
