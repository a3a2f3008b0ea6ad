"""Monte-Carlo comparison of all policies on the synthetic benchmark household.

    python3 scripts/run_benchmark.py --runs 10000 --mpc-runs 200 --out out/benchmark
"""

import argparse
import time
from pathlib import Path

from evnem.simulator import DEFAULT_POLICIES, benchmark_config, benchmark_scenario, export_results, monte_carlo


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--runs", type=int, default=2000)
    ap.add_argument("--mpc-runs", type=int, default=100)
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--scales", type=float, nargs="+", default=[0.5, 1.0, 1.5])
    ap.add_argument("--out", default="out/benchmark")
    args = ap.parse_args()

    tic = time.perf_counter()
    run = monte_carlo(DEFAULT_POLICIES, benchmark_scenario(), benchmark_config(), args.runs, seed=args.seed,
                      scales=args.scales, n_override={"mpc": args.mpc_runs})
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    export_results(run.results, out / "results.csv")

    print(f"{'policy':>7} {'scale':>6} {'runs':>6} {'mean':>10} {'se':>8} {'gap %':>8}")
    for r in run.results:
        print(f"{r.policy:>7} {r.renewable_scale:6.2f} {r.n_runs:6d} {r.mean_surplus:10.4f} "
              f"{r.std_err:8.4f} {100 * r.gap_to_oracle:8.3f}")
    print(f"{time.perf_counter() - tic:.1f}s, wrote {out / 'results.csv'}")


if __name__ == "__main__":
    main()
