"""Print and save the threshold tables for every connection hour and renewable scale.

Shows how the EV thresholds move with the time left before the deadline and
with the amount of renewable expected.
"""

import argparse
import csv
from pathlib import Path

from evnem.simulator import START_HOURS, benchmark_config, benchmark_scenario, build_tables


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scales", type=float, nargs="+", default=[0.5, 1.0, 1.5])
    ap.add_argument("--mode", choices=("myopic", "storage-free"), default="myopic")
    ap.add_argument("--out", default="out/thresholds.csv")
    args = ap.parse_args()

    cfg, model = benchmark_config(), benchmark_scenario()
    rows = []
    for scale in args.scales:
        for start in START_HOURS:
            tables = build_tables(model.scaled(scale), cfg, start)
            vt = tables.myopic if args.mode == "myopic" else tables.storage_free
            print(f"\nscale {scale:g}, connected at {start}:00 ({args.mode})")
            print(f"{'t':>3} {'period':>6} {'tau':>8} {'delta':>8} {'sigma+':>8} {'sigma-':>8}")
            for t, row in vt.thresholds.rows():
                period = tables.config.tariff.period(t)
                print(f"{t:>3} {period:>6} {row.tau:8.3f} {row.delta:8.3f} {row.sigma_plus:8.3f} "
                      f"{row.sigma_minus:8.3f}")
                rows.append([scale, start, t, period, row.tau, row.delta, row.sigma_plus, row.sigma_minus])

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scale", "start", "t", "period", "tau", "delta", "sigma_plus", "sigma_minus"])
        w.writerows(rows)
    print(f"\nwrote {out}")


if __name__ == "__main__":
    main()
