"""Regenerate the example config and scenario files in scripts/configs/."""

import json
from pathlib import Path

import numpy as np

from evnem.config_io import config_to_dict
from evnem.model import DeviceUtility, HouseholdConfig, TariffSchedule
from evnem.simulator import ON_PEAK_HOURS, START_HOURS, benchmark_config, solar_profile

OUT = Path(__file__).resolve().parent / "configs"


def test_config_a() -> HouseholdConfig:
    """Two off-peak intervals, one device, generous battery."""
    tariff = TariffSchedule.from_lengths(2, 0, 0, pi_off_plus=0.6, pi_off_minus=0.1,
                                         pi_on_plus=0.8, pi_on_minus=0.2)
    return HouseholdConfig(B=10.0, e_chg_max=1.0, e_dis_max=1.0, eta_c=0.9, eta_d=0.9, v_max=1.0,
                           alpha=1.0, beta=0.4, devices=(DeviceUtility(1.0, 0.5, 2.0),),
                           tariff=tariff, s0=5.0, y0=1.5)


def main():
    OUT.mkdir(exist_ok=True)
    write = lambda name, doc: (OUT / name).write_text(json.dumps(doc, indent=2) + "\n")  # noqa: E731
    write("benchmark.json", config_to_dict(benchmark_config()))
    write("test_config_a.json", config_to_dict(test_config_a()))
    broken = config_to_dict(benchmark_config())
    broken["salvage"] = 0.4  # beta/eta_d above the off-peak retail rate
    write("broken_chain.json", broken)

    means = [round(float(m), 6) for m in 4.0 * solar_profile(np.arange(24))]
    write("benchmark_scenario.json", {
        "renewable": {"family": "lognormal", "mean": means, "sd": [round(0.5 * m, 6) for m in means]},
        "ev_demand": {"family": "truncated-normal", "mean": 10.0, "sd": 6.0, "lo": 0.0, "hi": 30.0},
        "start_hours": list(START_HOURS),
        "on_peak": list(ON_PEAK_HOURS),
        "scale": 1.0,
    })
    write("test_config_a_scenario.json", {
        "renewable": [{"family": "point", "value": 0.8}, {"family": "point", "value": 1.2}],
        "ev_demand": {"family": "point", "value": 1.5},
    })

    # Empirical-histogram variant: midday solar from a binned file.
    (OUT / "solar_midday_hist.csv").write_text(
        "lower,upper,weight\n0.0,1.0,0.10\n1.0,2.0,0.20\n2.0,3.0,0.30\n3.0,4.0,0.25\n4.0,5.5,0.15\n"
    )
    per_hour = [{"family": "lognormal", "mean": m, "sd": round(0.5 * m, 6)} for m in means]
    for h in (11, 12, 13):
        per_hour[h] = {"family": "histogram-file", "path": "solar_midday_hist.csv"}
    write("histogram_scenario.json", {
        "renewable": per_hour,
        "ev_demand": {"family": "truncated-normal", "mean": 10.0, "sd": 6.0, "lo": 0.0, "hi": 30.0},
        "start_hours": list(START_HOURS),
        "on_peak": list(ON_PEAK_HOURS),
    })


if __name__ == "__main__":
    main()
