"""Command-line front end.

Exit codes: 0 success, 1 domain violation (invalid config, failed policy,
band check), 2 I/O or usage error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config_io import ConfigError, export_thresholds, export_value_tables, load_config, load_scenario
from .model import effective_storage_bounds, validate_config
from .simulator import (
    DEFAULT_POLICIES,
    POLICIES,
    PolicyFailure,
    ScenarioError,
    benchmark_config,
    benchmark_scenario,
    build_tables,
    export_results,
    export_traces,
    monte_carlo,
    run_episode,
    sample_scenario,
)
from .value import ConcavityError, delta_boundaries

EXIT_OK, EXIT_DOMAIN, EXIT_IO = 0, 1, 2
BAND = (0.0, 0.10)
BAND_TOL = 1e-9


class UsageError(Exception):
    pass


def _floats(text: str) -> list[float]:
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("expected at least one number")
    return vals


def _policies(text: str) -> list[str]:
    names = [x.strip() for x in text.split(",") if x.strip()]
    bad = [n for n in names if n not in POLICIES]
    if bad or not names:
        raise argparse.ArgumentTypeError(f"policies must be a subset of {','.join(POLICIES)}; got {text!r}")
    return names


def _inputs(args, need_config=True):
    if args.config is None and need_config:
        raise UsageError("--config is required")
    config = load_config(args.config) if args.config else benchmark_config()
    scenario = load_scenario(args.scenario) if getattr(args, "scenario", None) else None
    return config, scenario


def _require_valid(config) -> None:
    report = validate_config(config)
    if not report.ok:
        print(report)
        raise _DomainError("config violates the model assumptions")


class _DomainError(Exception):
    pass


def cmd_validate(args) -> int:
    config, _ = _inputs(args)
    report = validate_config(config)
    print(report)
    return EXIT_OK if report.ok else EXIT_DOMAIN


def cmd_thresholds(args) -> int:
    config, scenario = _inputs(args)
    if scenario is None:
        raise UsageError("--scenario is required")
    _require_valid(config)
    start = scenario.start_hours[0] if args.start is None else args.start
    model = scenario.scaled(args.scale if args.scale is not None else scenario.scale)
    tables = build_tables(model, config, start, args.grid_spacing)
    vt = tables.myopic if args.mode == "myopic" else tables.storage_free
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    paths = [export_thresholds(vt.thresholds, out / "thresholds.csv"), export_value_tables(vt, out / "values.csv")]
    cfg = tables.config
    if args.y is not None:
        s = cfg.s0 if args.s is None else args.s
        e_dis, e_chg = effective_storage_bounds(s, cfg)
        if args.mode == "storage-free":
            e_dis = e_chg = 0.0
        header = ("t", "delta_plus", "delta_minus", "delta_plus_prime", "delta_1", "delta_2",
                  "delta_3", "delta_4", "delta_minus_prime")
        lines = [",".join(header)]
        for t, row in vt.thresholds.rows():
            b = delta_boundaries(t, args.y, e_dis, e_chg, cfg, row).as_tuple()
            lines.append(",".join([str(t)] + [repr(float(x)) for x in b]))
        path = out / "boundaries.csv"
        path.write_text("\n".join(lines) + "\n")
        paths.append(path)
    th = vt.thresholds
    print(f"{'t':>3} {'period':>6} {'tau':>9} {'delta':>9} {'sigma+':>9} {'sigma-':>9}")
    for t, row in th.rows():
        print(f"{t:>3} {cfg.tariff.period(t):>6} {row.tau:9.4f} {row.delta:9.4f} "
              f"{row.sigma_plus:9.4f} {row.sigma_minus:9.4f}")
    for p in paths:
        print(f"wrote {p}")
    return EXIT_OK


def cmd_benchmark(args) -> int:
    config, scenario = _inputs(args, need_config=False)
    scenario = scenario if scenario is not None else benchmark_scenario()
    _require_valid(config)
    override = {"mpc": args.mpc_runs} if args.mpc_runs is not None else {}
    run = monte_carlo(args.policies, scenario, config, args.runs, seed=args.seed, scales=args.scales,
                      n_override=override, grid_spacing=args.grid_spacing,
                      keep_traces=args.traces, keep_going=True)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written = export_results(run.results, out / "results.csv", run.traces,
                             out / "traces.csv" if args.traces else None)

    print("relative surplus gap to oracle (%)")
    print(f"{'policy':>8} " + " ".join(f"{'x' + format(s, 'g'):>9}" for s in args.scales))
    for p in args.policies:
        cells = []
        for s in args.scales:
            try:
                cells.append(f"{100 * run.get(p, s).gap_to_oracle:9.3f}")
            except KeyError:
                cells.append(f"{'failed':>9}")
        print(f"{p:>8} " + " ".join(cells))
    for p in written:
        print(f"wrote {p}")
    status = EXIT_OK
    for policy, scale, msg in run.failures:
        print(f"FAILED {policy} at scale {scale:g}: {msg}", file=sys.stderr)
        status = EXIT_DOMAIN
    if args.paper_band_check:
        for res in run.results:
            if res.policy == "mo" and not BAND[0] - BAND_TOL <= res.gap_to_oracle <= BAND[1]:
                print(f"band check failed: mo gap {res.gap_to_oracle:.4%} at scale {res.renewable_scale:g} "
                      f"outside [{BAND[0]:.0%}, {BAND[1]:.0%}]", file=sys.stderr)
                status = EXIT_DOMAIN
        if not any(r.policy == "mo" for r in run.results):
            print("band check needs the mo policy", file=sys.stderr)
            status = EXIT_DOMAIN
    return status


def cmd_trace(args) -> int:
    config, scenario = _inputs(args, need_config=False)
    scenario = scenario if scenario is not None else benchmark_scenario()
    _require_valid(config)
    model = scenario.scaled(args.scale if args.scale is not None else scenario.scale)
    traces, cache = [], {}
    for ep in range(args.episode, args.episode + args.runs):
        rz = sample_scenario(model, args.seed, ep, config.T)
        if rz.start not in cache:
            cache[rz.start] = build_tables(model, config, rz.start, args.grid_spacing)
        for p in args.policies:
            traces.append(run_episode(p, rz, config, cache[rz.start]))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = export_traces(traces, out / "traces.csv")
    for tr in traces:
        print(f"episode {tr.episode:>5} {tr.policy:>6}: surplus {tr.surplus:.6f}")
    print(f"wrote {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evnem", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=False):
        p.add_argument("--config", required=config_required, help="household config (JSON)")
        p.add_argument("--grid-spacing", type=float, default=None, help="demand grid spacing in kWh")

    p = sub.add_parser("validate", help="check a config against the model assumptions")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("thresholds", help="export thresholds, value tables and boundary sweeps")
    common(p, config_required=True)
    p.add_argument("--scenario", required=True, help="scenario model (JSON)")
    p.add_argument("--out", default="out")
    p.add_argument("--start", type=int, default=None, help="connection hour (default: first admissible)")
    p.add_argument("--scale", type=float, default=None, help="renewable scale")
    p.add_argument("--mode", choices=("myopic", "storage-free"), default="myopic")
    p.add_argument("--y", type=float, default=None, help="demand level for the boundary sweep")
    p.add_argument("--s", type=float, default=None, help="SoC for the boundary sweep (default s0)")
    p.set_defaults(func=cmd_thresholds)

    p = sub.add_parser("benchmark", help="Monte-Carlo comparison against the oracle")
    common(p)
    p.add_argument("--scenario", default=None, help="scenario model (JSON); built-in synthetic model if omitted")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--runs", type=int, default=10_000)
    p.add_argument("--mpc-runs", type=int, default=200, help="run cap for mpc")
    p.add_argument("--scales", type=_floats, default=[0.5, 1.0, 1.5])
    p.add_argument("--policies", type=_policies, default=list(DEFAULT_POLICIES))
    p.add_argument("--traces", type=int, default=0, help="also write traces of the first N episodes")
    p.add_argument("--out", default="out")
    p.add_argument("--paper-band-check", action="store_true",
                   help="exit 1 if the mo gap leaves [0, 10%%] at any scale")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("trace", help="simulate single episodes and write their traces")
    common(p)
    p.add_argument("--scenario", default=None)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--episode", type=int, default=0, help="first episode index")
    p.add_argument("--runs", type=int, default=1, help="number of consecutive episodes")
    p.add_argument("--scale", type=float, default=None)
    p.add_argument("--policies", type=_policies, default=["mo"])
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_trace)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "runs", 1) < 1:
        parser.error("--runs must be at least 1")
    try:
        return args.func(args)
    except (OSError, ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (_DomainError, ScenarioError, ConcavityError, PolicyFailure) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
