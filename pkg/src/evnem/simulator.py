"""Scenario sampling, episode roll-out and Monte-Carlo policy comparison.

Every episode draws ``T + 2`` uniforms from a Philox stream keyed by
``SeedSequence([seed, episode_index])``: the connection hour, the EV demand
and one uniform per interval for the renewable. Values come from inverse CDFs,
so the same uniforms drive every policy and every renewable scale (common
random numbers).

Policies run vectorised over all episodes that share a connection hour. The
oracle and MPC solve one QP per episode (per interval for MPC).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .model import (
    FEAS_TOL,
    HouseholdConfig,
    TariffSchedule,
    effective_storage_bounds,
    nem_payment,
    soc_change,
    terminal_reward,
    total_utility,
)
from .oracle import SPLIT_TOL, TrajectoryQP
from .policies import Decisions, _zone_from_net, decide_cco, decide_myopic, decide_nco, decide_pr
from .value import Quadrature, ValueTables, backward_induct, make_y_grid

POLICIES = ("mo", "cco", "nco", "pr", "mpc", "oracle")
DEFAULT_POLICIES = ("mo", "cco", "nco", "pr", "mpc")
N_NODES = 64

RESULT_COLUMNS = ("policy", "renewable_scale", "n_runs", "mean_surplus", "std_err", "gap_to_oracle")
TRACE_COLUMNS = ("episode", "t", "s", "y", "r", "v", "e", "d_total", "z", "zone", "reward")


class ScenarioError(ValueError):
    pass


# Distributions ---------------------------------------------------------------


@dataclass(frozen=True)
class PointMass:
    value: float

    def ppf(self, u):
        return np.full(np.shape(u), float(self.value))

    @property
    def upper(self) -> float:
        return float(self.value)


@dataclass(frozen=True)
class TruncatedNormal:
    mean: float
    sd: float
    lo: float = 0.0
    hi: float = math.inf

    def __post_init__(self):
        if self.sd <= 0 or self.lo < 0 or not self.lo < self.hi:
            raise ScenarioError(f"bad truncated normal {self}")

    def ppf(self, u):
        a, b = (self.lo - self.mean) / self.sd, (self.hi - self.mean) / self.sd
        return stats.truncnorm.ppf(u, a, b, loc=self.mean, scale=self.sd)

    @property
    def upper(self) -> float:
        return self.hi


@dataclass(frozen=True)
class LogNormal:
    """Lognormal given by its own mean and standard deviation; zero mean is a point mass at 0."""

    mean: float
    sd: float

    def __post_init__(self):
        if self.mean < 0 or self.sd < 0:
            raise ScenarioError(f"bad lognormal {self}")

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        if self.mean == 0:
            return np.zeros(u.shape)
        if self.sd == 0:
            return np.full(u.shape, self.mean)
        sigma = math.sqrt(math.log1p((self.sd / self.mean) ** 2))
        mu = math.log(self.mean) - 0.5 * sigma * sigma
        return np.exp(mu + sigma * stats.norm.ppf(u))

    @property
    def upper(self) -> float:
        return 0.0 if self.mean == 0 else math.inf


@dataclass(frozen=True)
class Histogram:
    """Piecewise-uniform density over bins ``[edges[k], edges[k+1])``."""

    edges: tuple[float, ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if e.size != w.size + 1 or w.size == 0:
            raise ScenarioError("histogram needs len(edges) == len(weights) + 1 >= 2")
        if e[0] < 0 or np.any(np.diff(e) <= 0) or np.any(w < 0) or w.sum() <= 0:
            raise ScenarioError("histogram needs increasing non-negative edges and non-negative weights")

    @classmethod
    def from_file(cls, path) -> "Histogram":
        """Read a CSV with header ``lower,upper,weight``; bins must be contiguous."""
        path = Path(path)
        try:
            with path.open(newline="") as fh:
                rows = list(csv.DictReader(fh))
        except OSError as exc:
            raise ScenarioError(f"cannot read histogram file {path}: {exc}") from exc
        try:
            lo = [float(r["lower"]) for r in rows]
            hi = [float(r["upper"]) for r in rows]
            w = [float(r["weight"]) for r in rows]
        except (KeyError, TypeError, ValueError) as exc:
            raise ScenarioError(f"malformed histogram file {path}: need numeric lower,upper,weight columns") from exc
        if not rows or any(abs(a - b) > 1e-12 for a, b in zip(hi, lo[1:])):
            raise ScenarioError(f"malformed histogram file {path}: bins must be non-empty and contiguous")
        try:
            return cls(tuple(lo + hi[-1:]), tuple(w))
        except ScenarioError as exc:
            raise ScenarioError(f"malformed histogram file {path}: {exc}") from exc

    def ppf(self, u):
        w = np.asarray(self.weights, dtype=float)
        cdf = np.concatenate([[0.0], np.cumsum(w) / w.sum()])
        return np.interp(u, cdf, np.asarray(self.edges, dtype=float))

    @property
    def upper(self) -> float:
        return float(self.edges[-1])


Distribution = PointMass | TruncatedNormal | LogNormal | Histogram


# Scenario model --------------------------------------------------------------


@dataclass(frozen=True)
class ScenarioModel:
    """Random renewable, EV demand and connection hour for one household.

    ``renewable[h]`` is the distribution at clock hour ``h`` (indices wrap
    modulo ``len(renewable)``); interval ``t`` of an episode connected at hour
    ``k`` sits at clock hour ``k + t``. When ``on_peak`` is given, the tariff
    partition is re-aligned to the connection hour; otherwise the config's
    own partition is used.
    """

    renewable: tuple[Distribution, ...]
    ev_demand: Distribution
    start_hours: tuple[int, ...] = (0,)
    on_peak: tuple[int, int] | None = None
    scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "renewable", tuple(self.renewable))
        object.__setattr__(self, "start_hours", tuple(int(h) for h in self.start_hours))
        if not self.renewable:
            raise ScenarioError("at least one renewable distribution is required")
        if not self.start_hours:
            raise ScenarioError("at least one connection hour is required")
        if not self.scale > 0:
            raise ScenarioError(f"renewable scale must be positive, got {self.scale:g}")
        if not math.isfinite(self.ev_demand.upper):
            raise ScenarioError("EV demand distribution needs bounded support")

    def scaled(self, scale: float) -> "ScenarioModel":
        return replace(self, scale=scale)

    @property
    def y_max(self) -> float:
        return float(self.ev_demand.upper)

    def renewable_at(self, start: int, t: int) -> Distribution:
        return self.renewable[(start + t) % len(self.renewable)]

    def tariff_for(self, tariff: TariffSchedule, start: int) -> TariffSchedule:
        if self.on_peak is None:
            return tariff
        T = tariff.horizon_T
        a = min(max(self.on_peak[0] - start, 0), T)
        b = min(max(self.on_peak[1] - start, 0), T)
        return replace(tariff, off1=(0, a), on=(a, b), off2=(b, T))

    def config_for(self, config: HouseholdConfig, start: int) -> HouseholdConfig:
        return replace(config, tariff=self.tariff_for(config.tariff, start))

    def quadratures(self, T: int, start: int, n_nodes: int = N_NODES) -> list[Quadrature]:
        """Equal-probability quantile nodes per interval; repeated nodes are merged."""
        u = (np.arange(n_nodes) + 0.5) / n_nodes
        out = []
        for t in range(T):
            nodes = self.scale * np.asarray(self.renewable_at(start, t).ppf(u), dtype=float)
            vals, counts = np.unique(nodes, return_counts=True)
            out.append(Quadrature(vals, counts / n_nodes))
        return out

    def mean_forecast(self, T: int, start: int) -> np.ndarray:
        return np.array([q.mean for q in self.quadratures(T, start)])


@dataclass(frozen=True)
class Realization:
    r: np.ndarray
    y0: float
    start: int
    episode: int = 0


def _uniforms(seed: int, episode_index: int, T: int) -> np.ndarray:
    gen = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, episode_index])))
    return gen.random(T + 2)


def realize_batch(model: ScenarioModel, u: np.ndarray, T: int, first_episode: int = 0) -> list[Realization]:
    """Map rows of uniforms (shape ``(n, T + 2)``) to realizations by inverse CDF."""
    u = np.atleast_2d(np.asarray(u, dtype=float))
    n = u.shape[0]
    hours = np.asarray(model.start_hours)
    start = hours[np.minimum((u[:, 0] * hours.size).astype(int), hours.size - 1)]
    y0 = np.maximum(np.asarray(model.ev_demand.ppf(u[:, 1]), dtype=float), 0.0)
    clock = (start[:, None] + np.arange(T)[None, :]) % len(model.renewable)
    r = np.zeros((n, T))
    for h in np.unique(clock):
        sel = clock == h
        r[sel] = model.renewable[h].ppf(u[:, 2:][sel])
    r = np.maximum(r * model.scale, 0.0)
    return [Realization(r=r[i], y0=float(y0[i]), start=int(start[i]), episode=first_episode + i) for i in range(n)]


def sample_scenario(model: ScenarioModel, seed: int, episode_index: int, T: int) -> Realization:
    """Realization of episode ``episode_index``; a pure function of its arguments."""
    return realize_batch(model, _uniforms(seed, episode_index, T)[None, :], T, episode_index)[0]


def sample_batch(model: ScenarioModel, seed: int, n_runs: int, T: int) -> list[Realization]:
    u = np.stack([_uniforms(seed, i, T) for i in range(n_runs)])
    return realize_batch(model, u, T)


# Policy tables ---------------------------------------------------------------


@dataclass
class PolicyTables:
    """Everything the threshold policies need for one connection hour and scale."""

    config: HouseholdConfig
    myopic: ValueTables
    storage_free: ValueTables
    forecast: np.ndarray


def build_tables(model: ScenarioModel, config: HouseholdConfig, start: int,
                 grid_spacing: float | None = None, n_nodes: int = N_NODES) -> PolicyTables:
    cfg = model.config_for(config.with_ev_efficiency_folded(), start)
    y_max = max(model.y_max / config.eta_ev, cfg.y0, 1e-6)
    grid = make_y_grid(y_max, cfg.v_max, cfg.T, grid_spacing)
    quads = model.quadratures(cfg.T, start, n_nodes)
    return PolicyTables(
        config=cfg,
        myopic=backward_induct(cfg, quads, grid, mode="myopic"),
        storage_free=backward_induct(cfg, quads, grid, mode="storage-free"),
        forecast=np.array([q.mean for q in quads]),
    )


# Episode engine --------------------------------------------------------------


@dataclass
class EpisodeTrace:
    """One simulated horizon. Arrays are indexed by interval; ``s``/``y`` are pre-decision states."""

    policy: str
    episode: int
    r: np.ndarray
    s: np.ndarray
    y: np.ndarray
    v: np.ndarray
    e: np.ndarray
    d: np.ndarray
    z: np.ndarray
    zone: np.ndarray
    reward: np.ndarray
    s_T: float
    y_T: float
    terminal: float
    surplus: float

    @property
    def T(self) -> int:
        return self.r.size


@dataclass
class BatchOutcome:
    surplus: np.ndarray
    traces: dict[str, np.ndarray] | None = None


class PolicyFailure(RuntimeError):
    pass


DecideFn = Callable[[int, np.ndarray, np.ndarray, np.ndarray], Decisions]


def _threshold_decider(name: str, tables: PolicyTables) -> DecideFn:
    cfg = tables.config
    mo, sf = tables.myopic, tables.storage_free

    def mo_fn(t, s, y, r):
        e_dis, e_chg = effective_storage_bounds(s, cfg)
        return decide_myopic(t, y, r, e_dis, e_chg, mo.thresholds.row(t), mo.next_value(t), cfg)

    def cco_fn(t, s, y, r):
        return decide_cco(t, s, y, r, sf.thresholds.row(t), sf.next_value(t), cfg)

    def nco_fn(t, s, y, r):
        return decide_nco(t, s, y, r, sf.thresholds.row(t), cfg)

    def pr_fn(t, s, y, r):
        return decide_pr(t, s, y, r, cfg)

    return {"mo": mo_fn, "cco": cco_fn, "nco": nco_fn, "pr": pr_fn}[name]


def _qp_decider(name: str, tables: PolicyTables, r_all: np.ndarray, y0: np.ndarray) -> DecideFn:
    """Oracle (one solve per episode, replayed) or certainty-equivalent MPC (one solve per step)."""
    cfg = tables.config
    T, K = cfg.T, len(cfg.devices)
    if name == "oracle":
        qp = TrajectoryQP(cfg)
        plan_v = np.zeros(r_all.shape)
        plan_e = np.zeros(r_all.shape)
        plan_d = np.zeros(r_all.shape + (K,))
        for i in range(r_all.shape[0]):
            x, *_ = qp.solve(r_all[i], cfg.s0, y0[i])
            v, d, c, u = qp.unpack(x)
            if np.max(np.minimum(c, u), initial=0.0) > SPLIT_TOL:
                raise PolicyFailure(f"oracle charges and discharges at once in episode row {i}")
            plan_v[i], plan_e[i], plan_d[i] = v, c - u, d

        def oracle_fn(t, s, y, r):
            n = s.size
            v, e = _project(s, y, plan_v[:, t], plan_e[:, t], cfg)
            return Decisions(v=v, e=e, d=plan_d[:, t].copy(), nu=np.full(n, np.nan), zone=np.zeros(n, dtype=int))

        return oracle_fn

    qps: dict[int, TrajectoryQP] = {}

    def mpc_fn(t, s, y, r):
        qp = qps.setdefault(t, TrajectoryQP(cfg, t0=t))
        n = s.size
        v, e, d = np.zeros(n), np.zeros(n), np.zeros((n, K))
        for i in range(n):
            forecast = tables.forecast[t:].copy()
            forecast[0] = r[i]
            x, *_ = qp.solve(forecast, float(s[i]), float(y[i]))
            vv, dd, c, u = qp.unpack(x)
            v[i], e[i], d[i] = vv[0], c[0] - u[0], dd[0]
        v, e = _project(s, y, v, e, cfg)
        return Decisions(v=v, e=e, d=d, nu=np.full(n, np.nan), zone=np.zeros(n, dtype=int))

    return mpc_fn


def _project(s, y, v, e, cfg):
    """Remove solver round-off that would push SoC or demand past its bound."""
    e_dis, e_chg = effective_storage_bounds(s, cfg)
    return np.clip(v, 0.0, np.minimum(cfg.v_max, y)), np.clip(e, -e_dis, e_chg)


def simulate_batch(policy: str, tables: PolicyTables, r: np.ndarray, y0: np.ndarray,
                   episodes: Sequence[int] | None = None, trace: bool = False) -> BatchOutcome:
    """Roll ``policy`` forward on ``n`` realizations sharing one connection hour.

    ``r`` has shape ``(n, T)``; ``y0`` is in charger-side kWh. Actions that
    break a constraint by more than the feasibility tolerance abort the run.
    """
    cfg = tables.config
    r = np.atleast_2d(np.asarray(r, dtype=float))
    n, T = r.shape
    y0 = np.broadcast_to(np.asarray(y0, dtype=float), (n,)).copy()
    episodes = np.arange(n) if episodes is None else np.asarray(episodes)
    if policy in ("oracle", "mpc"):
        decide = _qp_decider(policy, tables, r, y0)
    elif policy in POLICIES:
        decide = _threshold_decider(policy, tables)
    else:
        raise ValueError(f"unknown policy {policy!r}; choose from {', '.join(POLICIES)}")

    s = np.full(n, float(cfg.s0))
    y = y0.copy()
    surplus = np.zeros(n)
    rec = {k: np.zeros((n, T)) for k in ("s", "y", "v", "e", "z", "reward")} if trace else None
    if trace:
        rec["d"] = np.zeros((n, T, len(cfg.devices)))
        rec["zone"] = np.zeros((n, T), dtype=int)
    for t in range(T):
        rt = r[:, t]
        dec = decide(t, s, y, rt)
        v, e, d = dec.v, dec.e, dec.d
        _check(policy, t, episodes, s, y, v, e, d, cfg)
        v = np.clip(v, 0.0, np.minimum(cfg.v_max, y))
        z = v + d.sum(axis=-1) + e - rt
        pi_plus, pi_minus = cfg.tariff.prices(t)
        reward = total_utility(cfg.devices, d) - nem_payment(z, pi_plus, pi_minus, cfg.tariff.pi_zero)
        if trace:
            rec["s"][:, t], rec["y"][:, t] = s, y
            rec["v"][:, t], rec["e"][:, t], rec["d"][:, t] = v, e, d
            rec["z"][:, t], rec["reward"][:, t] = z, reward
            rec["zone"][:, t] = dec.zone if policy in ("mo",) else _zone_from_net(z)
        surplus += reward
        s = np.clip(s + soc_change(e, cfg.eta_c, cfg.eta_d), 0.0, cfg.B)
        y = np.maximum(y - v, 0.0)
    terminal = terminal_reward(s, y, cfg.alpha, cfg.beta)
    surplus += terminal
    if trace:
        rec["s_T"], rec["y_T"], rec["terminal"] = s, y, terminal
    return BatchOutcome(surplus=surplus, traces=rec)


def _check(policy, t, episodes, s, y, v, e, d, cfg):
    s_next = s + soc_change(e, cfg.eta_c, cfg.eta_d)
    d_max = np.array([dev.d_max for dev in cfg.devices])
    bad = (
        (v < -FEAS_TOL) | (v > np.minimum(cfg.v_max, y) + FEAS_TOL)
        | (e < -cfg.e_dis_max - FEAS_TOL) | (e > cfg.e_chg_max + FEAS_TOL)
        | (s_next < -FEAS_TOL) | (s_next > cfg.B + FEAS_TOL)
        | np.any((d < -FEAS_TOL) | (d > d_max + FEAS_TOL), axis=-1)
    )
    if np.any(bad):
        i = int(np.argmax(bad))
        raise PolicyFailure(
            f"policy {policy!r} chose an infeasible action at t={t} in episode {int(episodes[i])}: "
            f"v={v[i]:.6g}, e={e[i]:.6g}, d={d[i]} with s={s[i]:.6g}, y={y[i]:.6g}"
        )


def run_episode(policy: str, realization: Realization, config: HouseholdConfig,
                tables: PolicyTables | None = None, model: ScenarioModel | None = None) -> EpisodeTrace:
    """Simulate one episode and return its full trace.

    ``tables`` must match the realization's connection hour; they are built
    from ``model`` when omitted (``pr`` needs neither).
    """
    if tables is None:
        if model is None:
            model = _point_model(realization)
        tables = build_tables(model, config, realization.start)
    y0 = realization.y0 / config.eta_ev
    out = simulate_batch(policy, tables, realization.r[None, :], np.array([y0]),
                         episodes=[realization.episode], trace=True)
    return _trace_from(out, 0, policy, realization.episode, realization.r)


def _point_model(realization: Realization) -> ScenarioModel:
    return ScenarioModel(tuple(PointMass(float(x)) for x in realization.r), PointMass(realization.y0))


def _trace_from(out: BatchOutcome, i: int, policy: str, episode: int, r: np.ndarray) -> EpisodeTrace:
    tr = out.traces
    return EpisodeTrace(
        policy=policy, episode=episode, r=np.asarray(r, dtype=float).copy(),
        s=tr["s"][i], y=tr["y"][i], v=tr["v"][i], e=tr["e"][i], d=tr["d"][i], z=tr["z"][i],
        zone=tr["zone"][i], reward=tr["reward"][i],
        s_T=float(tr["s_T"][i]), y_T=float(tr["y_T"][i]), terminal=float(tr["terminal"][i]),
        surplus=float(out.surplus[i]),
    )


# Monte Carlo -----------------------------------------------------------------


@dataclass
class BenchmarkResult:
    policy: str
    renewable_scale: float
    n_runs: int
    mean_surplus: float
    std_err: float
    gap_to_oracle: float
    seed: int
    surpluses: np.ndarray = field(repr=False, default=None)
    oracle_surpluses: np.ndarray = field(repr=False, default=None)

    def row(self) -> dict:
        return {
            "policy": self.policy,
            "renewable_scale": self.renewable_scale,
            "n_runs": self.n_runs,
            "mean_surplus": self.mean_surplus,
            "std_err": self.std_err,
            "gap_to_oracle": self.gap_to_oracle,
        }


@dataclass
class MonteCarloRun:
    results: list[BenchmarkResult]
    traces: list[EpisodeTrace] = field(default_factory=list)
    failures: list[tuple[str, float, str]] = field(default_factory=list)

    def get(self, policy: str, scale: float = 1.0) -> BenchmarkResult:
        for res in self.results:
            if res.policy == policy and res.renewable_scale == scale:
                return res
        raise KeyError((policy, scale))


def monte_carlo(
    policies: Sequence[str],
    model: ScenarioModel,
    config: HouseholdConfig,
    n_runs: int,
    seed: int = 42,
    scales: Sequence[float] = (1.0,),
    n_override: dict[str, int] | None = None,
    grid_spacing: float | None = None,
    keep_traces: int = 0,
    keep_going: bool = False,
) -> MonteCarloRun:
    """Evaluate ``policies`` on the same ``n_runs`` realizations at each renewable scale.

    The oracle is always solved; each policy's gap is measured against the
    oracle on exactly the episodes that policy ran. ``keep_traces`` keeps the
    full traces of the first that many episodes of every (policy, scale).
    With ``keep_going`` a failing policy is recorded in ``failures`` and the
    others still run; oracle failures always propagate.
    """
    if n_runs < 1:
        raise ValueError("n_runs must be at least 1")
    unknown = [p for p in policies if p not in POLICIES]
    if unknown:
        raise ValueError(f"unknown policies {unknown}; choose from {', '.join(POLICIES)}")
    n_override = dict(n_override or {})
    T = config.T
    uniforms = np.stack([_uniforms(seed, i, T) for i in range(n_runs)])
    results, traces, failures = [], [], []
    for scale in scales:
        sm = model.scaled(scale)
        reals = realize_batch(sm, uniforms, T)
        starts = np.array([rz.start for rz in reals])
        r_all = np.stack([rz.r for rz in reals])
        y_all = np.array([rz.y0 for rz in reals]) / config.eta_ev
        tables = {h: build_tables(sm, config, h, grid_spacing) for h in sorted(set(starts.tolist()))}

        def evaluate(policy: str, n: int):
            surplus = np.zeros(n)
            kept = []
            for h, tab in tables.items():
                idx = np.flatnonzero(starts[:n] == h)
                if idx.size == 0:
                    continue
                want = keep_traces > 0 and idx[0] < keep_traces
                try:
                    out = simulate_batch(policy, tab, r_all[idx], y_all[idx], episodes=idx, trace=want)
                except PolicyFailure:
                    raise
                except (ArithmeticError, ValueError, RuntimeError) as exc:
                    raise PolicyFailure(f"policy {policy!r} failed on episodes starting at hour {h}: {exc}") from exc
                surplus[idx] = out.surplus
                if want:
                    kept += [_trace_from(out, j, policy, int(i), r_all[i])
                             for j, i in enumerate(idx) if i < keep_traces]
            kept.sort(key=lambda tr: tr.episode)
            return surplus, kept

        n_of = {p: min(n_override.get(p, n_runs), n_runs) for p in policies}
        oracle_surplus, oracle_traces = evaluate("oracle", max(n_of.values(), default=n_runs))
        for policy in policies:
            n = n_of[policy]
            if policy == "oracle":
                surplus, kept = oracle_surplus[:n], [tr for tr in oracle_traces if tr.episode < n]
            else:
                try:
                    surplus, kept = evaluate(policy, n)
                except PolicyFailure as exc:
                    if not keep_going:
                        raise
                    failures.append((policy, float(scale), str(exc)))
                    continue
            ref = float(np.mean(oracle_surplus[:n]))
            mean = float(np.mean(surplus))
            se = float(np.std(surplus, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
            gap = 0.0 if policy == "oracle" else (ref - mean) / ref
            results.append(BenchmarkResult(policy, float(scale), n, mean, se, gap, seed,
                                           surpluses=surplus, oracle_surpluses=oracle_surplus[:n]))
            traces += kept
    return MonteCarloRun(results=results, traces=traces, failures=failures)


def _writer(path: Path, header, rows) -> Path:
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc
    return path


def export_traces(traces: Sequence[EpisodeTrace], path) -> Path:
    """Trace CSV, one row per (trace, interval), with a leading ``policy`` column."""
    rows = (
        [tr.policy, tr.episode, t]
        + [repr(float(x)) for x in (tr.s[t], tr.y[t], tr.r[t], tr.v[t], tr.e[t], tr.d[t].sum(), tr.z[t])]
        + [int(tr.zone[t]), repr(float(tr.reward[t]))]
        for tr in traces for t in range(tr.T)
    )
    return _writer(Path(path), ("policy",) + TRACE_COLUMNS, rows)


def export_results(results: Sequence[BenchmarkResult], path, traces: Sequence[EpisodeTrace] = (),
                   trace_path=None) -> list[Path]:
    """Write the results CSV (and optionally the trace CSV); rows keep the given order."""
    rows = ([r.policy, repr(r.renewable_scale), r.n_runs, repr(r.mean_surplus), repr(r.std_err),
             repr(r.gap_to_oracle)] for r in results)
    written = [_writer(Path(path), RESULT_COLUMNS, rows)]
    if trace_path is not None:
        written.append(export_traces(traces, trace_path))
    return written


# Benchmark defaults ----------------------------------------------------------

ON_PEAK_HOURS = (16, 21)
START_HOURS = tuple(range(12, 16))


def solar_profile(hour) -> np.ndarray:
    """Clear-sky shaped mean output (kWh per hour) peaking at 1 at solar noon."""
    h = np.asarray(hour, dtype=float)
    return np.clip(np.sin(np.pi * (h - 6) / 14), 0.0, None) ** 1.5


def benchmark_config(T: int = 16) -> HouseholdConfig:
    """Household with the physical parameters of the desk-scale benchmark."""
    from .model import DeviceUtility

    # Retail rates shaped like a residential ToU plan; sell rates keep pi+ - pi- fixed.
    tariff = TariffSchedule.from_lengths(4, 5, T - 9, pi_off_plus=0.34, pi_off_minus=0.05,
                                         pi_on_plus=0.41, pi_on_minus=0.12)
    return HouseholdConfig(
        B=13.5, e_chg_max=3.2, e_dis_max=3.2, eta_c=0.95, eta_d=0.95, v_max=3.6,
        alpha=1.0, beta=0.3, devices=(DeviceUtility(a=1.5, b=1.0, d_max=3.0),),
        tariff=tariff, s0=6.75, y0=0.0,
    )


def benchmark_scenario(peak_kwh: float = 4.0, cv: float = 0.5, demand_mean: float = 10.0,
                       demand_sd: float = 6.0, demand_max: float = 30.0,
                       start_hours: Sequence[int] = START_HOURS) -> ScenarioModel:
    """Synthetic stand-in: lognormal solar with a midday profile, truncated-normal EV demand."""
    means = peak_kwh * solar_profile(np.arange(24))
    solar = tuple(LogNormal(float(m), float(cv * m)) for m in means)
    return ScenarioModel(
        renewable=solar,
        ev_demand=TruncatedNormal(demand_mean, demand_sd, 0.0, demand_max),
        start_hours=tuple(start_hours),
        on_peak=ON_PEAK_HOURS,
    )
