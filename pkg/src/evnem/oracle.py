"""Full-information solvers.

``solve_deterministic`` maximises the accumulated surplus of one renewable
realisation as a convex QP (Clarabel interior point). ``brute_force_dp`` is an
exhaustive discretised DP over (SoC, demand) used as an independent check on
tiny instances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import clarabel
import numba
import numpy as np
import scipy.sparse as sp
from scipy.optimize import lsq_linear

from .model import Action, HouseholdConfig, nem_payment, soc_change, terminal_reward, total_utility
from .value import Quadrature

KKT_TOL = 1e-5
SPLIT_TOL = 1e-7


class OracleFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class DeterministicProblem:
    config: HouseholdConfig
    realization: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.realization, dtype=float)
        if r.shape != (self.config.T,):
            raise ValueError(f"realization has shape {r.shape}, horizon is {self.config.T}")
        if np.any(r < 0):
            raise ValueError("renewable realization must be non-negative")
        object.__setattr__(self, "realization", r)


@dataclass
class TrajectorySolution:
    v: np.ndarray
    d: np.ndarray
    e: np.ndarray
    objective: float
    kkt_residual: float
    charge: np.ndarray = field(repr=False, default=None)
    discharge: np.ndarray = field(repr=False, default=None)
    duals: np.ndarray | None = field(repr=False, default=None)

    def actions(self) -> list[Action]:
        return [Action(float(v), float(e), tuple(map(float, d))) for v, e, d in zip(self.v, self.e, self.d)]


class TrajectoryQP:
    """QP for intervals ``t0 .. T-1`` with the initial SoC/demand and renewables as data.

    Decision variables per interval: EV charge, per-device consumption, battery
    charge and discharge (split), grid import and export. Written as
    ``min 1/2 x'Px + q'x  s.t.  Ax + s = b, s in {0}^H x R_+^m`` so that
    re-solving for a new realization only updates ``b``.
    """

    def __init__(self, config: HouseholdConfig, t0: int = 0, tol: float = 1e-10, max_iter: int = 200):
        cfg = config.with_ev_efficiency_folded()
        self.config = cfg
        self.t0 = t0
        H = cfg.T - t0
        K = len(cfg.devices)
        self.H, self.K = H, K
        nv = K + 5
        self.nv = nv
        n = H * nv
        self.n = n
        idx = lambda t, j: t * nv + j  # noqa: E731
        self.iv = np.array([idx(t, 0) for t in range(H)])
        self.id = np.array([[idx(t, 1 + i) for i in range(K)] for t in range(H)]).reshape(H, K)
        self.ic = self.iv + K + 1
        self.iu = self.iv + K + 2
        self.ip = self.iv + K + 3
        self.iq = self.iv + K + 4

        tar = cfg.tariff
        pp = np.array([tar.prices(t)[0] for t in range(t0, cfg.T)])
        pm = np.array([tar.prices(t)[1] for t in range(t0, cfg.T)])
        qv = np.zeros(n)
        pdiag = np.zeros(n)
        for i, dev in enumerate(cfg.devices):
            pdiag[self.id[:, i]] = dev.b
            qv[self.id[:, i]] = -dev.a
        qv[self.iv] = -cfg.alpha
        qv[self.ic] = -cfg.beta * cfg.eta_c
        qv[self.iu] = cfg.beta / cfg.eta_d
        qv[self.ip] = pp
        qv[self.iq] = -pm
        self.P = sp.diags(pdiag).tocsc()
        self.q = qv

        rows, cols, vals = [], [], []

        def put(r, c, v):
            rows.append(r)
            cols.append(c)
            vals.append(v)

        # Energy balance: v + sum(d) + c - u - p + q = r_t.
        for t in range(H):
            put(t, self.iv[t], 1.0)
            for i in range(K):
                put(t, self.id[t, i], 1.0)
            put(t, self.ic[t], 1.0)
            put(t, self.iu[t], -1.0)
            put(t, self.ip[t], -1.0)
            put(t, self.iq[t], 1.0)
        row = H
        # Cumulative SoC change within [-s_init, B - s_init].
        for t in range(H):
            for k in range(t + 1):
                put(row + t, self.ic[k], cfg.eta_c)
                put(row + t, self.iu[k], -1.0 / cfg.eta_d)
                put(row + H + t, self.ic[k], -cfg.eta_c)
                put(row + H + t, self.iu[k], 1.0 / cfg.eta_d)
        row += 2 * H
        for t in range(H):
            put(row, self.iv[t], 1.0)
        row += 1
        ub = np.full(n, np.inf)
        ub[self.iv] = cfg.v_max
        for i, dev in enumerate(cfg.devices):
            ub[self.id[:, i]] = dev.d_max
        ub[self.ic] = cfg.e_chg_max
        ub[self.iu] = cfg.e_dis_max
        boxed = np.flatnonzero(np.isfinite(ub))
        for j, c in enumerate(boxed):
            put(row + j, c, 1.0)
        row += boxed.size
        for c in range(n):
            put(row + c, c, -1.0)
        row += n
        self.m = row
        self.A = sp.csc_matrix((vals, (rows, cols)), shape=(row, n))
        self.b = np.zeros(row)
        self.b[H + 2 * H + 1: H + 2 * H + 1 + boxed.size] = ub[boxed]
        self.cones = [clarabel.ZeroConeT(H), clarabel.NonnegativeConeT(row - H)]
        settings = clarabel.DefaultSettings()
        settings.verbose = False
        settings.presolve_enable = False
        settings.tol_gap_abs = tol
        settings.tol_gap_rel = tol
        settings.tol_feas = tol
        settings.max_iter = max_iter
        self.settings = settings
        self._solver = None

    def rhs(self, r, s_init: float, y_init: float) -> np.ndarray:
        H, cfg = self.H, self.config
        b = self.b.copy()
        b[:H] = r
        b[H: 2 * H] = cfg.B - s_init
        b[2 * H: 3 * H] = s_init
        b[3 * H] = y_init
        return b

    def constant(self, s_init: float, y_init: float) -> float:
        return self.config.beta * s_init - self.config.alpha * y_init - self.H * self.config.tariff.pi_zero

    def solve(self, r, s_init: float, y_init: float):
        r = np.asarray(r, dtype=float)
        if r.shape != (self.H,):
            raise ValueError(f"need {self.H} renewable values, got {r.shape}")
        b = self.rhs(r, s_init, y_init)
        if self._solver is None:
            self._solver = clarabel.DefaultSolver(self.P, self.q, self.A, b, self.cones, self.settings)
        else:
            self._solver.update(b=b)
        sol = self._solver.solve()
        status = str(sol.status)
        x = np.asarray(sol.x)
        z = np.asarray(sol.z)
        if "Solved" not in status:
            raise OracleFailure(f"QP solver stopped with status {status} after {sol.iterations} iterations")
        return x, z, b, status

    def stationarity(self, x, z, b) -> float:
        """Max KKT violation for the solver's primal/dual pair."""
        H = self.H
        grad = self.P @ x + self.q + self.A.T @ z
        slack = b - self.A @ x
        feas_eq = np.max(np.abs(slack[:H]), initial=0.0)
        feas_in = max(0.0, -float(np.min(slack[H:], initial=0.0)))
        dual_in = max(0.0, -float(np.min(z[H:], initial=0.0)))
        comp = float(np.max(np.abs(z[H:] * slack[H:]), initial=0.0))
        return float(max(np.max(np.abs(grad)), feas_eq, feas_in, dual_in, comp))

    def unpack(self, x):
        v = np.clip(x[self.iv], 0.0, self.config.v_max)
        d = np.clip(x[self.id], 0.0, None)
        for i, dev in enumerate(self.config.devices):
            d[:, i] = np.minimum(d[:, i], dev.d_max)
        c = np.clip(x[self.ic], 0.0, self.config.e_chg_max)
        u = np.clip(x[self.iu], 0.0, self.config.e_dis_max)
        return v, d, c, u


def trajectory_objective(config: HouseholdConfig, r, v, d, e, s_init=None, y_init=None, t0=0) -> float:
    """Accumulated surplus of an action trajectory, terminal reward counted once."""
    cfg = config.with_ev_efficiency_folded()
    s = cfg.s0 if s_init is None else s_init
    y = cfg.y0 if y_init is None else y_init
    total = 0.0
    for k, t in enumerate(range(t0, cfg.T)):
        pp, pm = cfg.tariff.prices(t)
        z = v[k] + float(np.sum(d[k])) + e[k] - r[k]
        total += float(total_utility(cfg.devices, d[k])) - float(nem_payment(z, pp, pm, cfg.tariff.pi_zero))
        s += float(soc_change(e[k], cfg.eta_c, cfg.eta_d))
        y -= v[k]
    return total + float(terminal_reward(s, y, cfg.alpha, cfg.beta))


def _solution_from_qp(qp: TrajectoryQP, x, z, b, r, s_init, y_init) -> TrajectorySolution:
    v, d, c, u = qp.unpack(x)
    both = np.minimum(c, u)
    if np.max(both, initial=0.0) > SPLIT_TOL:
        raise OracleFailure(f"simultaneous charge and discharge at optimum ({np.max(both):.3g} kWh)")
    e = c - u
    obj = trajectory_objective(qp.config, r, v, d, e, s_init, y_init, t0=qp.t0)
    res = qp.stationarity(x, z, b)
    return TrajectorySolution(v=v, d=d, e=e, objective=obj, kkt_residual=res, charge=c, discharge=u, duals=z)


def solve_deterministic(problem: DeterministicProblem, qp: TrajectoryQP | None = None) -> TrajectorySolution:
    """Offline optimum for one realization, certified by its KKT residual."""
    cfg = problem.config.with_ev_efficiency_folded()
    qp = TrajectoryQP(cfg) if qp is None else qp
    x, z, b, status = qp.solve(problem.realization, cfg.s0, cfg.y0)
    sol = _solution_from_qp(qp, x, z, b, problem.realization, cfg.s0, cfg.y0)
    if sol.kkt_residual > KKT_TOL:
        raise OracleFailure(f"KKT residual {sol.kkt_residual:.3g} exceeds {KKT_TOL:g} (status {status})")
    return sol


def kkt_residual(problem: DeterministicProblem, solution: TrajectorySolution, active_tol: float = 1e-7) -> float:
    """Max KKT violation of ``solution`` with multipliers recovered from scratch.

    Active inequalities are those within ``active_tol`` of binding; their
    multipliers (sign-constrained) and the balance multipliers are fitted by
    bounded least squares on the stationarity equations.
    """
    cfg = problem.config.with_ev_efficiency_folded()
    qp = TrajectoryQP(cfg)
    H = qp.H
    x = np.zeros(qp.n)
    x[qp.iv] = solution.v
    x[qp.id] = np.asarray(solution.d, dtype=float).reshape(H, qp.K)
    e = np.asarray(solution.e, dtype=float)
    c = solution.charge if solution.charge is not None else np.maximum(e, 0.0)
    u = solution.discharge if solution.discharge is not None else np.maximum(-e, 0.0)
    x[qp.ic], x[qp.iu] = c, u
    z = x[qp.iv] + x[qp.id].sum(axis=1) + c - u - problem.realization
    x[qp.ip], x[qp.iq] = np.maximum(z, 0.0), np.maximum(-z, 0.0)

    b = qp.rhs(problem.realization, cfg.s0, cfg.y0)
    A = qp.A.toarray()
    slack = b - A @ x
    feas = max(float(np.max(np.abs(slack[:H]))), max(0.0, -float(np.min(slack[H:]))))
    grad = qp.P @ x + qp.q
    active = np.concatenate([np.arange(H), H + np.flatnonzero(slack[H:] <= active_tol)])
    J = A[active].T
    lb = np.where(active < H, -np.inf, 0.0)
    fit = lsq_linear(J, -grad, bounds=(lb, np.full(active.size, np.inf)), method="bvls", tol=1e-14)
    stat = float(np.max(np.abs(grad + J @ fit.x)))
    return max(stat, feas)


# Brute-force DP --------------------------------------------------------------


@dataclass
class BruteForceResult:
    value: float
    resolution: float
    s_grids: list[np.ndarray]
    tables: list[np.ndarray]
    config: HouseholdConfig = field(repr=False)
    scenarios: list[Quadrature] = field(repr=False)

    def value_at(self, t: int, s: float, y: float) -> float:
        """Interpolated value of the discretised DP at (SoC, demand) for interval ``t``."""
        return _table_value(self, t, s, y)

    def greedy_action(self, t: int, s: float, y: float, r: float) -> Action:
        return _greedy(self, t, s, y, r)


def _best_total_utility(config: HouseholdConfig, h: float):
    """Best utility achievable for each total consumption ``j*h`` (max-plus convolution)."""
    best = np.array([0.0])
    for dev in config.devices:
        n = int(math.floor(dev.d_max / h + 1e-9))
        u = dev.utility(np.arange(n + 1) * h)
        out = np.full(best.size + n, -np.inf)
        for k in range(n + 1):
            out[k: k + best.size] = np.maximum(out[k: k + best.size], best + u[k])
        best = out
    return best


def _stage_table(ubest, h, r, pp, pm, pi0, m_lo, m_hi):
    """``G[m] = max_j ubest[j] - P(m*h + j*h - r)`` for ``m`` in ``[m_lo, m_hi]``."""
    m = np.arange(m_lo, m_hi + 1)[:, None] * h
    j = np.arange(ubest.size)[None, :] * h
    z = m + j - r
    pay = np.where(z >= 0, z * pp, z * pm) + pi0
    return np.max(ubest[None, :] - pay, axis=1)


@numba.njit(cache=True)
def _stage_kernel(G, m_lo, s_grid, ny, iy_min, h, kv, je_lo, je_hi, eta_c, eta_d, B,
                  next_s, next_vals, terminal, alpha, beta):
    ns = s_grid.size
    out = np.full((ns, ny + 1), np.nan)
    for a in range(ns):
        s = s_grid[a]
        jlo = -min(je_lo, int(math.floor(s * eta_d / h + 1e-9)))
        jhi = min(je_hi, int(math.floor((B - s) / eta_c / h + 1e-9)))
        for iy in range(iy_min, ny + 1):
            best = -np.inf
            for k in range(min(kv, iy) + 1):
                iy2 = iy - k
                for j in range(jlo, jhi + 1):
                    e = j * h
                    ds = eta_c * e if e >= 0 else e / eta_d
                    s2 = s + ds
                    g = G[k + j - m_lo]
                    if terminal:
                        cont = beta * s2 - alpha * iy2 * h
                    else:
                        cont = _interp_s(next_s, next_vals, s2, iy2)
                    val = g + cont
                    if val > best:
                        best = val
            out[a, iy] = best
    return out


@numba.njit(cache=True)
def _interp_s(s_grid, vals, s, iy):
    n = s_grid.size
    if n == 1:
        return vals[0, iy]
    if s <= s_grid[0]:
        return vals[0, iy]
    if s >= s_grid[n - 1]:
        return vals[n - 1, iy]
    lo, hi = 0, n - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if s_grid[mid] <= s:
            lo = mid
        else:
            hi = mid
    w = (s - s_grid[lo]) / (s_grid[hi] - s_grid[lo])
    return (1.0 - w) * vals[lo, iy] + w * vals[hi, iy]


def _separable_last_stage(G, m_lo, s_grid, ny, h, kv, je_lo, je_hi, cfg):
    """Last interval against the linear terminal reward, grouped by feasible storage range."""
    out = np.empty((s_grid.size, ny + 1))
    j_all = np.arange(-je_lo, je_hi + 1)
    e_all = j_all * h
    ds = np.where(e_all >= 0, cfg.eta_c * e_all, e_all / cfg.eta_d)
    jlo = -np.minimum(je_lo, np.floor(s_grid * cfg.eta_d / h + 1e-9).astype(int))
    jhi = np.minimum(je_hi, np.floor((cfg.B - s_grid) / cfg.eta_c / h + 1e-9).astype(int))
    ks = np.arange(kv + 1)
    iy = np.arange(ny + 1)
    cache = {}
    for a, s in enumerate(s_grid):
        key = (int(jlo[a]), int(jhi[a]))
        if key not in cache:
            sel = (j_all >= key[0]) & (j_all <= key[1])
            jj, dsj = j_all[sel], ds[sel]
            # A[k] = max_j G[k+j] + beta*ds_j
            A = np.max(G[ks[:, None] + jj[None, :] - m_lo] + cfg.beta * dsj[None, :], axis=1)
            A = A + cfg.alpha * ks * h
            # best over k <= min(kv, iy)
            pref = np.maximum.accumulate(A)
            cache[key] = pref[np.minimum(iy, kv)]
        out[a] = cfg.beta * s - cfg.alpha * iy * h + cache[key]
    return out


def _scenarios(config: HouseholdConfig, scenarios) -> list[Quadrature]:
    if isinstance(scenarios, (list, tuple)) and scenarios and isinstance(scenarios[0], Quadrature):
        out = list(scenarios)
    else:
        out = [Quadrature.point(float(r)) for r in np.asarray(scenarios, dtype=float)]
    if len(out) != config.T:
        raise ValueError(f"need {config.T} scenario stages, got {len(out)}")
    return out


def _s_band(cfg: HouseholdConfig, t: int, h: float) -> np.ndarray:
    lo = max(0.0, cfg.s0 - t * cfg.e_dis_max / cfg.eta_d)
    hi = min(cfg.B, cfg.s0 + t * cfg.eta_c * cfg.e_chg_max)
    if hi - lo < 1e-12:
        return np.array([cfg.s0])
    n = int(math.ceil((hi - lo) / h - 1e-9))
    return np.linspace(lo, hi, n + 1)


def brute_force_dp(config: HouseholdConfig, scenarios, resolution: float = 1e-2,
                   cell_budget: float = 2e9, max_T: int = 4) -> BruteForceResult:
    """Exhaustive DP over a discretised (SoC, demand, action) space.

    ``scenarios`` is either a deterministic realization (length ``T``) or one
    :class:`Quadrature` per interval giving independent renewable outcomes.
    Consumption is maximised exactly over its grid for each total of
    EV charge plus storage operation, which is what makes the search tractable;
    nothing else about the policy structure is assumed.
    """
    cfg = config.with_ev_efficiency_folded()
    T, h = cfg.T, float(resolution)
    if T > max_T:
        raise ValueError(f"brute-force DP limited to T <= {max_T}")
    quads = _scenarios(cfg, scenarios)
    ny = int(round(cfg.y0 / h))
    if abs(ny * h - cfg.y0) > 1e-9:
        raise ValueError("y0 must be a multiple of the resolution")
    kv = int(math.floor(cfg.v_max / h + 1e-9))
    je_lo = int(math.floor(cfg.e_dis_max / h + 1e-9))
    je_hi = int(math.floor(cfg.e_chg_max / h + 1e-9))
    s_grids = [_s_band(cfg, t, h) for t in range(T)]
    cells = sum(g.size * min(ny + 1, t * kv + 1) * (kv + 1) * (je_lo + je_hi + 1) * q.nodes.size
                for t, (g, q) in enumerate(zip(s_grids[:-1], quads[:-1])))
    if cells > cell_budget:
        raise ValueError(f"brute-force DP needs {cells:.3g} cell evaluations, budget is {cell_budget:.3g}")

    ubest = _best_total_utility(cfg, h)
    m_lo, m_hi = -je_lo, kv + je_hi
    tables: list[np.ndarray | None] = [None] * T
    for t in range(T - 1, -1, -1):
        pp, pm = cfg.tariff.prices(t)
        acc = np.zeros((s_grids[t].size, ny + 1))
        for r, w in zip(quads[t].nodes, quads[t].weights):
            G = _stage_table(ubest, h, r, pp, pm, cfg.tariff.pi_zero, m_lo, m_hi)
            if t == T - 1:
                part = _separable_last_stage(G, m_lo, s_grids[t], ny, h, kv, je_lo, je_hi, cfg)
            else:
                iy_min = max(0, ny - t * kv)
                part = _stage_kernel(G, m_lo, s_grids[t], ny, iy_min, h, kv, je_lo, je_hi, cfg.eta_c, cfg.eta_d,
                                     cfg.B, s_grids[t + 1], tables[t + 1], False, cfg.alpha, cfg.beta)
            acc += w * part
        tables[t] = acc
    value = float(np.interp(cfg.s0, s_grids[0], tables[0][:, ny])) if s_grids[0].size > 1 else float(tables[0][0, ny])
    return BruteForceResult(value=value, resolution=h, s_grids=s_grids, tables=tables, config=cfg, scenarios=quads)


def _table_value(res: BruteForceResult, t: int, s: float, y: float) -> float:
    cfg, h = res.config, res.resolution
    if t >= cfg.T:
        return float(terminal_reward(s, y, cfg.alpha, cfg.beta))
    iy = int(round(y / h))
    g = res.s_grids[t]
    if g.size == 1:
        return float(res.tables[t][0, iy])
    return float(np.interp(s, g, res.tables[t][:, iy]))


def _greedy(res: BruteForceResult, t: int, s: float, y: float, r: float) -> Action:
    cfg, h = res.config, res.resolution
    iy = int(round(y / h))
    kv = min(int(math.floor(cfg.v_max / h + 1e-9)), iy)
    jlo = -min(int(math.floor(cfg.e_dis_max / h + 1e-9)), int(math.floor(s * cfg.eta_d / h + 1e-9)))
    jhi = min(int(math.floor(cfg.e_chg_max / h + 1e-9)), int(math.floor((cfg.B - s) / cfg.eta_c / h + 1e-9)))
    pp, pm = cfg.tariff.prices(t)
    best, arg = -np.inf, None
    dev_grids = [np.arange(int(math.floor(dv.d_max / h + 1e-9)) + 1) * h for dv in cfg.devices]
    mesh = np.stack(np.meshgrid(*dev_grids, indexing="ij"), axis=-1).reshape(-1, len(cfg.devices))
    util = total_utility(cfg.devices, mesh)
    dsum = mesh.sum(axis=1)
    for k in range(kv + 1):
        for j in range(jlo, jhi + 1):
            e = j * h
            z = k * h + e + dsum - r
            stage = util - (np.where(z >= 0, z * pp, z * pm) + cfg.tariff.pi_zero)
            i = int(np.argmax(stage))
            s2 = s + float(soc_change(e, cfg.eta_c, cfg.eta_d))
            val = stage[i] + _table_value(res, t + 1, s2, (iy - k) * h)
            if val > best:
                best, arg = val, Action(k * h, e, tuple(float(x) for x in mesh[i]))
    return arg
