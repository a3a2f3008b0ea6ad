"""Threshold policies and the comparison baselines.

The kernels (``decide_*``) are vectorised: ``y``, ``r`` and the storage bounds
may be arrays of equal shape, all at the same interval ``t``. Single-state
wrappers returning :class:`PolicyDecision` sit on top of them.

Zone codes for the storage-aware policy::

    0  net-consuming          grid import, storage discharging at its limit
    1  net-zero, case 1       storage at discharge limit, price in (beta/eta_d, pi+]
    2  net-zero, case 2       price = beta/eta_d, storage partially discharging
    3  net-zero, case 3       storage idle, price in [beta*eta_c, beta/eta_d]
    4  net-zero, case 4       price = beta*eta_c, storage partially charging
    5  net-zero, case 5       storage at charge limit, price in [pi-, beta*eta_c)
    6  net-producing          grid export, storage charging at its limit
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import (
    Action,
    DeviceUtility,
    HouseholdConfig,
    State,
    aggregate_consumption,
    effective_storage_bounds,
    marginal_consumption,
)
from .value import ConcavePLFunction, ThresholdRow, delta_boundaries, h_theta

ZONE_LABELS = (
    "net-consuming",
    "net-zero-1",
    "net-zero-2",
    "net-zero-3",
    "net-zero-4",
    "net-zero-5",
    "net-producing",
)
PROCRASTINATION_LABELS = {0: "net-consuming", 3: "net-zero", 6: "net-producing"}

BISECTION_STEPS = 64
BRACKET_TOL = 1e-6


class BracketError(ValueError):
    """Requested load lies outside what the price bracket can clear."""


@dataclass
class Decisions:
    """Batch of decisions at one interval; ``d`` has the device axis last."""

    v: np.ndarray
    e: np.ndarray
    d: np.ndarray
    nu: np.ndarray
    zone: np.ndarray

    @property
    def d_total(self) -> np.ndarray:
        return self.d.sum(axis=-1)

    def net(self, r) -> np.ndarray:
        return self.v + self.d_total + self.e - r

    def take(self, i: int) -> Action:
        return Action(float(self.v[i]), float(self.e[i]), tuple(float(x) for x in self.d[i]))


@dataclass(frozen=True)
class PolicyDecision:
    action: Action
    zone: str
    nu: float | None


def _load(nu, y, devices, f: ConcavePLFunction, v_max, strict=False):
    return aggregate_consumption(nu, devices) + h_theta(y, f.w_inverse(nu, strict=strict), v_max)


def _clear(target, y, lo, hi, devices, f, v_max, check=True):
    """Vectorised bisection for the price at which EV plus consumption load meets ``target``.

    Returns ``(nu, v, d)``; ``v`` absorbs the indifference jump of the EV
    charge at a tied slope so that ``v + sum(d) == target`` exactly.
    """
    target = np.asarray(target, dtype=float)
    lo = np.broadcast_to(np.asarray(lo, dtype=float), target.shape).copy()
    hi = np.broadcast_to(np.asarray(hi, dtype=float), target.shape).copy()
    if check and target.size:
        top = _load(lo, y, devices, f, v_max, strict=True)
        bottom = _load(hi, y, devices, f, v_max)
        bad = (target > top + BRACKET_TOL) | (target < bottom - BRACKET_TOL)
        if np.any(bad):
            i = int(np.argmax(bad))
            raise BracketError(
                f"target load {target[i]:.9g} outside [{bottom[i]:.9g}, {top[i]:.9g}] "
                f"for price bracket [{lo[i]:g}, {hi[i]:g}]"
            )
    for _ in range(BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        above = _load(mid, y, devices, f, v_max) > target
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
    nu = hi
    d, d_total = marginal_consumption(nu, devices)
    cap = np.minimum(v_max, np.maximum(y, 0.0))
    v = np.clip(target - d_total, 0.0, cap)
    return nu, v, d


def solve_nu(r, y, bracket, devices: Sequence[DeviceUtility], vbar_next: ConcavePLFunction, v_max: float) -> float:
    """Shadow price in ``bracket`` at which EV charge plus consumption equals ``r``.

    Raises :class:`BracketError` if ``r`` cannot be met by any price in the bracket.
    """
    nu, _, _ = _clear(np.array([r]), np.array([y]), bracket[0], bracket[1], devices, vbar_next, v_max)
    return float(nu[0])


def _as_arrays(*xs):
    arrs = np.broadcast_arrays(*[np.asarray(x, dtype=float) for x in xs])
    return [np.atleast_1d(a).astype(float) for a in arrs]


def decide_myopic(t: int, y, r, e_dis, e_chg, row: ThresholdRow, f: ConcavePLFunction,
                  config: HouseholdConfig) -> Decisions:
    """Storage-aware threshold decisions with storage valued at salvage."""
    y, r, e_dis, e_chg = _as_arrays(y, r, e_dis, e_chg)
    devs, vm = config.devices, config.v_max
    pi_plus, pi_minus = config.tariff.prices(t)
    p_dis, p_chg = config.discharge_value, config.charge_value
    bd = delta_boundaries(t, y, e_dis, e_chg, config, row)
    zone = sum((r >= b).astype(int) for b in (bd.plus_prime, bd.d1, bd.d2, bd.d3, bd.d4, bd.minus_prime))

    n, k = y.size, len(devs)
    v = np.zeros(n)
    e = np.zeros(n)
    d = np.zeros((n, k))
    nu = np.full(n, np.nan)

    fixed = {0: (pi_plus, row.tau), 2: (p_dis, row.sigma_plus), 4: (p_chg, row.sigma_minus), 6: (pi_minus, row.delta)}
    for z, (price, theta) in fixed.items():
        sel = zone == z
        if not sel.any():
            continue
        v[sel] = h_theta(y[sel], theta, vm)
        d[sel] = marginal_consumption(np.full(sel.sum(), price), devs)[0]
        if z in (2, 4):
            nu[sel] = price
    sel = zone == 0
    e[sel] = -e_dis[sel]
    sel = zone == 6
    e[sel] = e_chg[sel]
    for z in (2, 4):
        sel = zone == z
        e[sel] = r[sel] - v[sel] - d[sel].sum(axis=-1)

    brackets = {1: (p_dis, pi_plus), 3: (p_chg, p_dis), 5: (pi_minus, p_chg)}
    solve = np.isin(zone, (1, 3, 5))
    if solve.any():
        zs = zone[solve]
        shift = np.where(zs == 1, e_dis[solve], np.where(zs == 5, -e_chg[solve], 0.0))
        lo = np.select([zs == 1, zs == 3, zs == 5], [brackets[1][0], brackets[3][0], brackets[5][0]])
        hi = np.select([zs == 1, zs == 3, zs == 5], [brackets[1][1], brackets[3][1], brackets[5][1]])
        nu_s, v_s, d_s = _clear(r[solve] + shift, y[solve], lo, hi, devs, f, vm)
        v[solve], d[solve], nu[solve] = v_s, d_s, nu_s
        e[solve] = -shift
    return Decisions(v=v, e=e, d=d, nu=nu, zone=zone)


def decide_procrastination(t: int, y, r, row: ThresholdRow, f: ConcavePLFunction,
                           config: HouseholdConfig) -> Decisions:
    """EV charging and consumption with storage idle."""
    y, r = _as_arrays(y, r)
    devs, vm = config.devices, config.v_max
    pi_plus, pi_minus = config.tariff.prices(t)
    zeros = np.zeros_like(y)
    bd = delta_boundaries(t, y, zeros, zeros, config, row)
    zone = np.where(r < bd.plus, 0, np.where(r > bd.minus, 6, 3))
    n, k = y.size, len(devs)
    v = np.zeros(n)
    d = np.zeros((n, k))
    nu = np.full(n, np.nan)
    for z, price, theta in ((0, pi_plus, row.tau), (6, pi_minus, row.delta)):
        sel = zone == z
        if sel.any():
            v[sel] = h_theta(y[sel], theta, vm)
            d[sel] = marginal_consumption(np.full(sel.sum(), price), devs)[0]
    sel = zone == 3
    if sel.any():
        nu[sel], v[sel], d[sel] = _clear(r[sel], y[sel], pi_minus, pi_plus, devs, f, vm)
    return Decisions(v=v, e=zeros.copy(), d=d, nu=nu, zone=zone)


def _consumption_only(x, pi_plus, pi_minus, devices):
    """Surplus-maximising consumption when ``x`` kWh of renewable is left for the devices."""
    x = np.asarray(x, dtype=float)
    hi_load = aggregate_consumption(pi_plus, devices)
    lo_load = aggregate_consumption(pi_minus, devices)
    price = np.where(x <= hi_load, pi_plus, pi_minus)
    mid = (x > hi_load) & (x < lo_load)
    if mid.any():
        lo = np.full(mid.sum(), float(pi_minus))
        hi = np.full(mid.sum(), float(pi_plus))
        xt = x[mid]
        for _ in range(BISECTION_STEPS):
            m = 0.5 * (lo + hi)
            above = aggregate_consumption(m, devices) > xt
            lo = np.where(above, m, lo)
            hi = np.where(above, hi, m)
        price = price.copy()
        price[mid] = hi
    d, total = marginal_consumption(price, devices)
    if mid.any():
        # Absorb bisection round-off so the household sits exactly at net zero.
        scale = np.where(total[mid] > 0, x[mid] / np.where(total[mid] > 0, total[mid], 1.0), 1.0)
        d[mid] = d[mid] * scale[:, None]
    return d


def _storage_residual(residual, e_dis, e_chg):
    """Storage takes what is left: charge from surplus, discharge against deficit."""
    return np.clip(residual, -e_dis, e_chg)


def decide_pr(t: int, s, y, r, config: HouseholdConfig) -> Decisions:
    """Payment-reduction baseline.

    1. EV is charged only what the deadline forces: ``h(y, (T-t-1) v_max)``.
    2. Devices maximise surplus against the renewable left after step 1.
    3. Any renewable still spare tops the EV up to ``min(y, v_max)``.
    4. Storage absorbs the remaining surplus or offsets the remaining deficit.
    """
    s, y, r = _as_arrays(s, y, r)
    devs, vm = config.devices, config.v_max
    pi_plus, pi_minus = config.tariff.prices(t)
    e_dis, e_chg = effective_storage_bounds(s, config)
    v_forced = h_theta(y, (config.T - t - 1) * vm, vm)
    d = _consumption_only(r - v_forced, pi_plus, pi_minus, devs)
    spare = np.maximum(r - v_forced - d.sum(axis=-1), 0.0)
    v = v_forced + np.minimum(spare, np.maximum(np.minimum(y, vm) - v_forced, 0.0))
    e = _storage_residual(r - v - d.sum(axis=-1), e_dis, e_chg)
    return Decisions(v=v, e=e, d=d, nu=np.full(y.size, np.nan), zone=_zone_from_net(v + d.sum(-1) + e - r))


def decide_nco(t: int, s, y, r, row: ThresholdRow, config: HouseholdConfig) -> Decisions:
    """Sequential baseline: EV alone, then devices, then storage, each with earlier choices fixed.

    The EV step maximises ``-P(v - r) + Vbar_{t+1}(y - v)``, whose solution is
    ``clip(r, h(y, tau), h(y, delta))``.
    """
    s, y, r = _as_arrays(s, y, r)
    devs, vm = config.devices, config.v_max
    pi_plus, pi_minus = config.tariff.prices(t)
    e_dis, e_chg = effective_storage_bounds(s, config)
    v = np.clip(r, h_theta(y, row.tau, vm), h_theta(y, row.delta, vm))
    d = _consumption_only(r - v, pi_plus, pi_minus, devs)
    e = _storage_residual(r - v - d.sum(axis=-1), e_dis, e_chg)
    return Decisions(v=v, e=e, d=d, nu=np.full(y.size, np.nan), zone=_zone_from_net(v + d.sum(-1) + e - r))


def decide_cco(t: int, s, y, r, row: ThresholdRow, f: ConcavePLFunction, config: HouseholdConfig) -> Decisions:
    """EV and devices co-optimised with storage idle; storage then takes the residual."""
    s, y, r = _as_arrays(s, y, r)
    dec = decide_procrastination(t, y, r, row, f, config)
    e_dis, e_chg = effective_storage_bounds(s, config)
    dec.e = _storage_residual(r - dec.v - dec.d_total, e_dis, e_chg)
    return dec


def _zone_from_net(z, tol=1e-9):
    return np.where(z > tol, 0, np.where(z < -tol, 6, 3))


# Single-state wrappers -------------------------------------------------------


def _wrap(dec: Decisions, labels) -> PolicyDecision:
    nu = float(dec.nu[0])
    zone = int(dec.zone[0])
    label = labels[zone] if isinstance(labels, dict) else labels[zone]
    return PolicyDecision(action=dec.take(0), zone=label, nu=None if np.isnan(nu) else nu)


def procrastination_policy(state: State, row: ThresholdRow, vbar_next: ConcavePLFunction,
                           config: HouseholdConfig) -> PolicyDecision:
    dec = decide_procrastination(state.t, state.y, state.r, row, vbar_next, config)
    return _wrap(dec, PROCRASTINATION_LABELS)


def myopic_policy(state: State, row: ThresholdRow, vbar_next: ConcavePLFunction,
                  config: HouseholdConfig) -> PolicyDecision:
    e_dis, e_chg = effective_storage_bounds(state.s, config)
    dec = decide_myopic(state.t, state.y, state.r, e_dis, e_chg, row, vbar_next, config)
    return _wrap(dec, ZONE_LABELS)


def pr_policy(state: State, config: HouseholdConfig) -> Action:
    return decide_pr(state.t, state.s, state.y, state.r, config).take(0)


def nco_policy(state: State, row: ThresholdRow, vbar_next: ConcavePLFunction, config: HouseholdConfig) -> Action:
    return decide_nco(state.t, state.s, state.y, state.r, row, config).take(0)


def cco_policy(state: State, row: ThresholdRow, vbar_next: ConcavePLFunction, config: HouseholdConfig) -> Action:
    return decide_cco(state.t, state.s, state.y, state.r, row, vbar_next, config).take(0)
