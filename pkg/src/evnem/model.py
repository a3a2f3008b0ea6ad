"""Household domain model: tariff, devices, storage, EV and the per-interval surplus.

All quantities are per interval (one hour by default), energies in kWh and
prices in currency per kWh. Scalar helpers accept numpy arrays and broadcast,
which the vectorised policies and the simulator rely on.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

FEAS_TOL = 1e-9

PERIODS = ("off1", "on", "off2")


@dataclass(frozen=True)
class TariffSchedule:
    """Two-level time-of-use NEM tariff over a horizon of ``horizon_T`` intervals.

    ``off1``, ``on`` and ``off2`` are half-open ``(start, stop)`` index ranges
    that tile ``[0, horizon_T)`` in that order.
    """

    horizon_T: int
    off1: tuple[int, int]
    on: tuple[int, int]
    off2: tuple[int, int]
    pi_off_plus: float
    pi_off_minus: float
    pi_on_plus: float
    pi_on_minus: float
    pi_zero: float = 0.0

    @classmethod
    def from_lengths(cls, n_off1: int, n_on: int, n_off2: int, **prices) -> "TariffSchedule":
        a, b = n_off1, n_off1 + n_on
        T = b + n_off2
        return cls(T, (0, a), (a, b), (b, T), **prices)

    def period(self, t: int) -> str:
        for name in PERIODS:
            lo, hi = getattr(self, name)
            if lo <= t < hi:
                return name
        raise IndexError(f"interval {t} outside horizon [0, {self.horizon_T})")

    def prices(self, t: int) -> tuple[float, float]:
        """(import, export) price at interval ``t``."""
        if self.period(t) == "on":
            return self.pi_on_plus, self.pi_on_minus
        return self.pi_off_plus, self.pi_off_minus

    @property
    def import_prices(self) -> np.ndarray:
        return np.array([self.prices(t)[0] for t in range(self.horizon_T)])

    @property
    def export_prices(self) -> np.ndarray:
        return np.array([self.prices(t)[1] for t in range(self.horizon_T)])

    def same_period(self, t: int, u: int) -> bool:
        return self.period(t) == self.period(u)


@dataclass(frozen=True)
class DeviceUtility:
    """Quadratic utility ``U(d) = a d - b d^2 / 2`` on ``[0, d_max]``."""

    a: float
    b: float
    d_max: float

    def utility(self, d):
        return self.a * d - 0.5 * self.b * d * d

    def marginal(self, d):
        return self.a - self.b * d

    def consumption_at(self, price):
        """Surplus-maximising consumption when energy costs ``price``."""
        return np.clip((self.a - price) / self.b, 0.0, self.d_max)


@dataclass(frozen=True)
class HouseholdConfig:
    B: float
    e_chg_max: float
    e_dis_max: float
    eta_c: float
    eta_d: float
    v_max: float
    alpha: float
    beta: float
    devices: tuple[DeviceUtility, ...]
    tariff: TariffSchedule
    s0: float = 0.0
    y0: float = 0.0
    eta_ev: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "devices", tuple(self.devices))

    @property
    def T(self) -> int:
        return self.tariff.horizon_T

    @property
    def charge_value(self) -> float:
        """Salvage value of one kWh drawn into the battery (beta * eta_c)."""
        return self.beta * self.eta_c

    @property
    def discharge_value(self) -> float:
        """Salvage value lost per kWh delivered by the battery (beta / eta_d)."""
        return self.beta / self.eta_d

    def with_ev_efficiency_folded(self) -> "HouseholdConfig":
        """Equivalent config with unit EV efficiency.

        Demand is measured in charger-side kWh (``y / eta``); the unmet-demand
        penalty is rescaled so the terminal cost is unchanged.
        """
        if self.eta_ev == 1.0:
            return self
        return replace(self, y0=self.y0 / self.eta_ev, alpha=self.alpha * self.eta_ev, eta_ev=1.0)


@dataclass(frozen=True)
class State:
    t: int
    s: float
    y: float
    r: float
    prices: tuple[float, float]

    @classmethod
    def at(cls, config: HouseholdConfig, t: int, s: float, y: float, r: float) -> "State":
        return cls(t, s, y, r, config.tariff.prices(t))


@dataclass(frozen=True)
class Action:
    v: float
    e: float
    d: tuple[float, ...] = field(default=())

    @property
    def d_total(self) -> float:
        return float(sum(self.d))


@dataclass(frozen=True)
class Violation:
    name: str
    detail: str


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def names(self) -> list[str]:
        return [v.name for v in self.violations]

    def __str__(self) -> str:
        if self.ok:
            return "OK"
        return "\n".join(f"{v.name}: {v.detail}" for v in self.violations)


def validate_config(config: HouseholdConfig) -> ValidationReport:
    """Check every structural and economic invariant; violations are returned, not raised."""
    report = ValidationReport()
    bad = report.violations.append
    tar = config.tariff

    ranges = [tar.off1, tar.on, tar.off2]
    cursor = 0
    for name, (lo, hi) in zip(PERIODS, ranges):
        if lo != cursor or hi < lo:
            bad(Violation("tariff partition", f"{name}={lo, hi} does not continue from {cursor}"))
            break
        cursor = hi
    else:
        if cursor != tar.horizon_T:
            bad(Violation("tariff partition", f"periods end at {cursor}, horizon is {tar.horizon_T}"))

    chain = [tar.pi_off_minus, tar.pi_on_minus, tar.pi_off_plus, tar.pi_on_plus]
    if not all(x < y for x, y in zip(chain, chain[1:])):
        bad(Violation(
            "arbitrage-free ordering",
            "need pi_off- < pi_on- < pi_off+ < pi_on+, got " + " , ".join(f"{p:g}" for p in chain),
        ))

    labels = ["pi_off-", "pi_on-", "beta*eta_c", "beta/eta_d", "pi_off+", "pi_on+", "alpha"]
    if config.eta_c > 0 and config.eta_d > 0:
        values = [tar.pi_off_minus, tar.pi_on_minus, config.charge_value, config.discharge_value,
                  tar.pi_off_plus, tar.pi_on_plus, config.alpha]
        broken = [f"{labels[i]}={values[i]:g} !< {labels[i + 1]}={values[i + 1]:g}"
                  for i in range(len(values) - 1) if not values[i] < values[i + 1]]
        if broken:
            bad(Violation("price-penalty chain", "; ".join(broken)))

    for name in ("eta_c", "eta_d", "eta_ev"):
        val = getattr(config, name)
        if not 0 < val <= 1:
            bad(Violation("efficiency range", f"{name}={val:g} not in (0, 1]"))
    for name in ("B", "e_chg_max", "e_dis_max", "v_max"):
        if getattr(config, name) < 0:
            bad(Violation("negative limit", f"{name}={getattr(config, name):g}"))
    if not 0 <= config.s0 <= config.B:
        bad(Violation("initial SoC", f"s0={config.s0:g} outside [0, {config.B:g}]"))
    if config.y0 < 0:
        bad(Violation("initial EV demand", f"y0={config.y0:g} < 0"))
    if not config.devices:
        bad(Violation("devices", "at least one flexible device is required"))
    for i, dev in enumerate(config.devices):
        if dev.b <= 0 or dev.d_max < 0:
            bad(Violation("device utility", f"devices[{i}]: need b > 0 and d_max >= 0"))
    return report


def net_consumption(v, d_total, e, r):
    """Metered net consumption ``z = v + sum(d) + e - r``."""
    return v + d_total + e - r


def nem_payment(z, pi_plus, pi_minus, pi_zero=0.0):
    """NEM bill for net consumption ``z``: import at ``pi_plus``, export credited at ``pi_minus``."""
    return np.where(z >= 0, z * pi_plus, z * pi_minus) + pi_zero


def total_utility(devices: Sequence[DeviceUtility], d) -> float:
    """Sum of device utilities; ``d`` has the device axis last."""
    d = np.asarray(d, dtype=float)
    return sum(dev.utility(d[..., i]) for i, dev in enumerate(devices))


def stage_reward(state: State, action: Action, config: HouseholdConfig) -> float:
    """Household surplus ``U(d) - P(z)`` for one interval."""
    pi_plus, pi_minus = state.prices
    z = net_consumption(action.v, action.d_total, action.e, state.r)
    pay = nem_payment(z, pi_plus, pi_minus, config.tariff.pi_zero)
    return float(total_utility(config.devices, action.d) - pay)


def terminal_reward(s_T, y_T, alpha, beta):
    """Salvage value of stored energy minus the unmet-demand penalty."""
    return beta * s_T - alpha * y_T


def soc_change(e, eta_c, eta_d):
    """SoC increment for storage operation ``e`` (charge > 0, discharge < 0)."""
    return np.where(e >= 0, eta_c * e, e / eta_d)


def step_dynamics(state: State, action: Action, r_next: float, config: HouseholdConfig) -> State:
    s_next = state.s + float(soc_change(action.e, config.eta_c, config.eta_d))
    y_next = state.y - config.eta_ev * action.v
    if s_next < -FEAS_TOL or s_next > config.B + FEAS_TOL:
        raise ValueError(f"t={state.t}: storage action e={action.e:g} drives SoC to {s_next:g}")
    if y_next < -FEAS_TOL:
        raise ValueError(f"t={state.t}: EV charge v={action.v:g} exceeds remaining demand {state.y:g}")
    t_next = state.t + 1
    prices = config.tariff.prices(t_next) if t_next < config.T else state.prices
    return State(t_next, min(max(s_next, 0.0), config.B), max(y_next, 0.0), r_next, prices)


def effective_storage_bounds(s, config: HouseholdConfig):
    """(max discharge, max charge) this interval given SoC ``s``."""
    e_dis = np.minimum(config.e_dis_max, s * config.eta_d)
    e_chg = np.minimum(config.e_chg_max, (config.B - s) / config.eta_c)
    return e_dis, e_chg


def marginal_consumption(price, devices: Sequence[DeviceUtility]):
    """Per-device consumption at ``price`` (device axis last) and the aggregate."""
    price = np.asarray(price, dtype=float)
    per = np.stack([dev.consumption_at(price) for dev in devices], axis=-1)
    return per, per.sum(axis=-1)


def aggregate_consumption(price, devices: Sequence[DeviceUtility]):
    price = np.asarray(price, dtype=float)
    total = np.zeros_like(price)
    for dev in devices:
        total = total + dev.consumption_at(price)
    return total


def check_action(state: State, action: Action, config: HouseholdConfig, tol: float = FEAS_TOL) -> list[str]:
    """Names of the constraints ``action`` violates at ``state`` (empty when feasible)."""
    problems = []
    if action.v < -tol or action.v > min(state.y / config.eta_ev, config.v_max) + tol:
        problems.append("ev charge")
    if action.e < -config.e_dis_max - tol or action.e > config.e_chg_max + tol:
        problems.append("storage rate")
    s_next = state.s + float(soc_change(action.e, config.eta_c, config.eta_d))
    if s_next < -tol or s_next > config.B + tol:
        problems.append("state of charge")
    for d, dev in zip(action.d, config.devices):
        if d < -tol or d > dev.d_max + tol:
            problems.append("consumption")
            break
    return problems
