"""Shared builders and independent oracles for the test suite."""

from __future__ import annotations

import itertools
import math

import numpy as np

from evnem.model import DeviceUtility, HouseholdConfig, TariffSchedule, nem_payment, soc_change, total_utility
from evnem.simulator import PolicyTables, simulate_batch
from evnem.value import Quadrature, backward_induct, make_y_grid


def config_a(**overrides) -> HouseholdConfig:
    """T=2 all off-peak instance used across the suite."""
    tariff = TariffSchedule.from_lengths(2, 0, 0, pi_off_plus=0.6, pi_off_minus=0.1,
                                         pi_on_plus=0.8, pi_on_minus=0.2)
    base = dict(B=10.0, e_chg_max=1.0, e_dis_max=1.0, eta_c=0.9, eta_d=0.9, v_max=1.0,
                alpha=1.0, beta=0.4, devices=(DeviceUtility(1.0, 0.5, 2.0),),
                tariff=tariff, s0=5.0, y0=1.5)
    base.update(overrides)
    return HouseholdConfig(**base)


TCA_R = np.array([0.8, 1.2])


def random_prices(rng: np.random.Generator, eta_c: float, eta_d: float):
    """Draw (tariff prices, alpha, beta) satisfying the full price-penalty chain."""
    beta = rng.uniform(0.2, 0.5)
    lo, hi = beta * eta_c, beta / eta_d
    pi_off_minus = rng.uniform(0.2, 0.6) * lo
    pi_on_minus = rng.uniform(pi_off_minus + 1e-3, lo - 1e-3)
    pi_off_plus = hi + rng.uniform(0.02, 0.3)
    pi_on_plus = pi_off_plus + rng.uniform(0.02, 0.3)
    alpha = pi_on_plus + rng.uniform(0.1, 1.0)
    prices = dict(pi_off_plus=pi_off_plus, pi_off_minus=pi_off_minus, pi_on_plus=pi_on_plus, pi_on_minus=pi_on_minus)
    return prices, alpha, beta


def random_tiny_config(rng: np.random.Generator, T: int, resolution: float = 1e-2) -> HouseholdConfig:
    """Small instance whose SoC limits can never bind over the horizon."""
    eta_c, eta_d = rng.uniform(0.85, 0.98, size=2)
    prices, alpha, beta = random_prices(rng, eta_c, eta_d)
    lengths = [(T, 0, 0), (1, T - 1, 0), (0, T - 1, 1), (1, 1, T - 2)][rng.integers(0, 4 if T >= 2 else 1)]
    e_chg, e_dis = np.round(rng.uniform(0.3, 0.7, size=2), 2)
    v_max = round(float(rng.uniform(0.3, 0.7)), 2)
    s_need_dis = T * e_dis / eta_d
    s_need_chg = T * eta_c * e_chg
    s0 = s_need_dis + rng.uniform(0.5, 2.0)
    B = s0 + s_need_chg + rng.uniform(0.5, 2.0)
    y0 = round(float(rng.uniform(0.0, T * v_max * 1.3)) / resolution) * resolution
    dev = DeviceUtility(a=float(rng.uniform(0.8, 2.0)), b=float(rng.uniform(0.5, 2.0)), d_max=float(rng.uniform(0.5, 1.5)))
    return HouseholdConfig(B=B, e_chg_max=float(e_chg), e_dis_max=float(e_dis), eta_c=eta_c, eta_d=eta_d,
                           v_max=v_max, alpha=alpha, beta=beta, devices=(dev,),
                           tariff=TariffSchedule.from_lengths(*lengths, **prices), s0=s0, y0=y0)


def random_config(rng: np.random.Generator, T: int, n_devices: int = 2, storage: bool = True) -> HouseholdConfig:
    """Mid-size instance with random tariff partition and several devices."""
    eta_c, eta_d = rng.uniform(0.85, 0.99, size=2)
    prices, alpha, beta = random_prices(rng, eta_c, eta_d)
    cuts = np.sort(rng.integers(0, T + 1, size=2))
    lengths = (int(cuts[0]), int(cuts[1] - cuts[0]), int(T - cuts[1]))
    devices = tuple(DeviceUtility(a=float(rng.uniform(0.6, 2.0)), b=float(rng.uniform(0.3, 2.0)),
                                  d_max=float(rng.uniform(0.5, 3.0))) for _ in range(n_devices))
    B = float(rng.uniform(2.0, 15.0)) if storage else 0.0
    rate = float(rng.uniform(0.5, 3.5)) if storage else 0.0
    return HouseholdConfig(B=B, e_chg_max=rate, e_dis_max=rate, eta_c=eta_c, eta_d=eta_d,
                           v_max=float(rng.uniform(1.0, 4.0)), alpha=alpha, beta=beta, devices=devices,
                           tariff=TariffSchedule.from_lengths(*lengths, **prices),
                           s0=B * float(rng.uniform(0.0, 1.0)), y0=float(rng.uniform(0.0, 20.0)))


def random_quadratures(rng: np.random.Generator, T: int, n_nodes: int = 16, peak: float = 4.0) -> list[Quadrature]:
    out = []
    for _ in range(T):
        mean = rng.uniform(0.0, peak)
        if mean < 0.2:
            out.append(Quadrature.point(0.0))
            continue
        nodes = rng.lognormal(np.log(mean), 0.5, size=n_nodes)
        out.append(Quadrature(np.sort(nodes), np.full(n_nodes, 1.0 / n_nodes)))
    return out


def tables_for(config: HouseholdConfig, quads, y_max: float | None = None, spacing=None) -> PolicyTables:
    grid = make_y_grid(max(config.y0 if y_max is None else y_max, 1e-6), config.v_max, config.T, spacing)
    return PolicyTables(
        config=config,
        myopic=backward_induct(config, quads, grid, mode="myopic"),
        storage_free=backward_induct(config, quads, grid, mode="storage-free"),
        forecast=np.array([q.mean for q in quads]),
    )


def expected_policy_value(policy: str, tables: PolicyTables, quads) -> float:
    """Exact expectation of a policy's accumulated surplus over every scenario path."""
    paths = list(itertools.product(*[list(zip(q.nodes, q.weights)) for q in quads]))
    r = np.array([[node for node, _ in p] for p in paths])
    w = np.array([math.prod(wt for _, wt in p) for p in paths])
    out = simulate_batch(policy, tables, r, np.full(len(paths), tables.config.y0))
    return float(out.surplus @ w)


# Independent one-step oracle --------------------------------------------------


def best_consumption(devices, x, pi_plus, pi_minus):
    """Exact single-device surplus maximiser given residual ``x = r - v - e`` (NEM kink aware)."""
    (dev,) = devices
    cand = np.stack([np.full_like(x, dev.consumption_at(pi_plus)),
                     np.full_like(x, dev.consumption_at(pi_minus)),
                     np.clip(x, 0.0, dev.d_max)], axis=-1)
    z = cand - x[..., None]
    val = dev.utility(cand) - nem_payment(z, pi_plus, pi_minus)
    k = np.argmax(val, axis=-1)
    return np.take_along_axis(cand, k[..., None], axis=-1)[..., 0]


def grid_argmax(config: HouseholdConfig, t: int, s: float, y: float, r: float, vbar_next, h: float = 1e-3):
    """Exhaustive (v, e) search at resolution ``h`` on the salvage-valued one-step objective.

    Consumption is optimised exactly for each (v, e); returns (value, v, e, d).
    """
    pi_plus, pi_minus = config.tariff.prices(t)
    e_dis = min(config.e_dis_max, s * config.eta_d)
    e_chg = min(config.e_chg_max, (config.B - s) / config.eta_c)
    v = np.linspace(0.0, min(config.v_max, y), int(round(min(config.v_max, y) / h)) + 1)
    e = np.linspace(-e_dis, e_chg, int(round((e_dis + e_chg) / h)) + 1)
    V, E = np.meshgrid(v, e, indexing="ij")
    D = best_consumption(config.devices, r - V - E, pi_plus, pi_minus)
    z = V + D + E - r
    val = (total_utility(config.devices, D[..., None]) - nem_payment(z, pi_plus, pi_minus)
           + config.beta * soc_change(E, config.eta_c, config.eta_d) + vbar_next(y - V))
    i = np.unravel_index(int(np.argmax(val)), val.shape)
    return float(val[i]), float(V[i]), float(E[i]), float(D[i])


def myopic_objective(config, t, s, y, r, v, e, d, vbar_next) -> float:
    pi_plus, pi_minus = config.tariff.prices(t)
    z = v + d + e - r
    return float(total_utility(config.devices, np.atleast_1d(d)) - nem_payment(z, pi_plus, pi_minus)
                 + config.beta * soc_change(e, config.eta_c, config.eta_d) + vbar_next(y - v))
