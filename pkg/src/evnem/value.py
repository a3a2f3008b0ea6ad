"""Expected value functions of remaining EV demand and the policy thresholds derived from them.

``backward_induct`` builds ``Vbar_t(y)`` on an explicit demand grid. Storage is
handled in one of two ways:

* ``mode="myopic"``: storage operates every interval at its nominal rate limits
  and is valued at salvage (``beta*eta_c`` per kWh stored, ``beta/eta_d`` per kWh
  withdrawn). This is the continuation the storage-aware policy needs.
* ``mode="storage-free"``: storage is idle, giving the value function of the
  EV-plus-consumption problem alone.

The two coincide when the household has no storage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import isotonic_regression

from .model import HouseholdConfig, aggregate_consumption, nem_payment, soc_change, total_utility

SLOPE_TIE_TOL = 1e-11
CONCAVITY_TOL = 1e-6
SPAN_TOL = 1e-9


class ConcavityError(ValueError):
    """Backward step produced a value function that is visibly not concave."""


@dataclass(frozen=True)
class Supergradient:
    """One-sided slopes at a point. ``right <= left`` for a concave function.

    At the left end of the grid there is no left slope; it is reported as
    ``-inf`` with ``left_open`` set.
    """

    right: float
    left: float
    left_open: bool = False


class ConcavePLFunction:
    """Piecewise-linear concave function on an explicit, strictly increasing grid."""

    def __init__(self, breakpoints, values, max_violation: float = 0.0):
        x = np.asarray(breakpoints, dtype=float)
        v = np.asarray(values, dtype=float)
        if x.ndim != 1 or x.shape != v.shape or x.size < 2:
            raise ValueError("breakpoints and values must be 1-d arrays of equal length >= 2")
        if np.any(np.diff(x) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        self.breakpoints = x
        self.values = v
        self.slopes = np.diff(v) / np.diff(x)
        # Pre-clamp concavity defect recorded by ``from_samples``.
        self.max_violation = max_violation
        self._neg_slopes = -self.slopes

    @classmethod
    def from_samples(cls, breakpoints, values, tol: float = CONCAVITY_TOL) -> "ConcavePLFunction":
        """Interpolate samples, projecting slopes onto non-increasing sequences.

        Defects up to ``tol`` are treated as round-off and removed by weighted
        isotonic regression; larger ones raise :class:`ConcavityError`.
        """
        x = np.asarray(breakpoints, dtype=float)
        v = np.asarray(values, dtype=float)
        dx = np.diff(x)
        slopes = np.diff(v) / dx
        viol = float(np.max(np.diff(slopes), initial=0.0))
        if viol > tol:
            k = int(np.argmax(np.diff(slopes)))
            raise ConcavityError(
                f"slope rises by {viol:.3g} at y={x[k + 1]:.6g} (tolerance {tol:g})"
            )
        if viol > 0:
            slopes = isotonic_regression(slopes, weights=dx, increasing=False).x
            v = np.concatenate([[v[0]], v[0] + np.cumsum(slopes * dx)])
        return cls(x, v, max_violation=max(viol, 0.0))

    @classmethod
    def linear(cls, breakpoints, slope: float, intercept: float = 0.0) -> "ConcavePLFunction":
        x = np.asarray(breakpoints, dtype=float)
        return cls(x, intercept + slope * x)

    @property
    def lo(self) -> float:
        return float(self.breakpoints[0])

    @property
    def hi(self) -> float:
        return float(self.breakpoints[-1])

    def _check_span(self, y):
        y = np.asarray(y, dtype=float)
        if np.any(y < self.lo - SPAN_TOL) or np.any(y > self.hi + SPAN_TOL):
            raise ValueError(f"evaluation outside grid span [{self.lo:g}, {self.hi:g}]")
        return np.clip(y, self.lo, self.hi)

    def __call__(self, y):
        y = self._check_span(y)
        out = np.interp(y, self.breakpoints, self.values)
        return float(out) if out.ndim == 0 else out

    def supergradient(self, y: float) -> Supergradient:
        y = float(self._check_span(y))
        x, k = self.breakpoints, self.slopes
        j = int(np.searchsorted(x, y, side="right")) - 1
        if j >= len(k):
            return Supergradient(right=-math.inf, left=float(k[-1]))
        on_break = abs(y - x[j]) <= SPAN_TOL
        if not on_break:
            return Supergradient(right=float(k[j]), left=float(k[j]))
        if j == 0:
            return Supergradient(right=float(k[0]), left=-math.inf, left_open=True)
        return Supergradient(right=float(k[j]), left=float(k[j - 1]))

    def w_inverse(self, price, strict: bool = False):
        """Demand level where ``-price`` enters the supergradient.

        Counts segments whose slope is ``>= -price`` (ties included, so the
        largest qualifying breakpoint wins) and returns the breakpoint ending
        the last of them. ``strict=True`` excludes ties, which gives the limit
        from below in ``price``.
        """
        p = np.asarray(price, dtype=float)
        if strict:
            m = np.searchsorted(self._neg_slopes, p - SLOPE_TIE_TOL, side="left")
        else:
            m = np.searchsorted(self._neg_slopes, p + SLOPE_TIE_TOL, side="right")
        out = self.breakpoints[m]
        return float(out) if out.ndim == 0 else out


def supergradient(f: ConcavePLFunction, y: float) -> Supergradient:
    return f.supergradient(y)


def w_inverse(f: ConcavePLFunction, price):
    return f.w_inverse(price)


def make_y_grid(y_max: float, v_max: float, T: int, spacing: float | None = None) -> np.ndarray:
    """Uniform demand grid that also contains ``y_max`` and every multiple of ``v_max``."""
    if y_max <= 0:
        raise ValueError("y_max must be positive")
    if spacing is None:
        spacing = min(v_max, y_max) / 50 if v_max > 0 else y_max / 50
    if v_max > 0 and spacing > v_max / 4 + 1e-12:
        raise ValueError(f"grid spacing {spacing:g} exceeds v_max/4 = {v_max / 4:g}")
    n = int(math.floor(y_max / spacing + 1e-9))
    pts = [np.arange(n + 1) * spacing, [y_max]]
    if v_max > 0:
        k = np.arange(0, min(T, int(math.floor(y_max / v_max + 1e-9))) + 1)
        pts.append(k * v_max)
    grid = np.unique(np.concatenate(pts))
    keep = np.concatenate([[True], np.diff(grid) > 1e-9])
    grid = grid[keep]
    grid[-1] = y_max
    return grid


@dataclass(frozen=True)
class Quadrature:
    """Fixed nodes and weights standing in for the distribution of ``r_t``."""

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        nodes = np.atleast_1d(np.asarray(self.nodes, dtype=float))
        weights = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if nodes.shape != weights.shape:
            raise ValueError("nodes and weights must match")
        if np.any(nodes < 0) or np.any(weights < 0) or not np.isclose(weights.sum(), 1.0):
            raise ValueError("need non-negative nodes and weights summing to one")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def point(cls, r: float) -> "Quadrature":
        return cls(np.array([float(r)]), np.array([1.0]))

    @property
    def mean(self) -> float:
        return float(self.nodes @ self.weights)


@dataclass(frozen=True)
class ThresholdRow:
    tau: float
    delta: float
    sigma_plus: float
    sigma_minus: float


@dataclass
class ThresholdTable:
    tau: np.ndarray
    delta: np.ndarray
    sigma_plus: np.ndarray
    sigma_minus: np.ndarray
    flags: list[tuple[int, str]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.tau)

    def row(self, t: int) -> ThresholdRow:
        return ThresholdRow(float(self.tau[t]), float(self.delta[t]),
                            float(self.sigma_plus[t]), float(self.sigma_minus[t]))

    def rows(self):
        for t in range(len(self)):
            yield t, self.row(t)


def threshold_row(t: int, config: HouseholdConfig, vbar_next: ConcavePLFunction) -> ThresholdRow:
    """Thresholds at interval ``t`` from the continuation ``Vbar_{t+1}``."""
    tar = config.tariff
    period = tar.period(t)
    if period == "off1":
        tau = vbar_next.w_inverse(tar.pi_off_plus)
    else:
        tau = (config.T - t - 1) * config.v_max
    off2_empty = tar.off2[1] == tar.off2[0]
    if period == "on" and not off2_empty:
        delta = vbar_next.w_inverse(tar.pi_on_minus)
    else:
        delta = 0.0
    return ThresholdRow(
        tau=float(tau),
        delta=float(delta),
        sigma_plus=float(vbar_next.w_inverse(config.discharge_value)),
        sigma_minus=float(vbar_next.w_inverse(config.charge_value)),
    )


def ordering_flags(t: int, row: ThresholdRow) -> list[tuple[int, str]]:
    chain = [("tau", row.tau), ("sigma+", row.sigma_plus), ("sigma-", row.sigma_minus), ("delta", row.delta)]
    out = []
    for (na, a), (nb, b) in zip(chain, chain[1:]):
        if a < b - SPAN_TOL:
            out.append((t, f"{na}={a:g} < {nb}={b:g}"))
        elif a <= b + SPAN_TOL:
            out.append((t, f"{na} == {nb} = {a:g} (degenerate)"))
    return out


def compute_thresholds(config: HouseholdConfig, vbars: Sequence[ConcavePLFunction]) -> ThresholdTable:
    """Threshold table for every interval; ``vbars[t]`` is ``Vbar_t`` for ``t = 0..T``."""
    T = config.T
    if len(vbars) < T + 1:
        raise ValueError(f"need {T + 1} value functions (including terminal), got {len(vbars)}")
    rows = [threshold_row(t, config, vbars[t + 1]) for t in range(T)]
    flags = [f for t, row in enumerate(rows) for f in ordering_flags(t, row)]
    return ThresholdTable(
        tau=np.array([r.tau for r in rows]),
        delta=np.array([r.delta for r in rows]),
        sigma_plus=np.array([r.sigma_plus for r in rows]),
        sigma_minus=np.array([r.sigma_minus for r in rows]),
        flags=flags,
    )


def h_theta(y, theta, v_max):
    """EV charge that brings demand ``y`` down towards ``theta``, capped at ``v_max``."""
    return np.minimum(v_max, np.maximum(np.asarray(y, dtype=float) - theta, 0.0))


@dataclass(frozen=True)
class DeltaBoundaries:
    """Renewable levels separating the decision regions, in increasing order."""

    plus: np.ndarray
    minus: np.ndarray
    plus_prime: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    d3: np.ndarray
    d4: np.ndarray
    minus_prime: np.ndarray

    def as_tuple(self):
        return (self.plus, self.minus, self.plus_prime, self.d1, self.d2, self.d3, self.d4, self.minus_prime)


def delta_boundaries(t: int, y, e_dis, e_chg, config: HouseholdConfig, row: ThresholdRow) -> DeltaBoundaries:
    """All eight renewable boundaries for demand ``y`` and effective storage bounds.

    ``e_dis``/``e_chg`` are the effective discharge and charge limits for the
    current SoC (see :func:`evnem.model.effective_storage_bounds`).
    """
    pi_plus, pi_minus = config.tariff.prices(t)
    devs, vm = config.devices, config.v_max
    y = np.asarray(y, dtype=float)
    plus = aggregate_consumption(pi_plus, devs) + h_theta(y, row.tau, vm)
    minus = aggregate_consumption(pi_minus, devs) + h_theta(y, row.delta, vm)
    d2 = aggregate_consumption(config.discharge_value, devs) + h_theta(y, row.sigma_plus, vm)
    d3 = aggregate_consumption(config.charge_value, devs) + h_theta(y, row.sigma_minus, vm)
    return DeltaBoundaries(
        plus=plus,
        minus=minus,
        plus_prime=np.maximum(plus - e_dis, 0.0),
        d1=np.maximum(d2 - e_dis, 0.0),
        d2=d2,
        d3=d3,
        d4=d3 + e_chg,
        minus_prime=minus + e_chg,
    )


@dataclass
class ValueTables:
    """Backward-induction output.

    ``vbar[t]`` is ``Vbar_t`` for ``t = 0..T`` (``vbar[T]`` is the terminal
    ``-alpha*y``). ``max_violation[t]`` is the largest pre-clamp slope increase.
    """

    mode: str
    grid: np.ndarray
    vbar: list[ConcavePLFunction]
    thresholds: ThresholdTable
    max_violation: np.ndarray

    def next_value(self, t: int) -> ConcavePLFunction:
        return self.vbar[t + 1]


def backward_induct(
    config: HouseholdConfig,
    renewable: Sequence[Quadrature],
    y_grid=None,
    mode: str = "myopic",
    concavity_tol: float = CONCAVITY_TOL,
) -> ValueTables:
    """Expected value of remaining demand by backward induction over ``t = T-1 .. 0``.

    Each one-step problem is solved with the threshold zone logic against the
    already-built continuation, at every (grid point, quadrature node) pair.
    """
    from .policies import decide_myopic

    if mode not in ("myopic", "storage-free"):
        raise ValueError(f"unknown mode {mode!r}")
    cfg = config.with_ev_efficiency_folded()
    T = cfg.T
    if len(renewable) != T:
        raise ValueError(f"need one quadrature per interval ({T}), got {len(renewable)}")
    grid = make_y_grid(max(cfg.y0, 1e-6), cfg.v_max, T) if y_grid is None else np.asarray(y_grid, dtype=float)
    if grid[0] != 0.0:
        raise ValueError("demand grid must start at 0")
    if cfg.v_max > 0 and np.max(np.diff(grid)) > cfg.v_max / 4 + 1e-12:
        raise ValueError("demand grid spacing must not exceed v_max/4")

    e_dis, e_chg = (cfg.e_dis_max, cfg.e_chg_max) if mode == "myopic" else (0.0, 0.0)
    vbar: list[ConcavePLFunction | None] = [None] * (T + 1)
    vbar[T] = ConcavePLFunction.linear(grid, -cfg.alpha)
    viol = np.zeros(T + 1)

    n = grid.size
    for t in range(T - 1, -1, -1):
        f = vbar[t + 1]
        row = threshold_row(t, cfg, f)
        quad = renewable[t]
        m = quad.nodes.size
        y = np.repeat(grid, m)
        r = np.tile(quad.nodes, n)
        dec = decide_myopic(t, y, r, e_dis, e_chg, row, f, cfg)
        pi_plus, pi_minus = cfg.tariff.prices(t)
        z = dec.v + dec.d_total + dec.e - r
        val = (
            total_utility(cfg.devices, dec.d)
            - nem_payment(z, pi_plus, pi_minus, cfg.tariff.pi_zero)
            + cfg.beta * soc_change(dec.e, cfg.eta_c, cfg.eta_d)
            + f(np.maximum(y - dec.v, 0.0))
        )
        expected = val.reshape(n, m) @ quad.weights
        vbar[t] = ConcavePLFunction.from_samples(grid, expected, tol=concavity_tol)
        viol[t] = vbar[t].max_violation

    table = compute_thresholds(cfg, vbar)
    return ValueTables(mode=mode, grid=grid, vbar=list(vbar), thresholds=table, max_violation=viol)
