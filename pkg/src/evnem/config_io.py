"""JSON ingestion for household configs and scenario models, plus CSV table export.

Config layout (all energies in kWh per interval, prices per kWh)::

    {
      "horizon": {"off1": 4, "on": 5, "off2": 7},
      "tariff":  {"pi_off_plus": 0.34, "pi_off_minus": 0.05,
                  "pi_on_plus": 0.41, "pi_on_minus": 0.12, "pi_zero": 0.0},
      "storage": {"capacity": 13.5, "charge_rate": 3.2, "discharge_rate": 3.2,
                  "eta_c": 0.95, "eta_d": 0.95, "s0": 6.75},
      "ev":      {"v_max": 3.6, "eta": 1.0, "y0": 0.0},
      "devices": [{"a": 1.5, "b": 1.0, "d_max": 3.0}],
      "penalty": 1.0,
      "salvage": 0.3
    }

Scenario layout::

    {
      "renewable": {"family": "lognormal", "mean": [...24 values...], "sd": [...]},
      "ev_demand": {"family": "truncated-normal", "mean": 10, "sd": 6, "lo": 0, "hi": 30},
      "start_hours": [12, 13, 14, 15],
      "on_peak": [16, 21],
      "scale": 1.0
    }

``renewable`` may also be a list of per-hour distribution objects. Families:
``point`` (value), ``truncated-normal`` (mean, sd, lo, hi), ``lognormal``
(mean, sd) and ``histogram-file`` (path, relative to the scenario file).
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .model import DeviceUtility, HouseholdConfig, TariffSchedule
from .simulator import Histogram, LogNormal, PointMass, ScenarioError, ScenarioModel, TruncatedNormal
from .value import ThresholdTable, ValueTables


class ConfigError(ValueError):
    """Malformed config or scenario document; ``path`` is the offending JSON path."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def _read_json(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc.strerror}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("$", f"invalid JSON in {path} (line {exc.lineno}, column {exc.colno})") from exc
    if not isinstance(doc, dict):
        raise ConfigError("$", "top level must be an object")
    return doc


def _get(obj, key, path, kind=float, default=None, required=True):
    here = f"{path}.{key}"
    if not isinstance(obj, dict):
        raise ConfigError(path, "expected an object")
    if key not in obj:
        if required and default is None:
            raise ConfigError(here, "missing")
        return default
    val = obj[key]
    if kind is float:
        if isinstance(val, bool) or not isinstance(val, (int, float)) or not math.isfinite(val):
            raise ConfigError(here, f"expected a finite number, got {val!r}")
        return float(val)
    if kind is int:
        if isinstance(val, bool) or not isinstance(val, int):
            raise ConfigError(here, f"expected an integer, got {val!r}")
        return val
    if not isinstance(val, kind):
        raise ConfigError(here, f"expected {kind.__name__}, got {type(val).__name__}")
    return val


def config_from_dict(doc: dict) -> HouseholdConfig:
    """Build a config from a parsed document; structural errors raise :class:`ConfigError`.

    Economic consistency is not checked here; see :func:`evnem.model.validate_config`.
    """
    hz = _get(doc, "horizon", "$", dict)
    lengths = [_get(hz, k, "$.horizon", int) for k in ("off1", "on", "off2")]
    for k, n in zip(("off1", "on", "off2"), lengths):
        if n < 0:
            raise ConfigError(f"$.horizon.{k}", "period length must be non-negative")
    if "T" in hz and _get(hz, "T", "$.horizon", int) != sum(lengths):
        raise ConfigError("$.horizon.T", f"does not equal off1 + on + off2 = {sum(lengths)}")
    if sum(lengths) < 1:
        raise ConfigError("$.horizon", "horizon must contain at least one interval")

    tar = _get(doc, "tariff", "$", dict)
    prices = {k: _get(tar, k, "$.tariff") for k in ("pi_off_plus", "pi_off_minus", "pi_on_plus", "pi_on_minus")}
    prices["pi_zero"] = _get(tar, "pi_zero", "$.tariff", default=0.0, required=False)
    tariff = TariffSchedule.from_lengths(*lengths, **prices)

    st = _get(doc, "storage", "$", dict)
    ev = _get(doc, "ev", "$", dict)
    devs = _get(doc, "devices", "$", list)
    devices = []
    for i, dv in enumerate(devs):
        p = f"$.devices[{i}]"
        devices.append(DeviceUtility(a=_get(dv, "a", p), b=_get(dv, "b", p), d_max=_get(dv, "d_max", p)))
    return HouseholdConfig(
        B=_get(st, "capacity", "$.storage"),
        e_chg_max=_get(st, "charge_rate", "$.storage"),
        e_dis_max=_get(st, "discharge_rate", "$.storage"),
        eta_c=_get(st, "eta_c", "$.storage"),
        eta_d=_get(st, "eta_d", "$.storage"),
        s0=_get(st, "s0", "$.storage", default=0.0, required=False),
        v_max=_get(ev, "v_max", "$.ev"),
        eta_ev=_get(ev, "eta", "$.ev", default=1.0, required=False),
        y0=_get(ev, "y0", "$.ev", default=0.0, required=False),
        alpha=_get(doc, "penalty", "$"),
        beta=_get(doc, "salvage", "$"),
        devices=tuple(devices),
        tariff=tariff,
    )


def config_to_dict(config: HouseholdConfig) -> dict:
    tar = config.tariff
    return {
        "horizon": {"off1": tar.off1[1] - tar.off1[0], "on": tar.on[1] - tar.on[0], "off2": tar.off2[1] - tar.off2[0]},
        "tariff": {"pi_off_plus": tar.pi_off_plus, "pi_off_minus": tar.pi_off_minus,
                   "pi_on_plus": tar.pi_on_plus, "pi_on_minus": tar.pi_on_minus, "pi_zero": tar.pi_zero},
        "storage": {"capacity": config.B, "charge_rate": config.e_chg_max, "discharge_rate": config.e_dis_max,
                    "eta_c": config.eta_c, "eta_d": config.eta_d, "s0": config.s0},
        "ev": {"v_max": config.v_max, "eta": config.eta_ev, "y0": config.y0},
        "devices": [{"a": d.a, "b": d.b, "d_max": d.d_max} for d in config.devices],
        "penalty": config.alpha,
        "salvage": config.beta,
    }


def load_config(path) -> HouseholdConfig:
    return config_from_dict(_read_json(path))


def _distribution(spec, path: str, base_dir: Path):
    family = _get(spec, "family", path, str)
    try:
        if family == "point":
            return PointMass(_get(spec, "value", path))
        if family == "truncated-normal":
            return TruncatedNormal(_get(spec, "mean", path), _get(spec, "sd", path),
                                   _get(spec, "lo", path, default=0.0, required=False),
                                   _get(spec, "hi", path, default=math.inf, required=False))
        if family == "lognormal":
            return LogNormal(_get(spec, "mean", path), _get(spec, "sd", path))
        if family == "histogram-file":
            return Histogram.from_file(base_dir / _get(spec, "path", path, str))
    except ScenarioError as exc:
        raise ConfigError(path, str(exc)) from exc
    raise ConfigError(f"{path}.family", f"unknown family {family!r}")


def _renewable(spec, base_dir: Path):
    if isinstance(spec, list):
        return tuple(_distribution(s, f"$.renewable[{i}]", base_dir) for i, s in enumerate(spec))
    if not isinstance(spec, dict):
        raise ConfigError("$.renewable", "expected a list of distributions or an object")
    arrays = {k: v for k, v in spec.items() if isinstance(v, list)}
    if not arrays:
        return (_distribution(spec, "$.renewable", base_dir),)
    n = {len(v) for v in arrays.values()}
    if len(n) != 1:
        raise ConfigError("$.renewable", "array-valued parameters must have equal lengths")
    out = []
    for i in range(n.pop()):
        item = {k: (v[i] if isinstance(v, list) else v) for k, v in spec.items()}
        out.append(_distribution(item, f"$.renewable[{i}]", base_dir))
    return tuple(out)


def scenario_from_dict(doc: dict, base_dir=".") -> ScenarioModel:
    base_dir = Path(base_dir)
    if "renewable" not in doc:
        raise ConfigError("$.renewable", "missing")
    renewable = _renewable(doc["renewable"], base_dir)
    demand = _distribution(_get(doc, "ev_demand", "$", dict), "$.ev_demand", base_dir)
    hours = _get(doc, "start_hours", "$", list, default=[0], required=False)
    for i, h in enumerate(hours):
        if isinstance(h, bool) or not isinstance(h, int) or h < 0:
            raise ConfigError(f"$.start_hours[{i}]", f"expected a non-negative integer, got {h!r}")
    on_peak = doc.get("on_peak")
    if on_peak is not None:
        if (not isinstance(on_peak, list) or len(on_peak) != 2
                or not all(isinstance(h, int) and not isinstance(h, bool) for h in on_peak)
                or on_peak[0] > on_peak[1]):
            raise ConfigError("$.on_peak", "expected [start_hour, stop_hour] with start <= stop")
        on_peak = tuple(on_peak)
    scale = _get(doc, "scale", "$", default=1.0, required=False)
    try:
        return ScenarioModel(renewable, demand, tuple(hours), on_peak, scale)
    except ScenarioError as exc:
        raise ConfigError("$", str(exc)) from exc


def load_scenario(path) -> ScenarioModel:
    path = Path(path)
    return scenario_from_dict(_read_json(path), base_dir=path.parent)


def _write_rows(path, header, rows):
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc
    return path


def _num(x) -> str:
    return repr(float(x))


def export_thresholds(table: ThresholdTable, path):
    rows = [[t, _num(r.tau), _num(r.delta), _num(r.sigma_plus), _num(r.sigma_minus)] for t, r in table.rows()]
    return _write_rows(path, ("t", "tau", "delta", "sigma_plus", "sigma_minus"), rows)


def export_value_tables(tables: ValueTables, path):
    """One row per (t, breakpoint); ``slope`` is the slope to the right (blank at the top)."""
    rows = []
    for t, f in enumerate(tables.vbar):
        slopes = np.append(f.slopes, np.nan)
        for y, v, s in zip(f.breakpoints, f.values, slopes):
            rows.append([t, _num(y), _num(v), "" if np.isnan(s) else _num(s)])
    return _write_rows(path, ("t", "y", "value", "slope"), rows)
