"""Scenario configuration, orchestration and CSV output.

A scenario is described by a flat INI document with the sections
``[scenario] [model] [grid] [solver] [initial] [analysis] [output]`` and,
for sweeps, ``[sweep]``. :data:`SCHEMA` lists every key, its type and its
default; ``"auto"`` defaults are resolved from the model constants.
"""

from __future__ import annotations

import configparser
import csv
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .fronts import (AnalysisError, behind_front_deviation, estimate_speed, shape_ratio_ahead,
                     spreading_interval, track_level)
from .kernel import Grid, elliptic_residual, psi_direct, psi_fast
from .solver import SCHEMES, SolverConfig, SolverError, make_initial, simulate
from .theory import (ModelParams, a_star, c_kappa, global_existence, hypothesis_H,
                     kappa_for_speed, speed_constants)
from .waves import FixedPointConfig, WaveError, fixed_point_wave, min_speed_scan, wave_grid

__all__ = [
    "KINDS",
    "SCHEMA",
    "ConfigError",
    "ScenarioConfig",
    "Measurement",
    "RunReport",
    "parse_config",
    "load_config",
    "run_scenario",
    "write_csv",
    "TRAJECTORY_SCHEMA",
    "FRONT_SCHEMA",
    "WAVE_SCHEMA",
]

logger = logging.getLogger(__name__)

KINDS = ("simulate", "speed", "wave", "sweep", "kernel-selftest")
INITIAL_KINDS = ("compact", "front", "exponential")

TRAJECTORY_SCHEMA = ("t", "x", "u", "v", "v_x")
FRONT_SCHEMA = ("t", "left_pos", "right_pos", "theta")
WAVE_SCHEMA = ("x", "U", "V", "V_x", "envelope_lo", "envelope_hi")

REQUIRED = object()
AUTO = "auto"


class ConfigError(ValueError):
    pass


def _bool(s):
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _floats(s):
    """Comma list ``1, 2, 3`` or range ``lo:hi:step`` (inclusive of ``hi``)."""
    s = s.strip()
    if not s:
        return ()
    if ":" in s:
        lo, hi, st = (float(t) for t in s.split(":"))
        if not st > 0 or hi < lo:
            raise ValueError(f"bad range {s!r}")
        n = int(math.floor((hi - lo) / st + 1e-9))
        return tuple(round(lo + k * st, 12) for k in range(n + 1))
    return tuple(float(t) for t in s.split(","))


def _opt_float(s):
    return None if s.strip().lower() in (AUTO, "none", "") else float(s)


# section -> key -> (parser, default)
SCHEMA = {
    "scenario": {
        "kind": (str, REQUIRED),
    },
    "model": {
        "chi": (float, REQUIRED),
        "a": (float, REQUIRED),
        "b": (float, REQUIRED),
        "lam": (float, REQUIRED),
        "mu": (float, REQUIRED),
    },
    "grid": {
        "half_length": (float, 300.0),
        "h": (float, 0.1),
        "center": (float, 0.0),
    },
    "solver": {
        "dt": (float, 0.02),
        "t_end": (float, 60.0),
        "scheme": (str, "imex2"),
        "cfl_safety": (float, 0.9),
        "tail": (str, AUTO),                # zero for compact data, constant-left otherwise
        "observer_stride": (int, 25),
        "neg_tolerance": (float, 1e-10),
    },
    "initial": {
        "kind": (str, "compact"),
        "center": (float, 0.0),
        "width": (float, 2.0),
        "height": (float, 1.0),
        "level": (_opt_float, None),        # a/b
        "interface": (float, 0.0),
        "kappa": (float, 0.5),
        "floor": (_opt_float, None),        # level
    },
    "analysis": {
        "theta": (_opt_float, None),        # a/(2b)
        "window_start": (_opt_float, None),  # t_end/2
        "window_end": (_opt_float, None),    # t_end
        "side": (str, "right"),
        "expected_speed": (_opt_float, None),
        "speed_tol": (float, 0.06),
        "speeds": (_floats, ()),
        "interval_tol": (float, 0.1),
        "spreading_theta": (_opt_float, None),
        "behind_speed": (_opt_float, None),
        "behind_tol": (float, 0.05),
        "shape_tol": (_opt_float, None),
        "shape_eps": (float, 0.1),
        "kappa": (_opt_float, None),        # wave decay rate; 0.5 unless wave_speed is given
        "wave_speed": (_opt_float, None),
        "wave_h": (float, 0.05),
        "residual_tol": (_opt_float, None),
        "tail_tol": (float, 0.05),
        "left_tol": (float, 0.01),
        "max_outer_iters": (int, 50),
        "selftest_fields": (int, 20),
        "selftest_cells": (int, 1024),
        "selftest_half_length": (float, 20.0),
        "seed": (int, 0),
    },
    "output": {
        "snapshot_stride": (int, 10),
        "node_stride": (int, 1),
        "write_trajectory": (_bool, True),
    },
    "sweep": {
        "parameter": (str, "chi"),
        "values": (_floats, ()),
        "base": (str, "speed"),
    },
}


def _fmt(v):
    if v is None:
        return AUTO
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)      # shortest string that round-trips
    if isinstance(v, tuple):
        return ", ".join(_fmt(t) for t in v)
    return str(v)


@dataclass(frozen=True)
class ScenarioConfig:
    """Fully resolved scenario. ``sections`` holds every key after defaults."""

    kind: str
    model: ModelParams
    sections: dict
    derived: frozenset = frozenset()    # (section, key) pairs filled from "auto"

    def get(self, section, key):
        return self.sections[section][key]

    @property
    def grid(self) -> Grid:
        g = self.sections["grid"]
        return Grid.from_spacing(g["half_length"], g["h"], g["center"])

    @property
    def solver(self) -> SolverConfig:
        s = self.sections["solver"]
        return SolverConfig(dt=s["dt"], t_end=s["t_end"], cfl_safety=s["cfl_safety"],
                            scheme=s["scheme"], tail=s["tail"],
                            observer_stride=s["observer_stride"],
                            neg_tolerance=s["neg_tolerance"])

    def echo(self) -> str:
        lines = []
        for sec, keys in self.sections.items():
            lines.append(f"[{sec}]")
            lines.extend(f"{k} = {_fmt(v)}" for k, v in keys.items())
            lines.append("")
        return "\n".join(lines)


_AUTO_KEYS = (("solver", "tail"), ("initial", "level"), ("initial", "floor"),
              ("analysis", "theta"), ("analysis", "window_start"), ("analysis", "window_end"),
              ("analysis", "kappa"), ("analysis", "spreading_theta"))


def parse_config(text: str, kind: str | None = None, strict: bool = True) -> ScenarioConfig:
    """Parse and validate a scenario document.

    ``kind`` (from the command line) overrides ``[scenario] kind``. With
    ``strict`` unknown sections and keys are errors.
    """
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    raw = {sec: dict(cp.items(sec)) for sec in cp.sections()}
    if kind is not None:
        raw.setdefault("scenario", {})["kind"] = kind
    return _resolve(raw, strict)


def load_config(path, kind=None, strict=True) -> ScenarioConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, kind, strict)


def _resolve(raw: dict, strict: bool) -> ScenarioConfig:
    if strict:
        unknown = sorted(set(raw) - set(SCHEMA))
        if unknown:
            raise ConfigError(f"unknown section(s): {', '.join(unknown)}")
        for sec, kv in raw.items():
            bad = sorted(set(kv) - set(SCHEMA[sec]))
            if bad:
                raise ConfigError(f"unknown key(s) in [{sec}]: {', '.join(bad)}")
    sections = {}
    autos = set()
    for sec, keys in SCHEMA.items():
        given = raw.get(sec, {})
        out = {}
        for key, (conv, default) in keys.items():
            if key in given:
                try:
                    out[key] = conv(given[key])
                except ValueError as exc:
                    raise ConfigError(f"[{sec}] {key}: {exc}") from None
            elif default is REQUIRED:
                raise ConfigError(f"missing required key [{sec}] {key}")
            else:
                out[key] = default
            if (sec, key) in _AUTO_KEYS and (key not in given or given[key].strip().lower() == AUTO):
                autos.add((sec, key))
        sections[sec] = out

    kind = sections["scenario"]["kind"]
    if kind not in KINDS:
        raise ConfigError(f"scenario kind must be one of {', '.join(KINDS)}; got {kind!r}")
    m = sections["model"]
    try:
        p = ModelParams(m["chi"], m["a"], m["b"], m["lam"], m["mu"])
    except ValueError as exc:
        raise ConfigError(f"[model] {exc}") from None
    _fill_auto(sections, p)
    if kind != "sweep":
        sections.pop("sweep")
    cfg = ScenarioConfig(kind, p, sections, frozenset(autos))
    _validate(cfg)
    return cfg


def _fill_auto(sec, p: ModelParams):
    s, ini, an = sec["solver"], sec["initial"], sec["analysis"]
    if s["tail"] == AUTO:
        s["tail"] = "zero" if ini["kind"] == "compact" else "constant-left"
    if ini["level"] is None:
        ini["level"] = p.carrying_capacity
    if ini["floor"] is None:
        ini["floor"] = ini["level"]
    if an["theta"] is None:
        an["theta"] = 0.5 * p.carrying_capacity
    if an["window_start"] is None:
        an["window_start"] = 0.5 * s["t_end"]
    if an["window_end"] is None:
        an["window_end"] = s["t_end"]
    if an["kappa"] is None:
        c = an["wave_speed"]
        if c is None:
            an["kappa"] = 0.5
        else:
            # no decay rate below 2 sqrt(a); the scan reports such speeds as excluded
            an["kappa"] = kappa_for_speed(p, c) if c >= 2.0 * math.sqrt(p.a) else math.nan
    if an["spreading_theta"] is None:
        an["spreading_theta"] = an["theta"]


def required_half_length(cfg: ScenarioConfig) -> float:
    """Domain-size policy: the fastest predicted front plus ``20/kappa``
    must stay outside the ``10/sqrt(lam)`` boundary buffer at ``t_end``."""
    p = cfg.model
    ini = cfg.sections["initial"]
    t_end = cfg.sections["solver"]["t_end"]
    center = cfg.sections["grid"]["center"]
    buffer = 10.0 / math.sqrt(p.lam)
    if ini["kind"] == "exponential":
        c, k = c_kappa(p, ini["kappa"]), ini["kappa"]
        reach = c * t_end + 20.0 / k - center
    else:
        sc = speed_constants(p)
        c, k = sc.c_star, sc.a_star
        if ini["kind"] == "compact":
            off = abs(ini["center"] - center) + 0.5 * ini["width"]
        else:
            off = ini["interface"] + ini["width"] - center
        reach = off + c * t_end + 20.0 / k
    return reach + buffer


def _validate(cfg: ScenarioConfig):
    p, kind = cfg.model, cfg.kind
    s, ini, an = (cfg.sections[k] for k in ("solver", "initial", "analysis"))
    base = cfg.sections["sweep"]["base"] if kind == "sweep" else kind
    if kind == "sweep":
        if base not in ("simulate", "speed", "wave"):
            raise ConfigError("[sweep] base must be simulate, speed or wave")
        if cfg.sections["sweep"]["parameter"] not in ("chi", "a", "b", "lam", "mu"):
            raise ConfigError("[sweep] parameter must be one of chi, a, b, lam, mu")
        if not cfg.sections["sweep"]["values"]:
            raise ConfigError("[sweep] values must list at least one value")
        return  # each point is validated on its own
    if base in ("simulate", "speed", "wave") and not global_existence(p):
        raise ConfigError(f"chi*mu < b required (global existence hypothesis); "
                          f"got chi*mu = {p.chi_mu:g}, b = {p.b:g}")
    if s["scheme"] not in SCHEMES:
        raise ConfigError(f"[solver] scheme must be one of {', '.join(SCHEMES)}")
    if ini["kind"] not in INITIAL_KINDS:
        raise ConfigError(f"[initial] kind must be one of {', '.join(INITIAL_KINDS)}")
    if kind in ("simulate", "speed"):
        if ini["kind"] == "exponential" and not 0 < ini["kappa"] < math.sqrt(p.a):
            raise ConfigError(f"0 < kappa < sqrt(a) required for exponential initial data; "
                              f"got kappa = {ini['kappa']:g}, sqrt(a) = {math.sqrt(p.a):.6g}")
        try:
            cfg.solver
        except ValueError as exc:
            raise ConfigError(f"[solver] {exc}") from None
        need = required_half_length(cfg)
        if cfg.sections["grid"]["half_length"] < need:
            raise ConfigError(f"half_length >= {need:.6g} required (front reach c*·t_end + 20/kappa "
                              f"plus boundary buffer); got {cfg.sections['grid']['half_length']:g}")
        if not 0 < an["theta"] < p.carrying_capacity:
            raise ConfigError("0 < theta < a/b required")
        if not an["window_start"] < an["window_end"] <= s["t_end"]:
            raise ConfigError("window_start < window_end <= t_end required")
        if an["side"] not in ("left", "right"):
            raise ConfigError("[analysis] side must be left or right")
    if kind == "wave":
        top = min(math.sqrt(p.a), math.sqrt(p.lam))
        if an["wave_speed"] is not None:
            return  # classified by the scan; excluded speeds are reported, not rejected
        if not 0 < an["kappa"] < top:
            raise ConfigError(f"0 < kappa < min(sqrt(a), sqrt(lam)) = {top:.6g} required for waves; "
                              f"got {an['kappa']:g}")


# --------------------------------------------------------------------------- reports


@dataclass
class Measurement:
    """One measured quantity with its fit window and, for assertions, its tolerance."""

    name: str
    value: float
    window: str = "n/a"
    tolerance: float | None = None
    target: float | None = None
    passed: bool | None = None      # None: reported only, not asserted

    def line(self):
        tol = "n/a" if self.tolerance is None else format(self.tolerance, ".6g")
        tgt = "" if self.target is None else f" target={self.target:.10g}"
        verdict = "info" if self.passed is None else ("PASS" if self.passed else "FAIL")
        return f"{verdict:4s} {self.name} = {self.value:.10g}{tgt} tol={tol} window={self.window}"


@dataclass
class RunReport:
    kind: str
    config_echo: str
    constants: dict
    measurements: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    files: list = field(default_factory=list)
    refinement: dict = field(default_factory=dict)
    children: list = field(default_factory=list)
    wall_clock: float = 0.0

    def add(self, m: Measurement):
        self.measurements.append(m)
        return m

    def value(self, name):
        for m in self.measurements:
            if m.name == name:
                return m.value
        raise KeyError(name)

    @property
    def passed(self) -> bool:
        own = all(m.passed is not False for m in self.measurements)
        return own and all(c.passed for c in self.children)

    def render(self) -> str:
        """Human-readable text; deterministic (wall-clock is left out)."""
        out = [f"scenario: {self.kind}", f"result: {'PASS' if self.passed else 'FAIL'}", "",
               "# constants"]
        out += [f"{k} = {_fmt(v)}" for k, v in self.constants.items()]
        out += ["", "# measurements"] + [m.line() for m in self.measurements]
        if self.refinement:
            out += ["", "# refinement (h -> h/2)"]
            for k, (c, f) in self.refinement.items():
                out.append(f"{k}: {c:.10g} -> {f:.10g} (delta {f - c:.3g})")
        if self.notes:
            out += ["", "# notes"] + self.notes
        if self.children:
            out += ["", "# sweep points"]
            for i, c in enumerate(self.children):
                out.append(f"point {i:03d}: {'PASS' if c.passed else 'FAIL'}")
        out += ["", "# config", self.config_echo]
        return "\n".join(out)


def write_csv(rows, schema, path):
    """Write ``rows`` under header ``schema``: 17 significant digits, LF endings."""
    schema = tuple(schema)
    try:
        with open(path, "w", newline="", encoding="ascii") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(schema)
            for k, row in enumerate(rows):
                if isinstance(row, dict):
                    row = [row[c] for c in schema]
                if len(row) != len(schema):
                    raise ValueError(f"row {k} has {len(row)} fields, schema has {len(schema)}")
                w.writerow([format(float(v), ".17g") if isinstance(v, (float, np.floating))
                            else v for v in row])
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write {path}: {exc.strerror}") from None


def _constants(p: ModelParams) -> dict:
    d = dict(chi_mu=p.chi_mu, global_existence=global_existence(p), hypothesis_H=hypothesis_H(p),
             c0_star=2.0 * math.sqrt(p.a))
    if global_existence(p):
        sc = speed_constants(p)
        d.update(a_star=sc.a_star, c_star=sc.c_star, c_star_star=sc.c_star_star,
                 sup_bound=p.sup_bound)
    return d


# --------------------------------------------------------------------------- pipelines


def _initial(cfg: ScenarioConfig, grid: Grid):
    ini = cfg.sections["initial"]
    return make_initial(ini["kind"], grid, center=ini["center"], width=ini["width"],
                        height=ini["height"], level=ini["level"], interface=ini["interface"],
                        kappa=ini["kappa"], floor=ini["floor"], a=cfg.model.a,
                        strict=ini["kind"] == "exponential")


def _trajectory_rows(traj, snap_stride, node_stride):
    x = traj.grid.x[::node_stride]
    states = traj.states
    keep = list(range(0, len(states), snap_stride))
    if keep[-1] != len(states) - 1:
        keep.append(len(states) - 1)
    for k in keep:
        s = states[k]
        for xi, u, v, vx in zip(x, s.u[::node_stride], s.v[::node_stride], s.v_x[::node_stride]):
            yield (s.t, xi, u, v, vx)


def _run_simulate(cfg, report, out, h=None, dt=None, measure_only=False):
    p = cfg.model
    g = cfg.sections["grid"]
    grid = Grid.from_spacing(g["half_length"], h or g["h"], g["center"])
    scfg = cfg.solver if dt is None else replace(cfg.solver, dt=dt)
    u0 = _initial(cfg, grid)
    traj = simulate(u0, grid, p, scfg)
    umax = max(float(s.u.max()) for s in traj.states)
    umin = min(float(s.u.min()) for s in traj.states)
    bound = max(float(u0.max()), p.sup_bound) + 1e-8
    report.add(Measurement("max_u", umax, f"t in [0, {scfg.t_end:g}]", 1e-8, bound, umax <= bound))
    report.add(Measurement("min_u", umin, f"t in [0, {scfg.t_end:g}]", scfg.neg_tolerance, 0.0,
                           umin >= -scfg.neg_tolerance))
    report.add(Measurement("mass_final", float(np.trapezoid(traj.final.u, grid.x)), f"t = {scfg.t_end:g}"))
    trace = track_level(traj, cfg.get("analysis", "theta"))
    if out is not None and not measure_only:
        if cfg.get("output", "write_trajectory"):
            path = os.path.join(out, "trajectory.csv")
            write_csv(_trajectory_rows(traj, cfg.get("output", "snapshot_stride"),
                                       cfg.get("output", "node_stride")), TRAJECTORY_SCHEMA, path)
            report.files.append(path)
        path = os.path.join(out, "fronts.csv")
        write_csv(zip(trace.times, trace.left, trace.right, [trace.theta] * len(trace.times)),
                  FRONT_SCHEMA, path)
        report.files.append(path)
    return traj, trace


def _expected_speed(cfg):
    p = cfg.model
    an, ini = cfg.sections["analysis"], cfg.sections["initial"]
    if an["expected_speed"] is not None:
        return an["expected_speed"], "configured"
    if ini["kind"] == "exponential":
        k = ini["kappa"]
        if k < a_star(p):
            return c_kappa(p, k), "c_kappa"
        return None, "kappa >= a*: no speed claim"
    if hypothesis_H(p):
        return 2.0 * math.sqrt(p.a), "2 sqrt(a) under (H)"
    return None, "(H) fails: speed lies in [2 sqrt(a), c*]"


def _run_speed(cfg, report, out, h=None, dt=None, measure_only=False):
    p = cfg.model
    an = cfg.sections["analysis"]
    traj, trace = _run_simulate(cfg, report, out, h, dt, measure_only)
    window = (an["window_start"], an["window_end"])
    est = estimate_speed(trace, window, side=an["side"])
    c_hat = abs(est.c_hat)
    wtxt = f"t in [{window[0]:g}, {window[1]:g}], theta={trace.theta:g}"
    target, why = _expected_speed(cfg)
    if target is not None:
        report.add(Measurement("c_hat", c_hat, wtxt, an["speed_tol"], target,
                               abs(c_hat - target) <= an["speed_tol"]))
        report.add(Measurement("c_hat_error", abs(c_hat - target), wtxt))
    else:
        sc = speed_constants(p)
        lo, hi = sc.c0_star - an["speed_tol"], sc.c_star + an["speed_tol"]
        report.add(Measurement("c_hat", c_hat, wtxt, an["speed_tol"], None, lo <= c_hat <= hi))
        report.notes.append(f"speed asserted only inside [2 sqrt(a), c*] ({why})")
    report.add(Measurement("c_hat_stderr", est.stderr, wtxt))
    if an["speeds"]:
        lo_c, hi_c, flags = spreading_interval(traj, an["speeds"], an["spreading_theta"])
        wtxt2 = f"last quarter of [0, {traj.times[-1]:g}], theta={an['spreading_theta']:g}"
        ref = target if target is not None else 2.0 * math.sqrt(p.a)
        tol = an["interval_tol"]
        ok_lo = not math.isnan(lo_c) and lo_c >= ref - tol
        ok_hi = not math.isnan(hi_c) and hi_c <= ref + tol
        report.add(Measurement("c_minus_hat", lo_c, wtxt2, tol, ref, ok_lo))
        report.add(Measurement("c_plus_hat", hi_c, wtxt2, tol, ref, ok_hi))
        report.notes.extend(flags)
    if an["behind_speed"] is not None:
        one_sided = cfg.get("initial", "kind") != "compact"
        dev = behind_front_deviation(traj, an["behind_speed"], one_sided=one_sided)
        report.add(Measurement("behind_front_deviation", dev,
                               f"|x| <= {an['behind_speed']:g} t at t={traj.final.t:g}",
                               an["behind_tol"], 0.0, dev <= an["behind_tol"]))
    if an["shape_tol"] is not None:
        dev, (xl, xh) = shape_ratio_ahead(traj, cfg.get("initial", "kappa"), eps=an["shape_eps"])
        report.add(Measurement("shape_ratio_deviation", dev, f"x in [{xl:g}, {xh:g}]",
                               an["shape_tol"], 0.0, dev <= an["shape_tol"]))
    return traj


def _wave_rows(w):
    lo, hi = w.envelopes.lower(w.grid.x), w.envelopes.upper(w.grid.x)
    return zip(w.grid.x, w.U, w.V, w.V_x, lo, hi)


def _run_wave(cfg, report, out, h=None, measure_only=False):
    p = cfg.model
    an = cfg.sections["analysis"]
    h = h or an["wave_h"]
    fp = FixedPointConfig(max_outer_iters=an["max_outer_iters"])
    if an["wave_speed"] is not None:
        entry = min_speed_scan(p, [an["wave_speed"]], fp, h=h, solve=True)[0]
        report.notes.append(f"speed {entry['speed']:g}: {entry['status']}"
                            + (f" ({entry['note']})" if "note" in entry else ""))
        report.add(Measurement("scan_status_solved", float("profile" in entry)))
        if "profile" not in entry:
            if entry["status"].endswith("failed"):
                report.add(Measurement("wave_converged", 0.0, "", None, 1.0, False))
            return None
        w = entry["profile"]
    else:
        w = fixed_point_wave(an["kappa"], p, grid=wave_grid(an["kappa"], h), cfg=fp)
    d = w.diagnostics
    report.add(Measurement("wave_speed", w.speed, f"kappa={w.kappa:.10g}"))
    report.add(Measurement("outer_iters", float(w.outer_iters), "", None,
                           float(an["max_outer_iters"]), True))
    win = f"interior nodes, h={w.grid.h:g}"
    if an["residual_tol"] is not None:
        report.add(Measurement("residual", d.residual, win, an["residual_tol"], 0.0,
                               d.residual <= an["residual_tol"]))
    else:
        report.add(Measurement("residual", d.residual, win))
    tw = f"x in [{d.tail_window[0]:.6g}, {d.tail_window[1]:.6g}]"
    report.add(Measurement("tail_ratio_deviation", d.tail_ratio_deviation, tw, an["tail_tol"], 0.0,
                           d.tail_ratio_deviation <= an["tail_tol"]))
    lp = f"x = x_0 + 10/sqrt(lam)"
    if p.b > 2.0 * p.chi_mu:
        report.add(Measurement("left_deviation", d.left_deviation, lp, an["left_tol"], 0.0,
                               d.left_deviation <= an["left_tol"]))
    else:
        report.add(Measurement("left_deviation", d.left_deviation, lp))
        report.notes.append("b <= 2 chi mu: left limit a/b not asserted")
    report.add(Measurement("envelope_margin", d.envelope_margin, "all nodes"))
    if out is not None and not measure_only:
        path = os.path.join(out, "wave.csv")
        write_csv(_wave_rows(w), WAVE_SCHEMA, path)
        report.files.append(path)
    return w


def _run_selftest(cfg, report, out):
    p = cfg.model
    an = cfg.sections["analysis"]
    rng = np.random.default_rng(an["seed"])
    grid = Grid(an["selftest_half_length"], an["selftest_cells"])
    s = math.sqrt(p.lam)
    inner = grid.interior_mask(10.0 / s)
    gap = law = 0.0
    for _ in range(an["selftest_fields"]):
        u = rng.random(grid.n_nodes) * rng.uniform(0.1, 10.0)
        v, vx = psi_fast(grid, u, p)
        vd, vxd = psi_direct(grid, u, p, derivative=True)
        scale = max(float(np.abs(vd).max()), float(np.abs(vxd).max()))
        gap = max(gap, max(float(np.abs(v - vd).max()), float(np.abs(vx - vxd).max())) / scale)
        law = max(law, float((np.abs(vx) - s * v)[inner].max()) / float(v.max()))
    n = an["selftest_fields"]
    report.add(Measurement("fast_vs_direct_gap", gap, f"{n} random fields", 1e-10, 0.0, gap <= 1e-10))
    report.add(Measurement("gradient_law_excess", law, "interior nodes", 1e-10, 0.0, law <= 1e-10))
    res = []
    for cells in (400, 800):
        g = Grid(an["selftest_half_length"], cells)
        u = np.exp(-g.x ** 2)
        v, _ = psi_fast(g, u, p)
        res.append(elliptic_residual(g, u, v, p))
    ratio = res[0] / res[1]
    report.add(Measurement("residual_halving_ratio", ratio, "Gaussian bump, 400 -> 800 cells",
                           0.5, 4.0, 3.5 <= ratio <= 4.5))


def _point(args):
    cfg, out = args
    return run_scenario(cfg, out)


def _run_sweep(cfg, report, out, jobs):
    sw = cfg.sections["sweep"]
    param, base = sw["parameter"], sw["base"]
    points = []
    for i, val in enumerate(sw["values"]):
        sub = _derive(cfg, base, param, val)
        sub_out = None if out is None else os.path.join(out, f"point_{i:03d}")
        points.append((sub, sub_out))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            children = list(ex.map(_point, points))
    else:
        children = [_point(a) for a in points]
    report.children = children
    names = []
    for c in children:
        for m in c.measurements:
            if m.name not in names:
                names.append(m.name)
    rows = []
    for val, c in zip(sw["values"], children):
        vals = {m.name: m.value for m in c.measurements}
        rows.append([float(val), int(c.passed)] + [float(vals.get(n, math.nan)) for n in names])
    if out is not None:
        path = os.path.join(out, "sweep.csv")
        write_csv(rows, [param, "passed"] + names, path)
        report.files.append(path)
    report.add(Measurement("points_passed", float(sum(c.passed for c in children)),
                           f"{len(children)} points"))


def _derive(cfg: ScenarioConfig, kind, param, val) -> ScenarioConfig:
    """Sweep point: same raw document with ``[model] param = val`` and ``kind``."""
    raw = {}
    for sec, kv in cfg.sections.items():
        if sec == "sweep":
            continue
        # derived values are re-derived for the new parameters
        raw[sec] = {k: (AUTO if (sec, k) in cfg.derived else _fmt(v)) for k, v in kv.items()}
    raw["scenario"]["kind"] = kind
    raw["model"][param] = _fmt(float(val))
    return _resolve(raw, strict=True)


def run_scenario(cfg: ScenarioConfig, out: str | None = None, refine: bool = False,
                 jobs: int = 1) -> RunReport:
    """Run one scenario; write CSVs and ``report.txt`` under ``out`` if given.

    With ``refine`` the simulate/speed/wave pipelines are repeated at
    ``h/2`` (and ``dt/2``) and the changes in every measurement are
    recorded.
    """
    t0 = time.perf_counter()
    report = RunReport(cfg.kind, cfg.echo(), _constants(cfg.model))
    if out is not None:
        os.makedirs(out, exist_ok=True)
    try:
        if cfg.kind == "simulate":
            _run_simulate(cfg, report, out)
        elif cfg.kind == "speed":
            _run_speed(cfg, report, out)
        elif cfg.kind == "wave":
            _run_wave(cfg, report, out)
        elif cfg.kind == "kernel-selftest":
            _run_selftest(cfg, report, out)
        else:
            _run_sweep(cfg, report, out, jobs)
        if refine and cfg.kind in ("simulate", "speed", "wave"):
            fine = RunReport(cfg.kind, "", {})
            g, s = cfg.sections["grid"], cfg.sections["solver"]
            if cfg.kind == "wave":
                _run_wave(cfg, fine, out, h=0.5 * cfg.get("analysis", "wave_h"), measure_only=True)
            else:
                runner = _run_simulate if cfg.kind == "simulate" else _run_speed
                runner(cfg, fine, out, h=0.5 * g["h"], dt=0.5 * s["dt"], measure_only=True)
            for m in report.measurements:
                try:
                    report.refinement[m.name] = (m.value, fine.value(m.name))
                except KeyError:
                    pass
    except (SolverError, WaveError, AnalysisError) as exc:
        raise type(exc)(f"{cfg.kind} scenario: {exc}") from exc
    report.wall_clock = time.perf_counter() - t0
    if out is not None:
        path = os.path.join(out, "report.txt")
        with open(path, "w", newline="\n", encoding="utf-8") as fh:
            fh.write(report.render() + "\n")
        report.files.append(path)
    return report
