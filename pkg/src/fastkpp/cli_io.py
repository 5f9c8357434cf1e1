"""Configuration, experiment presets, sweeps and deterministic output.

Config grammar: ``[section]`` headers followed by ``key = value`` lines;
``#`` and ``;`` start comments; lists are comma separated.  Every key is
typed and unknown keys are rejected with their line number.
"""
import argparse
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
import hashlib
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .analytic_solutions import (
    BarenblattFast, BarrierSub, BernoulliSuper, FeasibilityError, KMSimilarity,
    PseudoBarenblattCritical, ScheduleError, TypeIIVeryFast, heat_power_solution,
    make_plateau_tail, profile_mass,
)
from .fronts import (
    InconclusiveShot, InsufficientSamples, band_check, critical_speed_shooting,
    fit_exp_rate, fit_linear_speed, track_levels,
)
from .model_params import (
    CRITICAL, FAST_GOOD, SLOW, DiffusionParams, ParameterError, RegimeError,
    classify, kappa, logistic, self_similar_exponents, sigma_star,
)
from .pde_solver import (
    DoublyNonlinear, Full, Linearized, PLaplacian, SolverConfig, StiffnessError,
    build_grid, default_eps_reg, front_r_max, run, run_plap_increasing,
    selfsimilar_profile,
)
from . import verify

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_AUDIT = 0, 2, 3, 4

PRESETS = ("outer_decay", "inner_levelsets", "band_sigma_star", "slow_control",
           "plap_appendix", "critical_explore")

TARGETS = {
    "outer_decay": "u -> 0 uniformly on the outer set |x| >= e^{sigma t}, sigma > sigma*",
    "inner_levelsets": "u(x, j t0) >= eps_tilde on |x| <= rho0 e^{sigma j t0}, sigma < sigma*",
    "band_sigma_star": "level sets stay in the band C^-1 e^{sigma* t} <= |x| <= C e^{sigma* t}",
    "slow_control": "linear front speed c* when m(p-1) >= 1",
    "plap_appendix": "self-similar p-Laplacian flow from |x|^lam",
    "critical_explore": "pseudo-Barenblatt profile at gamma_hat = p/N (exploratory)",
}


class ConfigError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(f"line {ln}: {msg}" if ln else msg
                                   for ln, msg in self.errors))


# ------------------------------------------------------------- schema

def _flist(s):
    return tuple(float(x) for x in s.split(",") if x.strip())


def _ilist(s):
    return tuple(int(x) for x in s.split(",") if x.strip())


_flist.__name__, _ilist.__name__ = "float list", "int list"


def _choice(*opts):
    def conv(s):
        if s not in opts:
            raise ValueError(f"expected one of {', '.join(opts)}")
        return s
    conv.__name__ = "choice"
    return conv


def _auto(conv):
    def f(s):
        return "auto" if s == "auto" else conv(s)
    f.__name__ = getattr(conv, "__name__", "value") + " or auto"
    return f


_auto_float = _auto(float)


SCHEMA = {
    "run": {"seed": (int, 0), "workers": (int, 1), "out": (str, "out")},
    "params": {"m": (float, None), "p": (float, None), "N": (int, None)},
    "reaction": {"mode": (_choice("full", "linearized", "none"), "full"),
                 "kind": (_choice("logistic"), "logistic"),
                 "rate": (float, 1.0)},
    "grid": {"mode": (_auto(_choice("Composite", "Uniform", "LogUniform")), "auto"),
             "cells": (_auto(int), "auto"), "r_max": (_auto_float, "auto"),
             "r_core": (float, 4.0), "r_inner": (float, 1e-3)},
    "solver": {"t_end": (_auto_float, "auto"), "snapshots": (int, 51),
               "eps_reg": (_auto_float, "auto"), "cfl": (float, 0.4),
               "boundary_alarm": (float, 1e-6), "u_floor": (float, 1e-30),
               "max_steps": (int, 50_000_000)},
    "datum": {"kind": (_auto(_choice("plateau_tail", "barenblatt", "compact", "km")),
                       "auto"),
              "eps_tilde": (float, 0.5), "rho_tilde0": (float, 2.0),
              "M": (float, 1.0), "t_init": (float, 1.0), "radius": (float, 1.0),
              "height": (float, 1.0), "a_hat": (float, 1.0)},
    "experiment": {"preset": (_choice("", *PRESETS), ""),
                   "sigma_factor": (_auto_float, "auto"),
                   "omegas": (_auto(_flist), "auto"), "j_max": (int, 3),
                   "tol": (float, 1e-3), "lam": (float, 1.0)},
    "evaluate": {"field": (_choice("barenblatt", "bernoulli", "km", "barrier",
                                   "pseudo_barenblatt", "typeII"), "barenblatt"),
                 "times": (_flist, (1.0,)), "r_min": (float, 0.0),
                 "r_max": (float, 10.0), "points": (int, 201),
                 "M": (float, 1.0), "C": (_auto_float, "auto"), "D": (float, 1.0),
                 "tc": (float, 1.0), "a": (_auto_float, "auto"),
                 "a_hat": (float, 1.0), "b": (float, 1.0), "c": (float, 1.1),
                 "r0": (float, 1.0)},
    "sweep": {"m": (_flist, ()), "p": (_flist, ()), "N": (_ilist, ()),
              "sigma_factor": (_flist, ()), "omega": (_flist, ()),
              "preset": (_choice(*PRESETS), "band_sigma_star")},
}


def _fmt(v):
    if isinstance(v, tuple):
        return ", ".join(_fmt(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


# values of 'auto' keys per preset; the fallback row applies to plain commands
AUTO = {
    None: {"solver.t_end": 25.0, "grid.mode": "Composite", "grid.cells": 600,
           "datum.kind": "plateau_tail", "experiment.omegas": (0.1, 0.5)},
    "outer_decay": {"solver.t_end": 8.0},
    "band_sigma_star": {"experiment.omegas": (0.1, 0.5, 0.9)},
    "slow_control": {"grid.mode": "Uniform", "datum.kind": "compact",
                     "experiment.omegas": (0.5,)},
    "plap_appendix": {"solver.t_end": 1.0, "grid.cells": 1024},
    "critical_explore": {"solver.t_end": 1.0},
}


@dataclass
class LabConfig:
    values: dict                        # section -> key -> typed value

    def __getitem__(self, sec):
        return self.values[sec]

    def get(self, dotted, preset=None):
        """Value of 'section.key' with 'auto' resolved for the preset."""
        s, k = dotted.split(".")
        v = self.values[s][k]
        if v != "auto":
            return v
        preset = self.preset if preset is None else preset
        return AUTO.get(preset, {}).get(dotted, AUTO[None].get(dotted, "auto"))

    @property
    def params(self):
        p = self.values["params"]
        return DiffusionParams(p["m"], p["p"], p["N"])

    @property
    def reaction(self):
        return logistic()

    @property
    def preset(self):
        return self.values["experiment"]["preset"]

    @property
    def seed(self):
        return self.values["run"]["seed"]

    def to_text(self):
        out = []
        for sec, keys in SCHEMA.items():
            out.append(f"[{sec}]")
            for k in keys:
                v = self.values[sec][k]
                if v is None:
                    continue
                out.append(f"{k} = {_fmt(v)}")
            out.append("")
        return "\n".join(out)

    def __eq__(self, other):
        return isinstance(other, LabConfig) and self.values == other.values

    def with_overrides(self, **kv):
        """Copy with 'section.key' overrides already typed."""
        vals = {s: dict(d) for s, d in self.values.items()}
        for dotted, v in kv.items():
            s, k = dotted.split(".")
            vals[s][k] = v
        return LabConfig(vals)


def parse_config(text):
    """Parse and validate; raises ConfigError with every problem found."""
    errors = []
    vals = {s: {k: d for k, (_, d) in keys.items()} for s, keys in SCHEMA.items()}
    lines = {}
    sec = None
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].split(";", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            sec = line[1:-1].strip()
            if sec not in SCHEMA:
                errors.append((ln, f"unknown section [{sec}]"))
                sec = "?"
            continue
        if "=" not in line:
            errors.append((ln, f"expected key = value, got {raw.strip()!r}"))
            continue
        key, val = (x.strip() for x in line.split("=", 1))
        if sec is None:
            errors.append((ln, f"key {key!r} outside any section"))
            continue
        if sec == "?":
            continue
        if key not in SCHEMA[sec]:
            errors.append((ln, f"unknown key {sec}.{key}"))
            continue
        conv = SCHEMA[sec][key][0]
        try:
            vals[sec][key] = conv(val)
        except ValueError as e:
            errors.append((ln, f"{sec}.{key}: cannot read {val!r} as "
                               f"{getattr(conv, '__name__', 'value')} ({e})"))
            continue
        lines[(sec, key)] = ln
    for k in ("m", "p", "N"):
        if vals["params"][k] is None:
            errors.append((0, f"params.{k} is required"))
    if errors:
        raise ConfigError(errors)
    cfg = LabConfig(vals)
    _validate(cfg, lines)
    return cfg


def _validate(cfg, lines):
    errors = []
    pv = cfg["params"]
    try:
        params = cfg.params
    except ParameterError as e:
        bad = next((k for k in ("m", "p", "N") if str(e).startswith(k)), "m")
        raise ConfigError([(lines.get(("params", bad), 0), f"params.{bad}: {e}")])
    reg = classify(params)
    preset = cfg.preset
    need = {"outer_decay": (FAST_GOOD,), "inner_levelsets": (FAST_GOOD,),
            "band_sigma_star": (FAST_GOOD,), "slow_control": (SLOW,),
            "critical_explore": (CRITICAL,)}
    if preset in need and reg not in need[preset]:
        errors.append((lines.get(("experiment", "preset"), 0),
                       f"preset {preset} needs regime {need[preset][0]}, "
                       f"but (m,p,N)=({pv['m']},{pv['p']},{pv['N']}) is {reg}"))
    if cfg["grid"]["cells"] != "auto" and cfg["grid"]["cells"] < 64:
        errors.append((lines.get(("grid", "cells"), 0), "grid.cells must be >= 64"))
    if cfg["solver"]["t_end"] != "auto" and not cfg["solver"]["t_end"] > 0:
        errors.append((lines.get(("solver", "t_end"), 0), "solver.t_end must be positive"))
    if cfg["solver"]["snapshots"] < 2:
        errors.append((lines.get(("solver", "snapshots"), 0), "solver.snapshots must be >= 2"))
    for om in cfg.get("experiment.omegas"):
        if not 0 < om < 1:
            errors.append((lines.get(("experiment", "omegas"), 0),
                           f"experiment.omegas: {om} is not in (0,1)"))
    if cfg["run"]["workers"] < 1:
        errors.append((lines.get(("run", "workers"), 0), "run.workers must be >= 1"))
    if errors:
        raise ConfigError(errors)


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


# ------------------------------------------------------------- output

def _clean(x):
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    return x


def _num(v):
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    return str(v)


class Output:
    """Writes artifacts under one directory and hashes them into a manifest."""

    def __init__(self, root):
        self.root = root
        self.files = {}
        os.makedirs(root, exist_ok=True)

    def _put(self, name, data):
        path = os.path.join(self.root, name)
        os.makedirs(os.path.dirname(path), exist_ok=True)
        with open(path, "wb") as fh:
            fh.write(data)
        self.files[name] = hashlib.sha256(data).hexdigest()

    def csv(self, name, header, rows):
        text = ",".join(header) + "\n"
        text += "".join(",".join(_num(v) for v in row) + "\n" for row in rows)
        self._put(name, text.encode("utf-8"))

    def json(self, name, obj):
        text = json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"
        self._put(name, text.encode("utf-8"))

    def manifest(self, **meta):
        m = {"version": __version__, "files": dict(sorted(self.files.items())), **meta}
        text = json.dumps(_clean(m), indent=2, sort_keys=True) + "\n"
        with open(os.path.join(self.root, "manifest.json"), "w", encoding="utf-8") as fh:
            fh.write(text)
        return m


def _snap_name(t):
    return f"snapshots/snap_t{t:.6f}.csv"


def write_run(out, res):
    rc = res.grid.centers
    for s in res.snapshots:
        out.csv(_snap_name(s.t), ["r", "u"], zip(rc, s.u))
    d = res.diagnostics
    out.json("diagnostics.json", {
        "mass": d.mass, "dt": [list(x) for x in d.dt], "boundary_max": d.boundary_max,
        "clip_events": d.clip_events, "boundary_alarm": d.boundary_alarm,
        "monotonicity_violation": d.monotonicity_violation, "steps": d.steps,
        "times": res.times})


def write_trajectories(out, trajs, name="trajectories.csv"):
    rows = []
    for tr in trajs:
        for t, r in zip(tr.t, tr.r):
            rows.append((tr.omega, t, r, math.log(r) if r > 0 else float("nan")))
    out.csv(name, ["omega", "t", "r_omega", "ln_r_omega"], rows)


def _fit_dict(fit):
    return {"slope": fit.slope, "intercept": fit.intercept, "window": list(fit.window),
            "r_squared": fit.r_squared, "ci_half_width": fit.ci_half_width, "n": fit.n}


# ------------------------------------------------------------- building blocks

def _eps_reg(cfg):
    e = cfg["solver"]["eps_reg"]
    if e == "auto":
        p = cfg.params.p
        return 1e-3 if p < 2 else default_eps_reg(p)
    return e


def _times(cfg, t_end=None):
    t_end = cfg.get("solver.t_end") if t_end is None else t_end
    return np.linspace(0.0, t_end, cfg["solver"]["snapshots"])


def _datum(cfg):
    d, params = cfg["datum"], cfg.params
    kind = cfg.get("datum.kind")
    if kind == "plateau_tail":
        return make_plateau_tail(d["eps_tilde"], d["rho_tilde0"], params)
    if kind == "barenblatt":
        B = BarenblattFast.mass_form(params, d["M"])
        return lambda r: B(r, d["t_init"])
    if kind == "km":
        K = KMSimilarity(params, d["a_hat"])
        return lambda r: K(r, 0.0)
    h, rad = d["height"], d["radius"]
    return lambda r: np.where(np.asarray(r) <= rad, h, 0.0)


def _reaction(cfg):
    mode = cfg["reaction"]["mode"]
    if mode == "full":
        return Full(cfg.reaction)
    if mode == "linearized":
        return Linearized(cfg["reaction"]["rate"])
    return None


def _grid(cfg, t_end, datum=None):
    g, params = cfg["grid"], cfg.params
    r_max = g["r_max"]
    if r_max == "auto":
        a0 = getattr(datum, "a0", None)
        if classify(params) == FAST_GOOD and a0 is not None:
            r_max = front_r_max(params, a0, t_end, cfg.reaction.f_prime0)
        else:
            r_max = 20.0 + 5.0 * t_end
    mode = cfg.get("grid.mode")
    return build_grid(mode, r_max=r_max, cells=cfg.get("grid.cells"), N=params.N,
                      r_inner=g["r_inner"] if mode == "LogUniform" else 0.0,
                      r_core=g["r_core"] if mode == "Composite" else None)


def _solver_cfg(cfg, t_end, times, reaction="config"):
    s, params = cfg["solver"], cfg.params
    return SolverConfig(DoublyNonlinear(params.m, params.p), t_end=t_end,
                        snapshot_times=times,
                        reaction=_reaction(cfg) if reaction == "config" else reaction,
                        eps_reg=_eps_reg(cfg), cfl=s["cfl"],
                        boundary_alarm=s["boundary_alarm"], u_floor=s["u_floor"],
                        max_steps=s["max_steps"])


def simulate(cfg, out=None):
    T = cfg.get("solver.t_end")
    d = _datum(cfg)
    grid = _grid(cfg, T, d)
    res = run(d, grid, _solver_cfg(cfg, T, _times(cfg)))
    if out is not None:
        write_run(out, res)
    return res


def _sigma_factor(cfg, default):
    v = cfg["experiment"]["sigma_factor"]
    return default if v == "auto" else v


# ------------------------------------------------------------- presets

def preset_outer_decay(cfg, out):
    params, f = cfg.params, cfg.reaction
    ss = sigma_star(params, f)
    sig = _sigma_factor(cfg, 1.5) * ss
    if not sig > ss:
        raise ConfigError([(0, "outer_decay needs sigma_factor > 1")])
    T = cfg.get("solver.t_end", "outer_decay")
    d = _datum(cfg)
    grid = _grid(cfg, T, d)
    t_ref = min(2.0, T)
    times = np.union1d(_times(cfg, T), [t_ref])
    res = run(d, grid, _solver_cfg(cfg, T, times, Full(f)))
    write_run(out, res)
    rc = grid.centers
    p, gh = params.p, params.gamma_hat
    s_ref = res.at(t_ref)
    A = float(np.max(s_ref.u * rc ** (p / gh)))
    a = kappa(params) / f.f_prime0 + A ** gh
    K = math.exp(-f.f_prime0 * s_ref.t) * a ** (1.0 / gh)
    expo = f.f_prime0 - p * sig / gh
    rows, ts, ms = [], [], []
    ok = True
    for s in res.snapshots:
        sel = rc >= math.exp(sig * s.t)
        mx = float(s.u[sel].max()) if sel.any() else 0.0
        bound = K * math.exp(expo * s.t)
        rows.append((s.t, mx, bound))
        if s.t >= s_ref.t:
            ok &= mx <= bound * (1 + 1e-9)
            if mx > 0:
                ts.append(s.t)
                ms.append(math.log(mx))
    out.csv("outer_max.csv", ["t", "max_outer_u", "bound"], rows)
    slope = float(np.polyfit(ts, ms, 1)[0]) if len(ts) >= 2 else float("nan")
    rep = {"sigma": sig, "sigma_star": ss, "K": K, "t_ref": s_ref.t, "exponent": expo,
           "bound_holds": bool(ok), "log_slope": slope,
           "slope_ok": bool(slope <= 0.8 * expo), "boundary_alarm": res.diagnostics.boundary_alarm}
    out.json("outer_decay.json", rep)
    return rep, {"bound_holds": rep["bound_holds"], "slope_ok": rep["slope_ok"]}


def _front_run(cfg, out, T=None):
    params, f = cfg.params, cfg.reaction
    T = cfg.get("solver.t_end") if T is None else T
    d = _datum(cfg)
    grid = _grid(cfg, T, d)
    res = run(d, grid, _solver_cfg(cfg, T, _times(cfg, T), Full(f)))
    write_run(out, res)
    return res


def preset_inner_levelsets(cfg, out):
    params, f = cfg.params, cfg.reaction
    ss = sigma_star(params, f)
    res = _front_run(cfg, out)
    trajs = track_levels(res, cfg.get("experiment.omegas", "inner_levelsets"))
    write_trajectories(out, trajs)
    fits = {}
    checks = {}
    for tr in trajs:
        fit = fit_exp_rate(tr)
        fits[repr(tr.omega)] = {**_fit_dict(fit), "ratio": fit.slope / ss}
        checks[f"rate_{tr.omega!r}"] = bool(abs(fit.slope / ss - 1) <= 0.1)
    sch, margins = verify.check_lemma42_iteration(
        params, f, _sigma_factor(cfg, 0.5) * ss, cfg["experiment"]["j_max"],
        eps_reg=_eps_reg(cfg))
    out.csv("expansion_margins.csv", ["j", "margin", "r_at_min"], margins)
    checks["margins_nonnegative"] = bool(all(mg >= 0 for _, mg, _ in margins))
    rep = {"sigma_star": ss, "fits": fits, "schedule": sch.__dict__,
           "margins": margins, "boundary_alarm": res.diagnostics.boundary_alarm}
    out.json("inner_levelsets.json", rep)
    return rep, checks


def cell_log_width(grid, radii):
    """Largest ln-width of the cells that contain the given radii."""
    e = grid.edges
    r = np.asarray(radii, dtype=float)
    r = r[np.isfinite(r) & (r > 0)]
    i = np.clip(np.searchsorted(e, r) - 1, 1, len(e) - 2)
    return float(np.max(np.log(e[i + 1] / e[i]))) if len(i) else 0.0


def preset_band_sigma_star(cfg, out):
    params, f = cfg.params, cfg.reaction
    ss = sigma_star(params, f)
    res = _front_run(cfg, out)
    omegas = cfg.get("experiment.omegas", "band_sigma_star")
    trajs = track_levels(res, omegas)
    write_trajectories(out, trajs)
    bands, checks = {}, {}
    for tr in trajs:
        tol = cell_log_width(res.grid, tr.r[tr.t >= 0.5 * tr.t[-1]])
        cb, ok = band_check(tr, ss, log_tol=tol)
        _, strict = band_check(tr, ss)
        fit = fit_exp_rate(tr)
        bands[repr(tr.omega)] = {"Cband": cb, "ok": ok, "ok_strict": strict,
                                 "log_tol": tol, "sigma_hat": fit.slope,
                                 "ratio": fit.slope / ss}
        checks[f"band_{tr.omega!r}"] = ok
    rep = {"sigma_star": ss, "bands": bands,
           "boundary_alarm": res.diagnostics.boundary_alarm}
    out.json("band.json", rep)
    return rep, checks


def preset_slow_control(cfg, out):
    params, f = cfg.params, cfg.reaction
    tw = critical_speed_shooting(params.m, params.p, f, tol=cfg["experiment"]["tol"])
    T = cfg.get("solver.t_end", "slow_control")
    d = _datum(cfg)
    g = cfg["grid"]
    r_max = g["r_max"] if g["r_max"] != "auto" else 20.0 + 1.5 * tw.c_star * T
    mode = cfg.get("grid.mode", "slow_control")
    cells = g["cells"] if g["cells"] != "auto" else max(600, int(r_max / 0.1))
    grid = build_grid(mode, r_max=r_max, cells=cells, N=params.N,
                      r_core=g["r_core"] if mode == "Composite" else None,
                      r_inner=g["r_inner"] if mode == "LogUniform" else 0.0)
    res = run(d, grid, _solver_cfg(cfg, T, _times(cfg, T), Full(f)))
    write_run(out, res)
    trajs = track_levels(res, (0.5,))
    write_trajectories(out, trajs)
    fit = fit_linear_speed(trajs[0])
    rep = {"c_star": tw.c_star, "bracket": list(tw.bracket), "fit": _fit_dict(fit),
           "ratio": fit.slope / tw.c_star, "boundary_alarm": res.diagnostics.boundary_alarm}
    out.json("slow_control.json", rep)
    return rep, {"speed_within_10pct": bool(abs(fit.slope / tw.c_star - 1) <= 0.1)}


def plap_grid(lam, p, N, cells=1024, t_end=1.0):
    _, beta = self_similar_exponents(lam, p)
    scale = max(t_end, 1.0) ** beta
    return build_grid("Composite", r_max=1e3 * scale, cells=cells, N=N, r_core=scale)


def preset_plap_appendix(cfg, out):
    params = cfg.params
    lam, p, N = cfg["experiment"]["lam"], params.p, params.N
    T = cfg.get("solver.t_end", "plap_appendix")
    grid = plap_grid(lam, p, N, cfg.get("grid.cells", "plap_appendix"), T)
    scfg = SolverConfig(PLaplacian(p), t_end=T, snapshot_times=_times(cfg, T),
                        eps_reg=_eps_reg(cfg), cfl=cfg["solver"]["cfl"])
    res = run_plap_increasing(lam, grid, scfg)
    write_run(out, res)
    t, xi, F = selfsimilar_profile(res, lam, p)[-1]
    out.csv("profile.csv", ["xi", "F"], zip(xi, F))
    ratio = outer_decade_ratio(xi, F, lam)
    rep = {"lam": lam, "p": p, "N": N, "t": t,
           "monotonicity_violation": res.diagnostics.monotonicity_violation,
           "outer_decade_ratio": ratio}
    checks = {"monotone": res.diagnostics.monotonicity_violation is None,
              "ratio_near_one": bool(0.95 <= ratio[0] and ratio[1] <= 1.05)}
    if p == 2:
        ex = heat_power_solution(lam, N, grid.centers, t)
        err = float(np.max(np.abs(res.snapshots[-1].u - ex) / ex))
        rep["max_rel_error_vs_heat"] = err
        checks["matches_heat"] = err <= 0.01
    out.json("plap.json", rep)
    return rep, checks


def outer_decade_ratio(xi, F, lam, drop=5):
    """(min, max) of F/xi^lam over the outermost decade, skipping the last
    few cells next to the far-field boundary."""
    xi, F = xi[:-drop], F[:-drop]
    sel = xi >= xi[-1] / 10.0
    r = F[sel] / xi[sel] ** lam
    return float(r.min()), float(r.max())


def preset_critical_explore(cfg, out):
    params = cfg.params
    D = cfg["evaluate"]["D"]
    P = PseudoBarenblattCritical(params, D)
    r = np.logspace(-2, 4, 601)
    u = P(r, 0.0)
    out.csv("pseudo_barenblatt.csv", ["r", "u"], zip(r, u))
    sl = float(np.polyfit(np.log(r[-100:]), np.log(u[-100:]), 1)[0])
    rep = {"tail_log_slope": sl, "expected": -params.N, "D": D}
    # exploratory: solver from the profile at t=0 up to t=1
    try:
        T = 1.0
        grid = build_grid("Composite", r_max=1e4, cells=cfg.get("grid.cells"),
                          N=params.N, r_core=4.0)
        res = run(lambda x: P(x, 0.0), grid,
                  _solver_cfg(cfg, T, _times(cfg, T), None))
        ex = P(grid.centers, T)
        V = grid.volumes
        rep["solver_rel_l1"] = float(np.dot(np.abs(res.snapshots[-1].u - ex), V) / np.dot(ex, V))
    except StiffnessError as e:
        rep["solver_error"] = str(e)
    out.json("critical.json", rep)
    return rep, {}


PRESET_FUNCS = {
    "outer_decay": preset_outer_decay, "inner_levelsets": preset_inner_levelsets,
    "band_sigma_star": preset_band_sigma_star, "slow_control": preset_slow_control,
    "plap_appendix": preset_plap_appendix, "critical_explore": preset_critical_explore,
}


# ------------------------------------------------------------- commands

def evaluate(cfg, out):
    e, params = cfg["evaluate"], cfg.params
    kind = e["field"]
    if kind == "barenblatt":
        if e["C"] == "auto":
            fld = BarenblattFast.mass_form(params, e["M"])
        else:
            fld = BarenblattFast(params, e["C"], profile_mass(params, e["C"]))
    elif kind == "bernoulli":
        a = kappa(params) + 1.0 if e["a"] == "auto" else e["a"]
        fld = BernoulliSuper(params, a, cfg["reaction"]["rate"])
    elif kind == "km":
        fld = KMSimilarity(params, e["a_hat"])
    elif kind == "barrier":
        fld = BarrierSub(params, e["b"], e["c"], e["r0"])
    elif kind == "pseudo_barenblatt":
        fld = PseudoBarenblattCritical(params, e["D"])
    else:
        fld = TypeIIVeryFast(params, e["D"], e["tc"])
    r = np.linspace(e["r_min"], e["r_max"], e["points"])
    if kind == "bernoulli":
        r = r[r > 0]
    rows = []
    for t in e["times"]:
        for ri, v in zip(r, fld(r, t)):
            rows.append((ri, t, float(v)))
    out.csv("field.csv", ["r", "t", "value"], rows)
    return {"field": kind, "points": len(rows)}, {}


def fronts_cmd(cfg, out):
    params, f = cfg.params, cfg.reaction
    res = simulate(cfg, out)
    trajs = track_levels(res, cfg.get("experiment.omegas"))
    write_trajectories(out, trajs)
    fits = {}
    for tr in trajs:
        try:
            fits[repr(tr.omega)] = {"exp": _fit_dict(fit_exp_rate(tr)),
                                    "linear": _fit_dict(fit_linear_speed(tr))}
        except InsufficientSamples as ex:
            fits[repr(tr.omega)] = {"error": str(ex)}
    rep = {"fits": fits, "boundary_alarm": res.diagnostics.boundary_alarm}
    if classify(params) == FAST_GOOD:
        rep["sigma_star"] = sigma_star(params, f)
    out.json("fits.json", rep)
    return rep, {}


def twspeed(cfg, out):
    params = cfg.params
    tw = critical_speed_shooting(params.m, params.p, cfg.reaction,
                                 tol=cfg["experiment"]["tol"])
    out.csv("tw_profile.csv", ["phi", "v"], tw.profile)
    rep = {"c_star": tw.c_star, "bracket": list(tw.bracket),
           "trace": [[c, k] for c, k in tw.trace]}
    out.json("tw.json", rep)
    return rep, {}


def ordered_pairs(params, grid, t_end, n_pairs, seed, eps_reg=None):
    """Worst (u_lo - u_hi)_+ over snapshots for random ordered data pairs."""
    rng = np.random.default_rng(seed)
    rc = grid.centers
    worst = 0.0
    cfg = SolverConfig(DoublyNonlinear(params.m, params.p), t_end=t_end,
                       snapshot_times=np.linspace(0, t_end, 5),
                       reaction=Full(logistic()), eps_reg=eps_reg)
    for _ in range(n_pairs):
        h = rng.uniform(0.2, 0.9)
        w = rng.uniform(0.5, 3.0)
        # algebraic tails: zeros would make the m < 1 step bound vanish
        bump = 1.0 / (1.0 + (rc / w) ** 2) ** 2
        lo = h * bump
        hi = np.minimum(1.0, lo + rng.uniform(0.0, 0.1) * bump)
        a = run(lo, grid, cfg)
        b = run(hi, grid, cfg)
        for sa, sb in zip(a.snapshots, b.snapshots):
            worst = max(worst, float(np.max(sa.u - sb.u)))
    return worst


def verify_cmd(cfg, out):
    """Audit suite; every entry in the returned checks is gated."""
    params, f = cfg.params, cfg.reaction
    if classify(params) != FAST_GOOD:
        raise ConfigError([(0, "verify needs a FastGood parameter triple")])
    ss = sigma_star(params, f)
    eps = _eps_reg(cfg)
    rep, checks = {}, {}
    d = make_plateau_tail(cfg["datum"]["eps_tilde"], cfg["datum"]["rho_tilde0"], params)
    r1, res = verify.audit_bernoulli(params, d, 8.0, f, eps_reg=eps)
    rep["bernoulli"] = r1.to_dict()
    checks["bernoulli"] = r1.passed
    r2, sch, _ = verify.audit_barenblatt_linearized(params, 0.5 * ss, f, eps_reg=eps)
    rep["barenblatt_linearized"] = r2.to_dict()
    checks["barenblatt_linearized"] = r2.passed
    if params.p == 2:
        T = 25.0
        grid = _grid(cfg, T, d)
        long = run(d, grid, _solver_cfg(cfg, T, np.linspace(0, T, 51), Full(f)))
        r3, setup = verify.audit_w_problem(params, long, 0.5 * ss, 10.0, f)
        rep["w_problem"] = {**r3.to_dict(), "setup": setup.__dict__}
        checks["w_problem"] = r3.passed
    tr = verify.check_selfsimilar_tracking(params, eps_reg=eps)
    rep["tracking"] = {"errors": tr["errors"], "times": tr["times"],
                       "boundary_alarm": tr["boundary_alarm"]}
    checks["tracking"] = bool(tr["errors"][-1] <= 0.02 and not tr["boundary_alarm"])
    mono = verify.check_radial_monotonicity(tr["result"])
    rep["radial_monotonicity"] = mono
    checks["radial_monotonicity"] = mono <= 1e-8
    grid = build_grid("Composite", r_max=200.0, cells=256, N=params.N, r_core=4.0)
    op = ordered_pairs(params, grid, 2.0, 5, cfg.seed, eps)
    rep["ordered_pairs"] = op
    checks["ordered_pairs"] = op <= 1e-9
    out.json("audit.json", {"checks": checks, "reports": rep})
    return rep, checks


COMMANDS = {"evaluate": evaluate, "fronts": fronts_cmd, "twspeed": twspeed,
            "verify": verify_cmd}


def run_experiment(cfg, out_dir, command=None):
    """Run a command or the config's preset; returns (exit_code, manifest)."""
    name = command or cfg.preset
    out = Output(out_dir)
    code = EXIT_OK
    try:
        if name in PRESET_FUNCS and cfg.preset != name:
            # 'auto' keys resolve per preset, so record it before running
            cfg = cfg.with_overrides(**{"experiment.preset": name})
            _validate(cfg, {})
    except ConfigError as e:
        code = EXIT_CONFIG
        out.json("error.json", {"type": type(e).__name__, "message": str(e)})
    meta = {"command": name, "config": cfg.to_text(), "seed": cfg.seed,
            "target": TARGETS.get(name, "")}
    if code != EXIT_OK:
        meta["exit_code"] = code
        return code, out.manifest(**meta)
    try:
        if name == "simulate":
            res = simulate(cfg, out)
            rep, checks = {"steps": res.diagnostics.steps}, {}
        elif name in COMMANDS:
            rep, checks = COMMANDS[name](cfg, out)
        elif name in PRESET_FUNCS:
            rep, checks = PRESET_FUNCS[name](cfg, out)
        else:
            raise ConfigError([(0, "no preset or command given")])
        meta["checks"] = checks
        if not all(checks.values()):
            code = EXIT_AUDIT
    except (ConfigError, ParameterError, RegimeError) as e:
        code = EXIT_CONFIG
        out.json("error.json", {"type": type(e).__name__, "message": str(e)})
    except (StiffnessError, InconclusiveShot, InsufficientSamples, FeasibilityError,
            ScheduleError, FloatingPointError, ArithmeticError) as e:
        code = EXIT_NUMERIC
        out.json("error.json", {"type": type(e).__name__, "message": str(e)})
    meta["exit_code"] = code
    return code, out.manifest(**meta)


# ------------------------------------------------------------- sweep

SWEEP_HEADER = ["m", "p", "N", "sigma_factor", "omega", "regime", "sigma_star",
                "sigma_hat", "ratio", "rate_ok", "Cband", "band_ok", "pass", "error"]


def _sweep_cell(args):
    text, over, cell_dir, preset = args
    row = {"m": over["params.m"], "p": over["params.p"], "N": over["params.N"],
           "sigma_factor": over.get("experiment.sigma_factor", ""),
           "omega": over["experiment.omegas"][0]}
    try:
        base = parse_config(text)
        cfg = base.with_overrides(**over, **{"experiment.preset": preset})
        _validate(cfg, {})
        code, man = run_experiment(cfg, cell_dir)
        row["regime"] = classify(cfg.params)
        if code in (EXIT_CONFIG, EXIT_NUMERIC):
            with open(os.path.join(cell_dir, "error.json"), encoding="utf-8") as fh:
                raise RuntimeError(json.load(fh)["message"])
        ss = sigma_star(cfg.params, cfg.reaction)
        row["sigma_star"] = ss
        name = {"band_sigma_star": "band.json", "inner_levelsets": "inner_levelsets.json"}
        if preset in name:
            with open(os.path.join(cell_dir, name[preset]), encoding="utf-8") as fh:
                rep = json.load(fh)
            key = repr(row["omega"])
            if preset == "band_sigma_star":
                b = rep["bands"][key]
                row.update(sigma_hat=b["sigma_hat"], ratio=b["ratio"],
                           Cband=b["Cband"], band_ok=b["ok"])
            else:
                fit = rep["fits"][key]
                row.update(sigma_hat=fit["slope"], ratio=fit["ratio"])
        if "ratio" in row:
            row["rate_ok"] = bool(abs(row["ratio"] - 1.0) <= 0.1)
        row["pass"] = bool(code == EXIT_OK and row.get("rate_ok", True))
        row["error"] = ""
    except Exception as e:          # quarantined into the table
        row.setdefault("regime", "")
        row["pass"] = False
        row["error"] = f"{type(e).__name__}: {e}".replace(",", ";").replace("\n", " ")
    return row


def sweep(cfg, text, out_dir):
    """One row per grid cell; errors are recorded, never dropped."""
    s = cfg["sweep"]
    pv = cfg["params"]
    axes = {
        "params.m": s["m"] or (pv["m"],), "params.p": s["p"] or (pv["p"],),
        "params.N": s["N"] or (pv["N"],),
        "experiment.sigma_factor": s["sigma_factor"] or (None,),
        "experiment.omegas": tuple((o,) for o in (s["omega"] or cfg.get("experiment.omegas", s["preset"])[:1])),
    }
    cells = []
    keys = list(axes)
    for combo in np.ndindex(*[len(axes[k]) for k in keys]):
        over = {k: axes[k][i] for k, i in zip(keys, combo)}
        if over["experiment.sigma_factor"] is None:
            del over["experiment.sigma_factor"]
        over["run.seed"] = cfg.seed
        cells.append(over)
    jobs = [(text, over, os.path.join(out_dir, f"cell_{i:03d}"), s["preset"])
            for i, over in enumerate(cells)]
    workers = cfg["run"]["workers"]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(_sweep_cell, jobs))
    else:
        rows = [_sweep_cell(j) for j in jobs]
    out = Output(out_dir)
    out.csv("sweep.csv", SWEEP_HEADER,
            [[row.get(k, "") for k in SWEEP_HEADER] for row in rows])
    for i in range(len(jobs)):
        man = os.path.join(out_dir, f"cell_{i:03d}", "manifest.json")
        if os.path.exists(man):
            with open(man, "rb") as fh:
                out.files[f"cell_{i:03d}/manifest.json"] = hashlib.sha256(fh.read()).hexdigest()
    out.manifest(command="sweep", config=cfg.to_text(), seed=cfg.seed, cells=len(rows))
    return rows


# ------------------------------------------------------------- CLI

def build_parser():
    ap = argparse.ArgumentParser(prog="fastkpp",
                                 description="Fast-diffusion KPP numerical laboratory")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("evaluate", "simulate", "fronts", "twspeed", "verify", "sweep"):
        sp = sub.add_parser(name)
        _common(sp)
    sp = sub.add_parser("preset")
    sp.add_argument("name", choices=PRESETS)
    _common(sp)
    return ap


def _common(sp):
    sp.add_argument("--config", required=True, help="sectioned key = value file")
    sp.add_argument("--out", help="output directory (overrides run.out)")
    sp.add_argument("--seed", type=int, help="seed (overrides run.seed)")


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        with open(args.config, encoding="utf-8") as fh:
            text = fh.read()
        cfg = parse_config(text)
    except (OSError, ConfigError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    over = {}
    if args.seed is not None:
        over["run.seed"] = args.seed
    if args.command == "preset":
        over["experiment.preset"] = args.name
    cfg = cfg.with_overrides(**over)
    try:
        _validate(cfg, {})
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = args.out or cfg["run"]["out"]
    if args.command == "sweep":
        rows = sweep(cfg, text, out_dir)
        print(f"{len(rows)} cells, {sum(r['pass'] for r in rows)} passed")
        return EXIT_OK
    command = None if args.command == "preset" else args.command
    code, man = run_experiment(cfg, out_dir, command)
    print(f"{man['command']}: exit {code}, {len(man['files'])} files in {out_dir}")
    return code
