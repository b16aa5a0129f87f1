"""Config-driven experiment runner.

    python -m srblab run configs/rates_cat.ini --seed 1 --out results/rates
    python -m srblab list

A config is an INI file with sections [experiment], [family], [observable], [numerics] and
[t_grid]. Every key is checked against the schema of the chosen experiment before anything is
computed; unknown keys are rejected (exit 2). Computation failures exit 1.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import json
import math
import sys
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import bound_comparison, evt_quotient, fit_to_csv, holder_fit, jump_detect
from .dynamics import FAMILY_SCHEMAS, DEFAULT_EPS0, make_builtin_family
from .errors import ConfigError, ParameterError, SRBLabError
from .grid import GridFunction, Mesh, circle, torus2
from .norms import ConeSystem, anisotropic_norm, sobolev_norm, verify_scaling
from .observables import OBSERVABLE_SCHEMAS, builtin_observable, mollified_observable
from .rates import CONDITIONS, check_condition, finite_time_rates, predicted_holder_bound
from .response import (BirkhoffParams, UlamParams, curve_to_csv, ergodic_response_sum, fd_derivatives,
                       fdt_resolvent, fdt_series, response_curve)
from .transfer import build_ulam, export_measure_csv, srb_birkhoff, srb_ulam

# ---------------------------------------------------------------- schema

# key -> (type, default, help); type is one of int, float, str, bool, ints, floats
_ESTIMATOR = {
    "estimator": ("str", "ulam", "ulam | birkhoff"),
    "cells": ("ints", None, "cells per dimension, comma separated (ulam)"),
    "samples_per_cell": ("int", 64, "in-cell samples (ulam)"),
    "n_replicates": ("int", 4, "independent sample sets per t (ulam)"),
    "error_mode": ("str", "replicates", "replicates | refinement (ulam)"),
    "n_orbits": ("int", 1000, "orbits (birkhoff)"),
    "n_steps": ("int", 100, "steps per orbit (birkhoff)"),
    "burn_in": ("int", 50, "discarded steps (birkhoff)"),
}
_RATES = {
    "m": ("int", 20, "horizon"),
    "n_samples": ("int", 64, "attractor samples"),
    "t": ("float", 0.0, "parameter value"),
    "p": ("float", 2.0, "integrability exponent"),
    "beta": ("float", 0.5, "Holder exponent in star1"),
    "r": ("float", 0.4, "Sobolev order for alpha_max, in (0, 1/p)"),
}
_NORM = {
    "domain": ("str", "", "circle | torus2; defaults to the family's domain"),
    "cells": ("ints", (256,), "cells per dimension"),
}

NUMERICS = {
    "rates": dict(_RATES),
    "srb": {**{k: _ESTIMATOR[k] for k in ("estimator", "cells", "samples_per_cell", "n_orbits",
                                          "n_steps", "burn_in")},
            "t": ("float", 0.0, "parameter value")},
    "response": {**_ESTIMATOR, "t0": ("float", 0.0, "base point for finite differences")},
    "fdt": {"cells": ("ints", None, "cells per dimension"),
            "samples_per_cell": ("int", 64, "in-cell samples"),
            "t0": ("float", 0.0, "base point"),
            "K": ("int", 40, "series truncation"),
            "method": ("str", "all", "comma list of series, resolvent, ergodic; or all"),
            "smoothing_cells": ("int", 0, "density smoothing half-width in cells; 0 = family default"),
            "ergodic_K": ("int", 4, "terms of the ergodic sum"),
            "mollify_eps": ("float", 0.0, "mollify the observable first (needed for Heaviside + ergodic)"),
            "n_orbits": ("int", 2000, "orbits (ergodic)"),
            "n_steps": ("int", 200, "steps per orbit (ergodic)"),
            "burn_in": ("int", 40, "discarded steps (ergodic)")},
    "holder": {**_ESTIMATOR, "t0": ("float", 0.0, "base point"),
               "scale_decades": ("int", 0, "restrict the fit; 0 = all scales"),
               "r": ("float", 0.0, "Sobolev order for bound_comparison; 0 = skip"),
               "p": ("float", 2.0, "integrability exponent"),
               "m": ("int", 20, "rates horizon")},
    "jump": {**_ESTIMATOR, "t0": ("float", 0.0, "crossing point"),
             "c_min": ("float", 0.5, "minimal gap"),
             "min_brackets": ("int", 2, "nested brackets required")},
    "evt": {**{k: _ESTIMATOR[k] for k in ("estimator", "cells", "samples_per_cell", "n_orbits",
                                          "n_steps", "burn_in")},
            "s": ("float", 0.5, "scale factor in (0, 1)"),
            "a_list": ("floats", None, "negative thresholds"),
            "t": ("float", 0.0, "parameter value")},
    "norms": {**_NORM, "r": ("floats", (0.4,), "Sobolev orders"), "p": ("float", 2.0, "exponent"),
              "resolutions": ("ints", (), "extra resolutions (cells per dimension) to report"),
              "u": ("float", -1.0, "anisotropic plus order; < 0 = skip"),
              "s": ("float", -1.5, "anisotropic minus order"),
              "aperture_deg": ("float", 40.0, "unstable half aperture"),
              "width_deg": ("float", 10.0, "cone transition width")},
    "scaling": {**_NORM, "r": ("float", 0.5, "nominal regularity"), "r_tilde": ("float", 0.25, "target order"),
                "p": ("float", 2.0, "exponent"), "eps_list": ("floats", None, "mollifier scales")},
}

EXPERIMENTS = {
    "rates": "finite-time rates nu_s, nu_s_bar, nu_u, J and the conditions star1/star3/star4",
    "srb": "SRB measure by Ulam (cell weights) or Birkhoff (orbit points)",
    "response": "response curve R(t) over the t_grid with finite-difference derivatives",
    "fdt": "linear response by series, resolvent and ergodic sum",
    "holder": "response curve plus log-log Holder fit and bound comparison",
    "jump": "response curve plus nested-bracket jump detection",
    "evt": "EVT quotient R_{a s} / R_a over thresholds a < 0, scale s in (0,1)",
    "norms": "Sobolev and anisotropic norms of an observable sampled on a grid",
    "scaling": "mollifier approximation and blow-up slopes",
}
NEEDS_FAMILY = {"rates", "srb", "response", "fdt", "holder", "jump", "evt"}
NEEDS_OBSERVABLE = {"response", "fdt", "holder", "jump", "evt", "norms", "scaling"}
NEEDS_TGRID = {"response", "holder", "jump"}
EXPERIMENT_KEYS = {"name", "seed", "output_dir"}
TGRID_KEYS = {"kind": "linear | geometric | list", "start": "linear", "stop": "linear", "num": "linear",
              "center": "geometric", "max": "geometric", "levels": "geometric",
              "two_sided": "geometric", "include_center": "geometric", "values": "list"}


def _convert(section, key, raw, typ):
    try:
        if typ == "int":
            return int(raw)
        if typ == "float":
            v = float(raw)
            if not math.isfinite(v):
                raise ValueError
            return v
        if typ == "bool":
            low = raw.strip().lower()
            if low not in ("true", "false", "yes", "no", "1", "0"):
                raise ValueError
            return low in ("true", "yes", "1")
        if typ in ("ints", "floats"):
            parts = [p for p in raw.replace(";", ",").split(",") if p.strip()]
            f = int if typ == "ints" else float
            return tuple(f(p) for p in parts)
        return raw.strip()
    except ValueError:
        raise ConfigError(f"{section}.{key}", f"cannot parse {raw!r} as {typ}") from None


def _typed_param(default, raw, section, key):
    if isinstance(default, str):
        return raw.strip()
    if isinstance(default, int) and not isinstance(default, bool):
        return _convert(section, key, raw, "int")
    return _convert(section, key, raw, "float")


@dataclass
class ExperimentConfig:
    experiment: str
    family: dict = field(default_factory=dict)  # {"name":..., "params": {...}, "eps0": ...}
    observable: dict = field(default_factory=dict)
    numerics: dict = field(default_factory=dict)
    t_grid: list = field(default_factory=list)
    seed: int = 0
    output_dir: str = "results"

    def to_dict(self):
        return asdict(self)


def _t_grid(sec):
    for k in sec:
        if k not in TGRID_KEYS:
            raise ConfigError(f"t_grid.{k}", "unknown key")
    kind = sec.get("kind", "linear").strip()
    get = lambda k, typ, default=None: _convert("t_grid", k, sec[k], typ) if k in sec else default  # noqa: E731
    if kind == "list":
        ts = list(get("values", "floats", ()))
    elif kind == "linear":
        n = get("num", "int", 0)
        if n < 0:
            raise ConfigError("t_grid.num", "must be nonnegative")
        ts = np.linspace(get("start", "float", 0.0), get("stop", "float", 0.0), n).tolist() if n else []
    elif kind == "geometric":
        c, mx, lv = get("center", "float", 0.0), get("max", "float", 0.04), get("levels", "int", 8)
        if mx <= 0:
            raise ConfigError("t_grid.max", "must be positive")
        if lv < 0:
            raise ConfigError("t_grid.levels", "must be nonnegative")
        steps = [mx * 2.0 ** -k for k in range(lv)]
        ts = [c + s for s in steps]
        if get("two_sided", "bool", True):
            ts += [c - s for s in steps]
        if get("include_center", "bool", True):
            ts.append(c)
    else:
        raise ConfigError("t_grid.kind", f"unknown kind {kind!r}; use linear, geometric or list")
    ts = sorted(set(float(t) for t in ts))
    if not ts:
        raise ConfigError("t_grid", "t_grid is empty")
    return ts


def load_config(path) -> ExperimentConfig:
    """Parse and schema-check an INI config; raises ConfigError naming the offending key."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc}") from None
    except configparser.Error as exc:
        raise ConfigError("config", str(exc).splitlines()[0]) from None
    return config_from_sections({s: dict(cp[s]) for s in cp.sections()})


def config_from_sections(sections) -> ExperimentConfig:
    known = {"experiment", "family", "observable", "numerics", "t_grid"}
    for s in sections:
        if s not in known:
            raise ConfigError(s, "unknown section")
    exp = sections.get("experiment")
    if exp is None or "name" not in exp:
        raise ConfigError("experiment.name", "missing")
    for k in exp:
        if k not in EXPERIMENT_KEYS:
            raise ConfigError(f"experiment.{k}", "unknown key")
    name = exp["name"].strip()
    if name not in EXPERIMENTS:
        raise ConfigError("experiment.name", f"unknown experiment {name!r}; choose from {sorted(EXPERIMENTS)}")
    cfg = ExperimentConfig(name)
    cfg.seed = _convert("experiment", "seed", exp["seed"], "int") if "seed" in exp else 0
    cfg.output_dir = exp.get("output_dir", f"results/{name}").strip()

    fam = dict(sections.get("family", {}))
    if fam:
        fname = fam.pop("name", "").strip()
        if fname not in FAMILY_SCHEMAS:
            raise ConfigError("family.name", f"unknown family {fname!r}; choose from {sorted(FAMILY_SCHEMAS)}")
        eps0 = _convert("family", "eps0", fam.pop("eps0"), "float") if "eps0" in fam else DEFAULT_EPS0
        params = {}
        for k, raw in fam.items():
            if k not in FAMILY_SCHEMAS[fname]:
                raise ConfigError(f"family.{k}", f"unknown parameter for {fname}")
            params[k] = _typed_param(FAMILY_SCHEMAS[fname][k][0], raw, "family", k)
        cfg.family = {"name": fname, "params": params, "eps0": eps0}
    elif name in NEEDS_FAMILY:
        raise ConfigError("family", f"experiment {name} needs a [family] section")

    obs = dict(sections.get("observable", {}))
    if obs:
        oname = obs.pop("name", "").strip()
        if oname not in OBSERVABLE_SCHEMAS:
            raise ConfigError("observable.name",
                              f"unknown observable {oname!r}; choose from {sorted(OBSERVABLE_SCHEMAS)}")
        params = {}
        for k, raw in obs.items():
            if k not in OBSERVABLE_SCHEMAS[oname]:
                raise ConfigError(f"observable.{k}", f"unknown parameter for {oname}")
            params[k] = _typed_param(OBSERVABLE_SCHEMAS[oname][k][0], raw, "observable", k)
        cfg.observable = {"name": oname, "params": params}
    elif name in NEEDS_OBSERVABLE:
        raise ConfigError("observable", f"experiment {name} needs an [observable] section")

    schema = NUMERICS[name]
    num = {}
    for k, raw in sections.get("numerics", {}).items():
        if k not in schema:
            raise ConfigError(f"numerics.{k}", f"unknown key for experiment {name}")
        num[k] = _convert("numerics", k, raw, schema[k][0])
    for k, (_, default, _) in schema.items():
        num.setdefault(k, default)
    cfg.numerics = num

    if "t_grid" in sections:
        if name not in NEEDS_TGRID:
            raise ConfigError("t_grid", f"experiment {name} takes no t_grid")
        cfg.t_grid = _t_grid(sections["t_grid"])
    elif name in NEEDS_TGRID:
        raise ConfigError("t_grid", "t_grid is empty")
    _validate_values(cfg)
    return cfg


def _methods(spec):
    return tuple(m.strip() for m in spec.split(",") if m.strip())


def _validate_values(cfg):
    n = cfg.numerics
    if "estimator" in n and n["estimator"] not in ("ulam", "birkhoff"):
        raise ConfigError("numerics.estimator", "must be ulam or birkhoff")
    if n.get("error_mode", "replicates") not in ("replicates", "refinement"):
        raise ConfigError("numerics.error_mode", "must be replicates or refinement")
    if "method" in n and n["method"] != "all":
        if not set(_methods(n["method"])) <= {"series", "resolvent", "ergodic"} or not _methods(n["method"]):
            raise ConfigError("numerics.method", "must list series, resolvent, ergodic, or be all")
    if n.get("domain", "") not in ("", "circle", "torus2"):
        raise ConfigError("numerics.domain", "must be circle or torus2")
    for k in ("samples_per_cell", "n_replicates", "n_orbits", "n_steps", "n_samples", "K", "min_brackets"):
        if k in n and n[k] < 1:
            raise ConfigError(f"numerics.{k}", "must be positive")
    if "burn_in" in n and n["burn_in"] < 0:
        raise ConfigError("numerics.burn_in", "must be nonnegative")
    if "cells" in n and n["cells"] is not None and (not n["cells"] or min(n["cells"]) < 1):
        raise ConfigError("numerics.cells", "needs positive cell counts")
    if cfg.experiment == "evt":
        if not 0 < n["s"] < 1:
            raise ConfigError("numerics.s", "s must lie in (0, 1)")
        if not n["a_list"] or any(a >= 0 for a in n["a_list"]):
            raise ConfigError("numerics.a_list", "needs a nonempty list of negative thresholds")
    if cfg.experiment == "scaling" and (not n["eps_list"] or len(n["eps_list"]) < 4):
        raise ConfigError("numerics.eps_list", "needs at least 4 scales")


# ---------------------------------------------------------------- objects

def _family(cfg):
    f = cfg.family
    try:
        return make_builtin_family(f["name"], f["params"], f["eps0"])
    except ParameterError as exc:
        raise ConfigError("family", str(exc)) from None


def _domain(cfg, fam):
    name = cfg.numerics.get("domain", "")
    if name == "circle":
        return circle()
    if name == "torus2":
        return torus2()
    if fam is not None:
        return fam.domain
    raise ConfigError("numerics.domain", "no [family] given, so a domain is required")


def _observable(cfg, domain):
    try:
        return builtin_observable(cfg.observable["name"], cfg.observable["params"], domain)
    except ParameterError as exc:
        raise ConfigError("observable", str(exc)) from None


def _cells(cfg, fam_or_domain):
    cells = cfg.numerics.get("cells")
    d = fam_or_domain.d
    if cells is None:
        cells = (4096,) if d == 1 else (128,) * d
    if len(cells) == 1:
        cells = cells * d
    if len(cells) != d:
        raise ConfigError("numerics.cells", f"needs 1 or {d} entries")
    return tuple(int(c) for c in cells)


def _estimator_params(cfg, fam, seed):
    n = cfg.numerics
    if n["estimator"] == "ulam":
        return UlamParams(_cells(cfg, fam), n["samples_per_cell"], seed, n.get("n_replicates", 1),
                          n.get("error_mode", "replicates"))
    return BirkhoffParams(n["n_orbits"], n["n_steps"], n["burn_in"], seed)


# ---------------------------------------------------------------- output

def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        for row in rows:
            w.writerow([("%.17g" % v) if isinstance(v, float) else v for v in row])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def write_manifest(out_dir, files):
    lines = []
    for name in sorted(files):
        p = Path(out_dir) / name
        lines.append(f"{name}\t{p.stat().st_size}\t{_sha256(p)}")
    (Path(out_dir) / "manifest.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return lines


# ---------------------------------------------------------------- experiments

def _exp_rates(cfg, out, seed):
    n = cfg.numerics
    fam = _family(cfg)
    rates = finite_time_rates(fam, n["t"], m=n["m"], n_samples=n["n_samples"], seed=seed)
    conds = {}
    for c in CONDITIONS:
        try:
            conds[c] = asdict(check_condition(rates, c, p=n["p"], beta=n["beta"], d_u=fam.d_u,
                                              d_s=max(fam.d_s, 1)))
        except (ParameterError, ValueError) as exc:
            conds[c] = {"condition": c, "error": str(exc)}
    try:
        amax = predicted_holder_bound(rates, n["r"], n["p"])
    except (ParameterError, ValueError):
        amax = float("nan")
    _write_csv(out / "rates.csv", ["quantity", "value"],
               [(k, float(getattr(rates, k))) for k in ("nu_s", "nu_s_bar", "nu_u", "J")])
    _write_csv(out / "conditions.csv", ["condition", "holds", "lhs", "rhs", "margin"],
               [(c, str(v.get("holds", "")), float(v.get("lhs", float("nan"))),
                 float(v.get("rhs", float("nan"))), float(v.get("margin", float("nan"))))
                for c, v in conds.items()])
    res = {**rates.to_dict(), "conditions": conds, "alpha_max": amax}
    return res, ["rates.csv", "conditions.csv"]


def _exp_srb(cfg, out, seed):
    n = cfg.numerics
    fam = _family(cfg)
    if n["estimator"] == "ulam":
        op = build_ulam(fam, n["t"], Mesh(fam.domain, _cells(cfg, fam)), n["samples_per_cell"], seed)
        mu = srb_ulam(op)
    else:
        mu = srb_birkhoff(fam, n["t"], n["n_orbits"], n["n_steps"], n["burn_in"], seed)
    export_measure_csv(mu, out / "measure.csv")
    res = {"kind": mu.kind, "residual": mu.residual, "n_weights": int(np.size(mu.weights)),
           "meta": mu.meta}
    return res, ["measure.csv"]


def _curve(cfg, seed):
    fam = _family(cfg)
    obs = _observable(cfg, fam.domain)
    curve = response_curve(fam, obs, cfg.t_grid, cfg.numerics["estimator"],
                           _estimator_params(cfg, fam, seed))
    return fam, obs, curve


def _exp_response(cfg, out, seed):
    fam, obs, curve = _curve(cfg, seed)
    curve_to_csv(curve, out / "response.csv")
    fds = fd_derivatives(curve, cfg.numerics["t0"]) if _on_grid(curve, cfg.numerics["t0"]) else []
    _write_csv(out / "fd_derivatives.csv", ["delta", "derivative", "error_bar"],
               [(float(a), float(b), float(c)) for a, b, c in fds])
    res = {"curve": curve.to_dict(), "fd_derivatives": fds}
    return res, ["response.csv", "fd_derivatives.csv"]


def _on_grid(curve, t0):
    return bool(np.any(np.abs(curve.t_values - t0) <= 1e-12))


def _exp_fdt(cfg, out, seed):
    n = cfg.numerics
    fam = _family(cfg)
    obs = _observable(cfg, fam.domain)
    cells = _cells(cfg, fam)
    mesh = Mesh(fam.domain, cells)
    if n["mollify_eps"] > 0:
        obs = mollified_observable(obs, n["mollify_eps"], mesh)
    res, files = {}, []
    sc = n["smoothing_cells"] or None
    methods = ("series", "resolvent", "ergodic") if n["method"] == "all" else _methods(n["method"])
    op = rho = None
    if {"series", "resolvent"} & set(methods):
        op = build_ulam(fam, n["t0"], mesh, n["samples_per_cell"], seed)
        rho = srb_ulam(op, gap_check=False)
    for m in methods:
        if m == "series":
            r = fdt_series(op, fam, n["t0"], obs, K=n["K"], rho=rho, smoothing_cells=sc)
        elif m == "resolvent":
            r = fdt_resolvent(op, fam, n["t0"], obs, rho=rho, smoothing_cells=sc)
        else:
            if obs.kind != "smooth":
                raise ConfigError("numerics.mollify_eps", "the ergodic sum needs a smooth observable")
            r = ergodic_response_sum(fam, n["t0"], obs, K=n["ergodic_K"],
                                     orbit_params=BirkhoffParams(n["n_orbits"], n["n_steps"], n["burn_in"], seed))
        res[m] = r.to_dict()
        if len(r.terms):
            _write_csv(out / f"terms_{m}.csv", ["k", "term"], [(k, float(v)) for k, v in enumerate(r.terms)])
            files.append(f"terms_{m}.csv")
    _write_csv(out / "derivatives.csv", ["method", "derivative", "tail_ratio"],
               [(m, float(res[m]["derivative"]), float(res[m]["tail_ratio"])) for m in methods])
    return res, ["derivatives.csv"] + files


def _exp_holder(cfg, out, seed):
    n = cfg.numerics
    fam, obs, curve = _curve(cfg, seed)
    curve_to_csv(curve, out / "response.csv")
    fit = holder_fit(curve, n["t0"], n["scale_decades"] or None)
    fit_to_csv(fit, out / "fit.csv")
    res = {"curve": curve.to_dict(), "fit": fit.to_dict()}
    if n["r"] > 0:
        rates = finite_time_rates(fam, n["t0"], m=n["m"], seed=seed)
        res["bound_comparison"] = bound_comparison(fit, rates, n["r"], n["p"])
    return res, ["response.csv", "fit.csv"]


def _exp_jump(cfg, out, seed):
    n = cfg.numerics
    fam, obs, curve = _curve(cfg, seed)
    curve_to_csv(curve, out / "response.csv")
    jr = jump_detect(curve, n["t0"], n["c_min"], n["min_brackets"])
    _write_csv(out / "brackets.csv", ["t_left", "t_right", "gap"], [tuple(map(float, b)) for b in jr.brackets])
    return {"curve": curve.to_dict(), "jump": asdict(jr)}, ["response.csv", "brackets.csv"]


def _exp_evt(cfg, out, seed):
    n = cfg.numerics
    fam = _family(cfg)
    obs = _observable(cfg, fam.domain)
    if obs.kind != "heaviside":
        raise ConfigError("observable.name", "evt needs a Heaviside observable (g and a threshold)")
    if n["estimator"] == "ulam":
        ep = UlamParams(_cells(cfg, fam), n["samples_per_cell"], seed, 1)
    else:
        ep = BirkhoffParams(n["n_orbits"], n["n_steps"], n["burn_in"], seed)
    ev = evt_quotient(fam, obs.g, obs.h, n["s"], n["a_list"], n["t"], ep, obs.grad_g)
    _write_csv(out / "evt.csv", ["a", "R_a", "R_as", "quotient", "error", "defined"],
               [(float(a), float(ra), float(ras), float(q), float(e), str(dd))
                for a, ra, ras, q, e, dd in zip(ev.a_values, ev.R_a, ev.R_as, ev.quotients, ev.errors, ev.defined)])
    return {"evt": ev.to_dict()}, ["evt.csv"]


def _maybe_family(cfg):
    return _family(cfg) if cfg.family else None


def _exp_norms(cfg, out, seed):
    n = cfg.numerics
    domain = _domain(cfg, _maybe_family(cfg))
    if not domain.fully_periodic:
        raise ConfigError("numerics.domain", "norms need a fully periodic domain")
    obs = _observable(cfg, domain)
    base = _cells(cfg, domain)
    grids = [base] + [(int(c),) * domain.d for c in n["resolutions"]]
    rows, res = [], {"sobolev": [], "anisotropic": []}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for cells in grids:
            mesh = Mesh(domain, cells)
            f = GridFunction(mesh, obs(mesh.centers()))
            for r in n["r"]:
                v = sobolev_norm(f, r, n["p"])
                rows.append(("sobolev", cells[0], float(r), n["p"], v, float("nan"), float("nan")))
                res["sobolev"].append({"cells": list(cells), "r": r, "p": n["p"], "norm": v})
            if n["u"] >= 0 and domain.d == 2:
                cones = ConeSystem(0.0, math.radians(n["aperture_deg"]), math.radians(n["width_deg"]))
                tot, pl, mi = anisotropic_norm(f, cones, n["u"], n["s"], n["p"])
                rows.append(("anisotropic", cells[0], float(n["u"]), n["p"], tot, pl, mi))
                res["anisotropic"].append({"cells": list(cells), "u": n["u"], "s": n["s"],
                                           "total": tot, "plus": pl, "minus": mi})
    _write_csv(out / "norms.csv", ["kind", "cells", "order", "p", "norm", "plus", "minus"], rows)
    return res, ["norms.csv"]


def _exp_scaling(cfg, out, seed):
    n = cfg.numerics
    domain = _domain(cfg, _maybe_family(cfg))
    obs = _observable(cfg, domain)
    mesh = Mesh(domain, _cells(cfg, domain))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        sr = verify_scaling(obs, n["r"], n["r_tilde"], n["p"], n["eps_list"], mesh)
    _write_csv(out / "scaling.csv", ["eps", "approx_norm", "smooth_norm"],
               [(float(e), float(a), float(s)) for e, a, s in zip(sr.eps, sr.approx_norms, sr.smooth_norms)])
    res = {k: v for k, v in asdict(sr).items() if k not in ("eps", "approx_norms", "smooth_norms")}
    return res, ["scaling.csv"]


_RUNNERS = {"rates": _exp_rates, "srb": _exp_srb, "response": _exp_response, "fdt": _exp_fdt,
            "holder": _exp_holder, "jump": _exp_jump, "evt": _exp_evt, "norms": _exp_norms,
            "scaling": _exp_scaling}


def run(cfg: ExperimentConfig, seed=None, out_dir=None):
    """Execute one experiment; returns (results dict, manifest lines)."""
    seed = cfg.seed if seed is None else int(seed)
    out = Path(out_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    res, files = _RUNNERS[cfg.experiment](cfg, out, seed)
    payload = {"version": __version__, "experiment": cfg.experiment, "seed": seed,
               "config": cfg.to_dict(), "results": res}
    text = json.dumps(_jsonable(payload), sort_keys=True, indent=2, ensure_ascii=False)
    (out / "results.json").write_text(text + "\n", encoding="utf-8")
    return payload, write_manifest(out, files + ["results.json"])


# ---------------------------------------------------------------- listing

def _fmt_schema(schema):
    lines = []
    for k in sorted(schema):
        default, help_ = schema[k][0], schema[k][-1]
        lines.append(f"    {k} = {default}" + (f"  # {help_}" if help_ else ""))
    return lines


def list_builtins() -> str:
    out = ["families:"]
    for name in sorted(FAMILY_SCHEMAS):
        out.append(f"  {name}")
        out += _fmt_schema({"eps0": (DEFAULT_EPS0, "half-width of the parameter interval"),
                            **FAMILY_SCHEMAS[name]})
    out.append("observables:")
    for name in sorted(OBSERVABLE_SCHEMAS):
        out.append(f"  {name}")
        out += _fmt_schema(OBSERVABLE_SCHEMAS[name])
    out.append("experiments:")
    for name in sorted(EXPERIMENTS):
        out.append(f"  {name}: {EXPERIMENTS[name]}")
        out += [f"    {k} = {d}  # {h}" for k, (_, d, h) in sorted(NUMERICS[name].items())]
    out.append("t_grid:")
    out += [f"  {k}  # {v}" for k, v in sorted(TGRID_KEYS.items())]
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------- entry point

def main(argv=None):
    ap = argparse.ArgumentParser(prog="srblab", description="SRB linear-response experiments")
    sub = ap.add_subparsers(dest="cmd", required=True)
    pr = sub.add_parser("run", help="run one experiment from an INI config")
    pr.add_argument("config")
    pr.add_argument("--seed", type=int, default=None)
    pr.add_argument("--out", default=None, help="output directory (overrides experiment.output_dir)")
    sub.add_parser("list", help="list families, observables and experiments")
    args = ap.parse_args(argv)
    if args.cmd == "list":
        sys.stdout.write(list_builtins())
        return 0
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        payload, manifest = run(cfg, args.seed, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (SRBLabError, ValueError, FloatingPointError, np.linalg.LinAlgError, OSError) as exc:
        print(f"computation failed ({type(exc).__name__}): {exc}", file=sys.stderr)
        return 1
    for line in manifest:
        print(line)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
