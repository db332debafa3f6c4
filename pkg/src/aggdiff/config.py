"""INI run specifications: schema, parsing, overrides and builders.

A spec is a set of sections with typed keys. Unknown sections or keys are
rejected, every missing key takes the default listed in SCHEMA, and the
resolved spec (defaults filled in) is what gets written into every output
header.
"""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import Field, Grid, Params
from .eigen import dirichlet_first_analytic
from .exact import BarenblattBump, MultiBumpConfig, multibump_on_grid


class ConfigError(ValueError):
    pass


def _bool(s: str) -> bool:
    t = s.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _floats(s: str) -> tuple[float, ...]:
    s = s.strip()
    if not s:
        return ()
    return tuple(float(x) for x in s.split(","))


def _ints(s: str) -> tuple[int, ...]:
    s = s.strip()
    if not s:
        return ()
    return tuple(int(x) for x in s.split(","))


def _bumps(s: str) -> tuple[tuple[str, float, tuple[float, ...]], ...]:
    """'negative 1.0 -7; positive 1.0 0' -> ((sign, T, centre), ...)."""
    out = []
    for item in s.split(";"):
        item = item.strip()
        if not item:
            continue
        parts = item.split()
        if len(parts) < 3:
            raise ValueError(f"bump {item!r} needs 'sign T x0 [y0]'")
        out.append((parts[0], float(parts[1]), tuple(float(x) for x in parts[2:])))
    return tuple(out)


def _opt_float(s: str) -> float | None:
    s = s.strip()
    return None if s == "" or s.lower() == "none" else float(s)


# section -> key -> (parser, default as written in a config file)
SCHEMA: dict[str, dict[str, tuple]] = {
    "params": {"a": (float, "1.0"), "b": (float, "1.0"), "c": (float, "0.0"),
               "d": (float, "0.0"), "n": (int, "1")},
    "grid": {"geometry": (str, "interval"), "length": (_floats, "1.0"), "cells": (_ints, "200"),
             "origin": (_floats, ""), "boundary": (str, "neumann")},
    "initial": {"family": (str, "constant"), "variable": (str, "u"), "value": (float, "0.5"),
                "amplitude": (float, "1.0"), "center": (_floats, ""), "width": (float, "0.1"),
                "cap": (_opt_float, ""), "A0": (_opt_float, ""), "bumps": (_bumps, "")},
    "solver": {"model": (str, "local"), "epsilon": (_opt_float, ""), "dt": (_opt_float, ""),
               "sigma": (float, "0.4"), "t_end": (float, "0.1"),
               "breakdown_policy": (str, "halt"), "output_stride": (int, "100"),
               "form": (str, "u")},
    "diagnostics": {"kaplan": (_bool, "false"), "concavity": (_bool, "false"),
                    "m": (float, "2.0")},
    "exact": {"bumps": (_bumps, ""), "tau": (_opt_float, ""), "t_max": (_opt_float, ""),
              "times": (_floats, "0"), "residual_dt": (float, "1e-5"),
              "solver_cells": (_ints, ""), "solver_t": (float, "0.5")},
    "regimes": {"u0_max": (_opt_float, ""), "mu": (_opt_float, ""), "A0": (_opt_float, ""),
                "star_shaped": (_bool, "true"), "modes": (int, "10"), "m": (float, "2.0")},
    "particles": {"N": (int, "1000"), "epsilon": (float, "0.1"), "dt": (float, "1e-3"),
                  "t_end": (float, "0.1"), "seed": (int, "0"), "seeds": (int, "1"),
                  "domain": (str, "free"), "bandwidth": (_opt_float, ""),
                  "compare": (_bool, "false"), "times": (_floats, "")},
    "output": {"dir": (str, "out"), "prefix": (str, "run")},
}


@dataclass
class RunSpec:
    """Resolved configuration: raw strings (for the audit header) and parsed values."""

    raw: dict[str, dict[str, str]]
    values: dict[str, dict[str, object]]

    def __getitem__(self, section: str) -> dict[str, object]:
        return self.values[section]

    def header_lines(self) -> list[str]:
        lines = []
        for sec in SCHEMA:
            lines.append(f"[{sec}]")
            for key in SCHEMA[sec]:
                lines.append(f"{key} = {self.raw[sec][key]}")
        return lines

    def to_dict(self) -> dict:
        return {sec: dict(self.raw[sec]) for sec in SCHEMA}


def parse_overrides(items) -> dict[str, dict[str, str]]:
    out: dict[str, dict[str, str]] = {}
    for item in items or ():
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        lhs, val = item.split("=", 1)
        sec, key = lhs.strip().split(".", 1)
        out.setdefault(sec, {})[key.strip()] = val.strip()
    return out


def resolve(text: str = "", overrides: dict[str, dict[str, str]] | None = None) -> RunSpec:
    """Parse INI text, apply overrides, fill defaults and type-check."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse configuration: {exc}") from exc
    given: dict[str, dict[str, str]] = {s: dict(cp[s]) for s in cp.sections()}
    for sec, kv in (overrides or {}).items():
        given.setdefault(sec, {}).update(kv)

    raw: dict[str, dict[str, str]] = {}
    values: dict[str, dict[str, object]] = {}
    for sec, kv in given.items():
        if sec not in SCHEMA:
            raise ConfigError(f"unknown section [{sec}]")
        unknown = set(kv) - set(SCHEMA[sec])
        if unknown:
            raise ConfigError(f"unknown key(s) in [{sec}]: {', '.join(sorted(unknown))}")
    for sec, keys in SCHEMA.items():
        raw[sec], values[sec] = {}, {}
        for key, (parse, default) in keys.items():
            text_val = given.get(sec, {}).get(key, default)
            try:
                values[sec][key] = parse(text_val)
            except ValueError as exc:
                raise ConfigError(f"[{sec}] {key} = {text_val!r}: {exc}") from exc
            raw[sec][key] = text_val
    spec = RunSpec(raw, values)
    validate(spec)
    return spec


def load(path: str | Path, overrides=None) -> RunSpec:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return resolve(text, overrides)


def _choice(spec: RunSpec, sec: str, key: str, options):
    if spec[sec][key] not in options:
        raise ConfigError(f"[{sec}] {key} must be one of {', '.join(options)}, "
                          f"got {spec[sec][key]!r}")


def validate(spec: RunSpec):
    _choice(spec, "grid", "geometry", ("interval", "rectangle", "radial"))
    _choice(spec, "grid", "boundary", ("neumann", "dirichlet"))
    _choice(spec, "initial", "family", ("constant", "gaussian", "eigenfunction", "barenblatt"))
    _choice(spec, "initial", "variable", ("u", "v"))
    _choice(spec, "solver", "model", ("local", "nonlocal"))
    _choice(spec, "solver", "form", ("u", "v"))
    _choice(spec, "solver", "breakdown_policy", ("halt", "continue_with_event"))
    _choice(spec, "particles", "domain", ("free", "box"))
    try:
        params(spec)
        grid(spec)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    s = spec["solver"]
    if s["model"] == "nonlocal" and not (s["epsilon"] and s["epsilon"] > 0):
        raise ConfigError("[solver] epsilon > 0 is required for the nonlocal model")
    if not 0 < s["sigma"] <= 1:
        raise ConfigError("[solver] sigma must lie in (0, 1]")
    if s["t_end"] < 0:
        raise ConfigError("[solver] t_end must be >= 0")
    if s["output_stride"] < 1:
        raise ConfigError("[solver] output_stride must be >= 1")


# ---------------------------------------------------------------- builders


def params(spec: RunSpec) -> Params:
    q = spec["params"]
    return Params(q["a"], q["b"], q["c"], q["d"], q["n"])


def grid(spec: RunSpec) -> Grid:
    g = spec["grid"]
    length, cells, origin = g["length"], g["cells"], g["origin"]
    geom = g["geometry"]
    if geom == "interval":
        if len(length) != 1 or len(cells) != 1:
            raise ValueError("interval grids take one length and one cell count")
        return Grid.interval(length[0], cells[0], origin[0] if origin else 0.0)
    if geom == "rectangle":
        if len(length) != 2 or len(cells) != 2:
            raise ValueError("rectangle grids take two lengths and two cell counts")
        return Grid.rectangle(length[0], length[1], cells[0], cells[1],
                              tuple(origin) if origin else (0.0, 0.0))
    if len(length) != 1 or len(cells) != 1:
        raise ValueError("radial grids take one radius and one cell count")
    return Grid.radial(length[0], cells[0], spec["params"]["n"])


def bump_config(items, tau=None) -> MultiBumpConfig:
    bumps = [BarenblattBump(sign, T, x0) for sign, T, x0 in items]
    return MultiBumpConfig(bumps, tau)


def _distance_sq(grd: Grid, center) -> np.ndarray:
    if grd.is_radial:
        return grd.axis_coords[0] ** 2
    if not center:
        center = tuple(o + 0.5 * L for o, L in zip(grd.origin, grd.lengths))
    if len(center) != grd.axes:
        raise ValueError(f"center needs {grd.axes} coordinate(s)")
    return sum((c - x0) ** 2 for c, x0 in zip(grd.coords, center))


def initial_field(spec: RunSpec, p: Params | None = None, grd: Grid | None = None) -> Field:
    """Initial data from one of the built-in families."""
    p = p or params(spec)
    grd = grd or grid(spec)
    ini = spec["initial"]
    bc = spec["grid"]["boundary"]
    fam = ini["family"]
    tag = ini["variable"]
    if fam == "constant":
        vals = np.full(grd.shape, ini["value"])
    elif fam == "gaussian":
        vals = ini["amplitude"] * np.exp(-_distance_sq(grd, ini["center"]) / (2 * ini["width"] ** 2))
        if ini["cap"] is not None:
            vals = np.minimum(vals, ini["cap"])
    elif fam == "eigenfunction":
        if grd.is_radial:
            raise ValueError("eigenfunction data needs an interval or rectangle grid")
        phi = dirichlet_first_analytic(grd).phi.values
        if ini["A0"] is not None:
            vals = phi * (ini["A0"] / grd.integrate(phi * phi))
        else:
            vals = phi * (ini["amplitude"] / float(np.max(phi)))
        tag = "u"
    else:
        if not ini["bumps"]:
            raise ValueError("barenblatt initial data needs [initial] bumps")
        cfg = bump_config(ini["bumps"])
        vals = multibump_on_grid(cfg, grd, 0.0, p)
        tag = "v"
    if bc == "dirichlet" and not grd.is_radial:
        vals = np.where(grd.boundary_mask, 0.0 if tag == "u" else -p.u_crit, vals)
    return Field(vals, grd, bc, tag)


def default_mu(grd: Grid) -> float:
    return dirichlet_first_analytic(grd).mu if not grd.is_radial else math.nan
