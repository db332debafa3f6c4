"""Deterministic CSV/JSON writers.

Floats are written with 17 significant digits, JSON keys are sorted and
no timestamps are recorded, so the same spec and seed give byte-identical
files. Every file starts with the resolved spec.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .core import Field


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def jsonable(obj):
    """Plain JSON types; non-finite floats become the strings 'nan', 'inf', '-inf'."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):
        return obj.value
    return obj


def header_block(spec_lines: list[str], command: str) -> str:
    lines = [f"# aggdiff {command}"] + [f"# {ln}" for ln in spec_lines]
    return "\n".join(lines) + "\n"


def write_csv(path: Path, header: str, columns, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(header)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(x) for x in row])


def write_json(path: Path, spec: dict, payload: dict):
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = dict(payload)
    doc["spec"] = spec
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(jsonable(doc), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def snapshot_rows(snapshots: list[tuple[float, Field]]):
    """(t, coords..., value) rows for every node of every snapshot."""
    for t, f in snapshots:
        coords = [c.ravel() for c in f.grid.coords]
        vals = f.values.ravel()
        for k in range(vals.size):
            yield (t,) + tuple(c[k] for c in coords) + (vals[k],)


def snapshot_columns(f: Field) -> list[str]:
    if f.grid.is_radial:
        names = ["r"]
    elif f.grid.axes == 1:
        names = ["x"]
    else:
        names = ["x", "y"]
    return ["t"] + names + [f.tag]
