"""Text serialization: field and layer CSVs with a '#' metadata header, tables, summaries.

Field CSV::

    # kind=field
    # m=2
    # s_max=20 t_max=20 lambda_max=20 h_s=0.5 h_t=0.5 h_lambda=0.5
    s,t,lambda,value
    0,0,0,0
    ...

Rows run over (s, t, lambda) in C order.  Every number is written with 12
significant digits, so identical inputs give byte-identical files.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .model import GridSpec2, GridSpec3, LayerProfile, ScalarField

FMT = "%.12g"


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return FMT % float(x)
    return str(x)


def _header(meta: dict) -> str:
    return "".join(f"# {k}={fmt(v)}\n" for k, v in meta.items())


def _read_header(path: Path) -> tuple[dict, int]:
    meta, skip = {}, 0
    with open(path) as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            k, _, v = line[1:].strip().partition("=")
            meta[k.strip()] = v.strip()
            skip += 1
    return meta, skip


def write_field(path, v: ScalarField, extra: dict | None = None) -> Path:
    g = v.grid
    if not isinstance(g, GridSpec3):
        raise ValidationError("write_field expects a 3-D field")
    path = Path(path)
    meta = {"kind": "field", "m": g.m, "s_max": g.s_max, "t_max": g.t_max, "lambda_max": g.lambda_max,
            "h_s": g.h_s, "h_t": g.h_t, "h_lambda": g.h_lambda}
    meta.update(extra or {})
    S, T, L = g.mesh()
    rows = np.column_stack([S.ravel(), T.ravel(), L.ravel(), v.values.ravel()])
    with open(path, "w", newline="\n") as fh:
        fh.write(_header(meta))
        np.savetxt(fh, rows, fmt=FMT, delimiter=",", header="s,t,lambda,value", comments="")
    return path


def read_field(path) -> ScalarField:
    path = Path(path)
    meta, skip = _read_header(path)
    if meta.get("kind") != "field":
        raise ValidationError(f"{path}: not a field CSV")
    g = GridSpec3(int(meta["m"]), float(meta["s_max"]), float(meta["t_max"]), float(meta["lambda_max"]),
                  float(meta["h_s"]), float(meta["h_t"]), float(meta["h_lambda"]))
    data = np.loadtxt(path, delimiter=",", skiprows=skip + 1, ndmin=2)
    if data.shape != (g.size, 4):
        raise ValidationError(f"{path}: expected {g.size} rows, found {data.shape[0]}")
    return ScalarField(g, data[:, 3])


def write_layer(path, layer: LayerProfile) -> Path:
    """Bottom trace as (x, u0) rows."""
    g = layer.grid
    path = Path(path)
    meta = {"kind": "layer", "nonlinearity": layer.nonlinearity, "x_max": g.x_max,
            "lambda_max": g.lambda_max, "h_x": g.h_x, "h_lambda": g.h_lambda}
    with open(path, "w", newline="\n") as fh:
        fh.write(_header(meta))
        np.savetxt(fh, np.column_stack([g.x, layer.u0]), fmt=FMT, delimiter=",", header="x,u0",
                   comments="")
    return path


def read_layer(path) -> tuple[dict, np.ndarray, np.ndarray]:
    meta, skip = _read_header(Path(path))
    data = np.loadtxt(path, delimiter=",", skiprows=skip + 1, ndmin=2)
    return meta, data[:, 0], data[:, 1]


def write_table(path, columns: list[str], rows) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            if isinstance(r, dict):
                r = [r[c] for c in columns]
            w.writerow([fmt(x) for x in r])
    return path


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return float(FMT % x) if np.isfinite(x) else str(x)
    return x


def write_summary(path, summary: dict) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_jsonable(summary), indent=2, sort_keys=True) + "\n")
    return path


def layer_grid_from_meta(meta: dict) -> GridSpec2:
    return GridSpec2(float(meta["x_max"]), float(meta["lambda_max"]), float(meta["h_x"]), float(meta["h_lambda"]))
