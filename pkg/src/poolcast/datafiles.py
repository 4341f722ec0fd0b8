"""Reading and writing data, model and prediction files.

Data files are comma-separated with a header: a ``y`` column of 0/1
outcomes, one ``p_<name>`` column per expert, and optionally ``oracle_*``
columns written by the simulator.  Model files are JSON.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .distributions import LinkFamily
from .errors import DomainError, SchemaError
from .fitting import TrainingSet
from .gp_ensemble import FittedAggregator

SCHEMA_VERSION = 1


def _fmt(x: float) -> str:
    return repr(float(x))


def read_table(path) -> tuple:
    """Return (header, dict of column -> float array)."""
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            try:
                header = [h.strip() for h in next(reader)]
            except StopIteration:
                raise SchemaError(f"{path}: file is empty") from None
            rows = [r for r in reader if r]
    except OSError as exc:
        raise SchemaError(f"cannot read {path}: {exc.strerror}") from exc
    if len(set(header)) != len(header):
        raise SchemaError(f"{path}: duplicate column names in header")
    cols = {h: [] for h in header}
    for lineno, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise SchemaError(f"{path}:{lineno}: expected {len(header)} fields, found {len(row)}")
        for h, v in zip(header, row):
            try:
                cols[h].append(float(v))
            except ValueError:
                raise SchemaError(f"{path}:{lineno}: column {h!r} has non-numeric value {v!r}") from None
    return header, {h: np.asarray(v, dtype=float) for h, v in cols.items()}


def read_data(path) -> tuple:
    """Load a data file as (TrainingSet, extra columns)."""
    header, cols = read_table(path)
    if "y" not in cols:
        raise SchemaError(f"{path}: required column 'y' is missing")
    names = [h for h in header if h.startswith("p_")]
    if not names:
        raise SchemaError(f"{path}: no expert columns (prefix 'p_') found")
    y = cols["y"]
    if not np.all((y == 0) | (y == 1)):
        raise SchemaError(f"{path}: column 'y' must contain only 0 and 1")
    reports = np.column_stack([cols[n] for n in names])
    if np.any(np.isnan(reports)) or np.any(reports < 0) or np.any(reports > 1):
        raise SchemaError(f"{path}: expert columns must hold probabilities in [0, 1]")
    extras = {h: cols[h] for h in header if h != "y" and h not in names}
    return TrainingSet(y.astype(np.int8), reports, tuple(names)), extras


def write_table(path, columns: dict, int_columns=("y",)):
    names = list(columns)
    n = len(next(iter(columns.values()))) if columns else 0
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for r in range(n):
            w.writerow(
                [str(int(columns[c][r])) if c in int_columns else _fmt(columns[c][r]) for c in names]
            )


def write_data(path, data: TrainingSet, extras: dict | None = None):
    cols = {"y": data.y}
    for j, name in enumerate(data.names):
        cols[name] = data.reports[:, j]
    for name, values in (extras or {}).items():
        cols[name] = values
    write_table(path, cols)


def model_to_dict(model: FittedAggregator, *, training: dict | None = None, grid_results=None) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "link": model.link.to_dict(),
        "intercept": model.intercept,
        "coefficients": dict(model.coefficients),
        "clip_epsilon": model.clip,
        "training": training or {},
        "grid_results": [
            {"eta": r["eta"], "mean_oof_ls": r.get("mean_oof_ls")} for r in (grid_results or [])
        ],
    }


def model_from_dict(d: dict) -> FittedAggregator:
    try:
        if d["schema_version"] != SCHEMA_VERSION:
            raise SchemaError(f"unsupported model schema_version {d['schema_version']!r}")
        link = LinkFamily.from_dict(d["link"])
        coefs = {str(k): float(v) for k, v in d["coefficients"].items()}
        return FittedAggregator(link, float(d["intercept"]), coefs, float(d["clip_epsilon"]))
    except (KeyError, TypeError, AttributeError) as exc:
        raise SchemaError(f"model file is missing or mistyped field: {exc}") from exc
    except DomainError as exc:
        raise SchemaError(f"model file has invalid values: {exc}") from exc


def write_model(path, model: FittedAggregator, **kwargs):
    d = model_to_dict(model, **kwargs)
    for r in d["grid_results"]:
        if r["mean_oof_ls"] is not None and not math.isfinite(r["mean_oof_ls"]):
            r["mean_oof_ls"] = None
    Path(path).write_text(json.dumps(d, indent=2) + "\n", encoding="utf-8")


def read_model(path) -> FittedAggregator:
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise SchemaError(f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc.msg})") from exc
    return model_from_dict(d)
