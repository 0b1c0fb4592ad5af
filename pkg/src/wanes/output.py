"""Trajectory CSVs and the JSON run summary."""
from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

TRAJECTORY_COLUMNS = ("replication", "t", "eta", "phi_t", "Phi_t", "gap", "dist_ref", "attacked")
CESARO_COLUMNS = ("replication", "t", "cesaro_gap")


def fmt(x) -> str:
    return f"{float(x):.12g}"


def trajectory_csv(runs) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRAJECTORY_COLUMNS)
    for r in runs.records:
        for k in range(r.T):
            w.writerow((r.replication, k + 1, fmt(r.eta[k]), fmt(r.phi[k]), fmt(r.Phi[k]), fmt(r.gap[k]),
                        fmt(r.dist_ref[k]), int(r.attacked[k])))
    return buf.getvalue()


def cesaro_csv(runs) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CESARO_COLUMNS)
    for r in runs.records:
        for k in range(r.T):
            w.writerow((r.replication, k + 1, fmt(r.cesaro_gap[k])))
    return buf.getvalue()


def read_csv_columns(path, columns) -> dict[int, dict[str, np.ndarray]]:
    """Per-replication column arrays from a CSV written by this module."""
    with open(path, newline="", encoding="utf-8") as fh:
        rd = csv.reader(fh)
        header = next(rd, None)
        if header is None or tuple(header) != tuple(columns):
            raise ValueError(f"{path}: unexpected header {header}")
        rows: dict[int, list] = {}
        for no, row in enumerate(rd, start=2):
            if len(row) != len(columns):
                raise ValueError(f"{path}:{no}: expected {len(columns)} fields")
            rows.setdefault(int(row[0]), []).append([float(x) for x in row[1:]])
    out = {}
    for rep, vals in rows.items():
        a = np.array(vals)
        if not np.array_equal(a[:, 0], np.arange(1, a.shape[0] + 1)):
            raise ValueError(f"{path}: replication {rep} rows are not t = 1..T in order")
        out[rep] = {c: a[:, i] for i, c in enumerate(columns[1:])}
    return out


def read_trajectory(path):
    data = read_csv_columns(path, TRAJECTORY_COLUMNS)
    for cols in data.values():
        cols["attacked"] = cols["attacked"].astype(bool)
        cols["t"] = cols["t"].astype(int)
    return data


def write_trajectory(runs, path):
    write_files(Path(path).parent, {Path(path).name: trajectory_csv(runs)})


def _clean(obj):
    # JSON has no NaN/inf; map them to null
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def to_json(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=False, allow_nan=False) + "\n"


def write_files(out_dir, files: dict[str, str]):
    """Write every file or none: contents go to temporary files first and are
    renamed into place only after all of them were written."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    staged = []
    try:
        for name, text in files.items():
            fd, tmp = tempfile.mkstemp(dir=out_dir, prefix=f".{name}.", suffix=".tmp")
            staged.append((tmp, out_dir / name))
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
    except BaseException:
        for tmp, _ in staged:
            os.unlink(tmp)
        raise
    for tmp, dest in staged:
        os.replace(tmp, dest)
