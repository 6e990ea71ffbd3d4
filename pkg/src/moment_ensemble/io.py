"""CSV readers/writers for moments, profiles and trajectories.

Numbers are written with 17 significant digits so files round-trip exactly
and diff cleanly between runs.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .grid import EnsembleProfile, ParameterGrid
from .moments import MomentSequence
from .multiindex import MultiIndex, count_multiindices


class CSVFormatError(ValueError):
    pass


def fmt(x) -> str:
    return format(float(x), ".17g")


def _open_writer(path: Path):
    path = Path(path)
    fh = open(path, "w", newline="")
    return fh, csv.writer(fh, lineterminator="\n")


def moment_rows(m: MomentSequence):
    for r, k in enumerate(m.indices):
        for i in range(m.dim_state):
            yield list(k) + [i + 1, m.values[r, i]]


def moment_header(d: int) -> list[str]:
    return [f"k_{j + 1}" for j in range(d)] + ["state_i", "value"]


def write_moments_csv(m: MomentSequence, path) -> Path:
    fh, w = _open_writer(path)
    with fh:
        w.writerow(moment_header(m.dim_param))
        for row in moment_rows(m):
            w.writerow([str(v) for v in row[:-1]] + [fmt(row[-1])])
    return Path(path)


def write_moment_trace_csv(times, sequences, path) -> Path:
    """Moment trajectory: the moments CSV with a leading ``time`` column."""
    fh, w = _open_writer(path)
    with fh:
        header_written = False
        for t, m in zip(times, sequences):
            if not header_written:
                w.writerow(["time"] + moment_header(m.dim_param))
                header_written = True
            for row in moment_rows(m):
                w.writerow([fmt(t)] + [str(v) for v in row[:-1]] + [fmt(row[-1])])
    return Path(path)


def _parse_float(token: str, line: int, column: str) -> float:
    try:
        val = float(token)
    except ValueError:
        raise CSVFormatError(f"line {line}: malformed number {token!r} in column {column}") from None
    if not math.isfinite(val):
        raise CSVFormatError(f"line {line}: non-finite value {token!r} in column {column}")
    return val


def _read_rows(path):
    path = Path(path)
    with open(path, newline="") as fh:
        lines = [(i + 1, row) for i, row in enumerate(csv.reader(fh))]
    comments = [row for _, row in lines if row and row[0].startswith("#")]
    data = [(i, row) for i, row in lines if row and not row[0].startswith("#")]
    if not data:
        raise CSVFormatError(f"{path}: empty file")
    return comments, data[0][1], data[1:]


def read_moments_csv(path) -> MomentSequence:
    """Inverse of :func:`write_moments_csv`; the index set must be dense."""
    _, header, rows = _read_rows(path)
    header = [h.strip() for h in header]
    if len(header) < 3 or header[-2:] != ["state_i", "value"]:
        raise CSVFormatError(f"{path}: header must be k_1,...,k_d,state_i,value")
    d = len(header) - 2
    entries = {}
    n = 0
    max_order = 0
    for line, row in rows:
        if len(row) != len(header):
            raise CSVFormatError(f"line {line}: expected {len(header)} columns, got {len(row)}")
        try:
            k = MultiIndex(int(x) for x in row[:d])
            i = int(row[d])
        except ValueError:
            raise CSVFormatError(f"line {line}: malformed index in {row[:d + 1]}") from None
        if i < 1:
            raise CSVFormatError(f"line {line}: state_i is 1-based")
        entries[(k, i - 1)] = _parse_float(row[-1], line, "value")
        n = max(n, i)
        max_order = max(max_order, k.order())
    if count_multiindices(d, max_order) * n != len(entries):
        raise CSVFormatError(f"{path}: moment index set is not dense up to order {max_order}")
    m = MomentSequence.zeros(d, max_order, n)
    for (k, i), v in entries.items():
        m.values[m.row(k), i] = v
    return m


def write_profile_csv(grid: ParameterGrid, profile: EnsembleProfile, path) -> Path:
    """Profile as ``beta_1..beta_d,x_1..x_n``; a leading ``# bounds`` comment
    records the box so that reading it back recovers the same weights."""
    fh, w = _open_writer(path)
    with fh:
        fh.write("# bounds=" + ";".join(f"{fmt(a)}:{fmt(b)}" for a, b in grid.bounds) + "\n")
        w.writerow([f"beta_{j + 1}" for j in range(grid.d)]
                   + [f"x_{i + 1}" for i in range(profile.n)])
        for beta, x in zip(grid.nodes, profile.states):
            w.writerow([fmt(v) for v in beta] + [fmt(v) for v in x])
    return Path(path)


def _infer_axis(values: np.ndarray, axis: int):
    uniq = np.unique(values)
    if len(uniq) == 1:
        raise CSVFormatError(f"cannot infer spacing on axis {axis + 1} from a single value")
    h = np.diff(uniq)
    if not np.allclose(h, h[0], rtol=1e-9, atol=1e-12):
        raise CSVFormatError(f"beta_{axis + 1} is not on a uniform grid")
    return uniq, float(h[0])


def load_profile_csv(path, bounds=None) -> tuple[ParameterGrid, EnsembleProfile]:
    """Read ``beta_1..beta_d,x_1..x_n`` rows into a grid and a profile.

    Weights are equal (volume / P). The box comes from ``bounds``, else from
    a ``# bounds=a:b;...`` comment, else it is inferred by extending the
    outermost nodes by one grid spacing on each side.
    """
    comments, header, rows = _read_rows(path)
    header = [h.strip() for h in header]
    d = sum(1 for h in header if h.startswith("beta_"))
    n = sum(1 for h in header if h.startswith("x_"))
    if d == 0 or n == 0 or d + n != len(header):
        raise CSVFormatError(f"{path}: header must be beta_1..beta_d,x_1..x_n")
    if not rows:
        raise CSVFormatError(f"{path}: no data rows")
    data = np.empty((len(rows), d + n))
    for r, (line, row) in enumerate(rows):
        if len(row) != len(header):
            raise CSVFormatError(f"line {line}: expected {len(header)} columns, got {len(row)}")
        for c, token in enumerate(row):
            data[r, c] = _parse_float(token, line, header[c])
    betas, states = data[:, :d], data[:, d:]
    if d == 1 and np.any(np.diff(betas[:, 0]) <= 0):
        raise CSVFormatError("beta_1 column must be strictly increasing")
    if bounds is None:
        for row in comments:
            text = ",".join(row).lstrip("#").strip()
            if text.startswith("bounds="):
                bounds = [tuple(float(v) for v in part.split(":"))
                          for part in text[len("bounds="):].split(";")]
    if bounds is None:
        bounds = []
        for j in range(d):
            uniq, h = _infer_axis(betas[:, j], j)
            bounds.append((uniq[0] - h, uniq[-1] + h))
    bounds = [tuple(b) for b in bounds]
    if len(bounds) != d:
        raise CSVFormatError(f"{len(bounds)} bound intervals given for d={d}")
    vol = float(np.prod([b - a for a, b in bounds]))
    grid = ParameterGrid(betas, np.full(len(betas), vol / len(betas)), bounds)
    return grid, EnsembleProfile(states)


def write_trajectory_csv(times, states, controls, grid: ParameterGrid, path) -> Path:
    """``time,node_index,beta_1..beta_d,x_1..x_n,u_1..u_l``, one row per node per sample."""
    fh, w = _open_writer(path)
    with fh:
        n = states[0].shape[1]
        l = len(np.atleast_1d(controls[0]))
        w.writerow(["time", "node_index"] + [f"beta_{j + 1}" for j in range(grid.d)]
                   + [f"x_{i + 1}" for i in range(n)] + [f"u_{i + 1}" for i in range(l)])
        nodes = np.asarray(grid.nodes, dtype=float)
        for t, X, u in zip(times, states, controls):
            tail = [fmt(v) for v in np.atleast_1d(u)]
            for p in range(X.shape[0]):
                w.writerow([fmt(t), str(p)] + [fmt(v) for v in nodes[p]]
                           + [fmt(v) for v in X[p]] + tail)
    return Path(path)


def write_series_csv(header: list[str], rows, path) -> Path:
    fh, w = _open_writer(path)
    with fh:
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return Path(path)


def write_manifest(out_dir, files: dict, extra: dict | None = None) -> Path:
    out_dir = Path(out_dir)
    payload = {"files": {k: Path(v).name for k, v in files.items()}}
    if extra:
        payload.update(extra)
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path
