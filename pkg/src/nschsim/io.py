"""Snapshot and time-series files.

Snapshots are legacy-VTK-style ASCII structured-points files so standard
viewers can load them; line 2 (the VTK title line) carries the format
version tag.  All floats are written with repr(), which round-trips
exactly through float(), and the reader is provided so tests can assert
bit equality.  Array values are listed x-fastest, matching the VTK
convention; the origin is the first cell center.

The time series is a flat CSV with the fixed header below; one row per
attempted step.  flags is a semicolon-joined token list ("ok", or e.g.
"rejected:newton;halved").
"""

import csv
import os

import numpy as np

from .errors import IoError
from .grid import Grid

__all__ = [
    "SNAPSHOT_VERSION_LINE",
    "TIMESERIES_HEADER",
    "write_snapshot",
    "read_snapshot",
    "write_timeseries",
    "read_timeseries",
]

SNAPSHOT_VERSION_LINE = "# nsch-sim snapshot v1"

TIMESERIES_HEADER = (
    "t,E_kin,E_grad,E_pot,E_tot,diss_visc,diss_ch,slack,"
    "sep_margin,v_norm,eq_residual,h,flags"
)


def _fmt(x) -> str:
    return repr(float(x))


def _scalar_lines(name, field, nx, ny, out):
    out.append(f"SCALARS {name} double 1")
    out.append("LOOKUP_TABLE default")
    for j in range(ny):
        for i in range(nx):
            out.append(_fmt(field[i, j]))


def write_snapshot(grid: Grid, phi, rho, u, v, p, t, path) -> None:
    """Write composition, density, pressure and velocity at time t."""
    phi = np.asarray(phi)
    n = phi.shape[0]
    nx, ny = grid.nx, grid.ny
    lines = [
        "# vtk DataFile Version 3.0",
        SNAPSHOT_VERSION_LINE,
        "ASCII",
        "DATASET STRUCTURED_POINTS",
        f"DIMENSIONS {nx} {ny} 1",
        f"ORIGIN {_fmt(0.5 * grid.dx)} {_fmt(0.5 * grid.dy)} 0.0",
        f"SPACING {_fmt(grid.dx)} {_fmt(grid.dy)} 1.0",
        f"POINT_DATA {nx * ny}",
        "FIELD metadata 1",
        "TIME 1 1 double",
        _fmt(t),
    ]
    for k in range(n):
        _scalar_lines(f"phi_{k + 1}", phi[k], nx, ny, lines)
    _scalar_lines("rho", np.asarray(rho), nx, ny, lines)
    _scalar_lines("p", np.asarray(p), nx, ny, lines)
    lines.append("VECTORS velocity double")
    uu, vv = np.asarray(u), np.asarray(v)
    for j in range(ny):
        for i in range(nx):
            lines.append(f"{_fmt(uu[i, j])} {_fmt(vv[i, j])} 0.0")
    try:
        with open(path, "w") as f:
            f.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write snapshot {path}: {exc}") from exc


def read_snapshot(path):
    """Read a snapshot back; returns a dict of arrays and metadata.

    Keys: nx, ny, dx, dy, t, phi (n, nx, ny), p, u, v.  Raises IoError on
    a missing file or a version mismatch.
    """
    try:
        with open(path) as f:
            lines = f.read().splitlines()
    except OSError as exc:
        raise IoError(f"cannot read snapshot {path}: {exc}") from exc
    if len(lines) < 8 or lines[1] != SNAPSHOT_VERSION_LINE:
        raise IoError(f"{path} is not a recognized snapshot (version line mismatch)")

    def field_after(idx, nx, ny):
        vals = np.array([float(s) for s in lines[idx : idx + nx * ny]])
        return vals.reshape(ny, nx).T, idx + nx * ny

    nx, ny, _ = (int(s) for s in lines[4].split()[1:])
    dx = float(lines[6].split()[1])
    dy = float(lines[6].split()[2])
    t = float(lines[10])
    out = {"nx": nx, "ny": ny, "dx": dx, "dy": dy, "t": t}

    phi = []
    i = 11
    while i < len(lines):
        head = lines[i].split()
        if head[0] == "SCALARS":
            name = head[1]
            arr, i = field_after(i + 2, nx, ny)
            if name.startswith("phi_"):
                phi.append(arr)
            else:
                out[name] = arr
        elif head[0] == "VECTORS":
            rows = [lines[i + 1 + k].split() for k in range(nx * ny)]
            uv = np.array([[float(r[0]), float(r[1])] for r in rows])
            out["u"] = uv[:, 0].reshape(ny, nx).T
            out["v"] = uv[:, 1].reshape(ny, nx).T
            i += 1 + nx * ny
        else:
            i += 1
    out["phi"] = np.stack(phi) if phi else None
    return out


def write_timeseries(rows, path) -> None:
    """Write ledger rows (12 numbers + flags string each) under the fixed header."""
    try:
        with open(path, "w", newline="") as f:
            f.write(TIMESERIES_HEADER + "\n")
            for row in rows:
                *nums, flags = row
                f.write(",".join(_fmt(x) for x in nums) + "," + str(flags) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write time series {path}: {exc}") from exc


def read_timeseries(path):
    """Read a ledger CSV; returns a list of dicts keyed by the header names."""
    try:
        with open(path, newline="") as f:
            reader = csv.reader(f)
            try:
                header = next(reader)
            except StopIteration:
                raise IoError(f"{path} is empty") from None
            if ",".join(header) != TIMESERIES_HEADER:
                raise IoError(f"{path} has an unexpected header")
            names = header[:-1]
            rows = []
            for rec in reader:
                if len(rec) != len(header):
                    raise IoError(f"{path}: malformed row {len(rows) + 2}")
                row = {k: float(s) for k, s in zip(names, rec)}
                row["flags"] = rec[-1]
                rows.append(row)
            return rows
    except OSError as exc:
        raise IoError(f"cannot read time series {path}: {exc}") from exc
