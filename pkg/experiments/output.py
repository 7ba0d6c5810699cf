"""
File output for external plotting: legacy VTK structured points and CSV.
"""

import csv
import logging
import os

import numpy as np

from engine.errors import OutputError

log = logging.getLogger(__name__)


def _open(path, mode="w"):
    try:
        parent = os.path.dirname(os.fspath(path))
        if parent:
            os.makedirs(parent, exist_ok=True)
        return open(path, mode, encoding="utf-8", newline="")
    except OSError as exc:
        raise OutputError(path, exc.strerror or str(exc)) from exc


def write_field_dump(u, ls, path, title="reaction-diffusion field"):
    """
    ASCII STRUCTURED_POINTS dump with point scalars u and rho, x fastest.
    u is a nodal (nx, ny) array; NaN entries are written as 0.
    """
    grid = ls.grid
    u = np.asarray(u, dtype=float)
    if u.shape != grid.shape:
        raise ValueError(f"field shape {u.shape} does not match grid {grid.shape}")
    u = np.where(np.isfinite(u), u, 0.0)
    fh = _open(path)
    try:
        with fh:
            fh.write("# vtk DataFile Version 3.0\n")
            fh.write(f"{title}\n")
            fh.write("ASCII\n")
            fh.write("DATASET STRUCTURED_POINTS\n")
            fh.write(f"DIMENSIONS {grid.nx} {grid.ny} 1\n")
            fh.write(f"ORIGIN {grid.x_lo!r} {grid.y_lo!r} 0\n")
            fh.write(f"SPACING {grid.h!r} {grid.h!r} 1\n")
            fh.write(f"POINT_DATA {grid.nx * grid.ny}\n")
            for name, values in (("u", u), ("rho", ls.values)):
                fh.write(f"SCALARS {name} double 1\n")
                fh.write("LOOKUP_TABLE default\n")
                for v in values.ravel(order="F"):
                    fh.write(f"{float(v)!r}\n")
    except OSError as exc:
        raise OutputError(path, exc.strerror or str(exc)) from exc
    log.debug("Wrote field dump %s", path)


def read_field_dump(path):
    """(origin, spacing, dims, {name: (nx, ny) array}) from a write_field_dump file"""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            tokens = fh.read().split("\n")
    except OSError as exc:
        raise OutputError(path, exc.strerror or str(exc)) from exc

    dims = origin = spacing = None
    arrays = {}
    lines = iter(tokens[3:])
    for line in lines:
        parts = line.split()
        if not parts:
            continue
        key = parts[0]
        if key == "DIMENSIONS":
            dims = tuple(int(v) for v in parts[1:4])
        elif key == "ORIGIN":
            origin = tuple(float(v) for v in parts[1:3])
        elif key == "SPACING":
            spacing = float(parts[1])
        elif key == "SCALARS":
            if dims is None:
                raise OutputError(path, "SCALARS before DIMENSIONS")
            next(lines)  # LOOKUP_TABLE
            count = dims[0] * dims[1]
            values = np.array([float(next(lines)) for _ in range(count)])
            arrays[parts[1]] = values.reshape((dims[0], dims[1]), order="F")
    if dims is None or origin is None or spacing is None:
        raise OutputError(path, "not a structured-points dump")
    return origin, spacing, dims[:2], arrays


def write_csv_table(rows, path, columns=None):
    """rows: list of dicts; header from columns or the first row's keys"""
    rows = list(rows)
    if columns is None:
        columns = list(rows[0].keys()) if rows else []
    fh = _open(path)
    try:
        with fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(columns)
            for row in rows:
                writer.writerow([row.get(c, "") for c in columns])
    except OSError as exc:
        raise OutputError(path, exc.strerror or str(exc)) from exc
    log.info("Wrote %d rows to %s", len(rows), path)


def read_csv_table(path):
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            return list(csv.DictReader(fh))
    except OSError as exc:
        raise OutputError(path, exc.strerror or str(exc)) from exc
