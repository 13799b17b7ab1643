"""Writers for time-series CSV files and legacy-VTK snapshots.

Every file is written to a temporary sibling and renamed into place, so an
interrupted run never leaves a truncated output.
"""

from __future__ import annotations

import csv
import io

import numpy as np

from .fields import atomic_write_text


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_csv(path, columns: list[str], rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    atomic_write_text(path, buf.getvalue())


def read_csv(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        data = [[float(x) for x in row] for row in r]
    arr = np.array(data, dtype=float).reshape(-1, len(header))
    return {h: arr[:, i] for i, h in enumerate(header)}


def _scalar_block(name, values):
    lines = [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
    lines.extend(_fmt(v) for v in np.asarray(values, dtype=float))
    return lines


def write_snapshot(mesh, fields: dict, path, title: str = "nanotherm snapshot"):
    """ASCII legacy-VTK STRUCTURED_GRID with one POINT_DATA scalar per field."""
    n = mesh.n_nodes
    for name, arr in fields.items():
        if np.asarray(arr).shape != (n,):
            raise ValueError(f"field {name!r} has shape {np.shape(arr)}, expected ({n},)")
        if any(c.isspace() for c in name):
            raise ValueError(f"field name {name!r} contains whitespace")
    lines = [
        "# vtk DataFile Version 3.0",
        title[:255],
        "ASCII",
        "DATASET STRUCTURED_GRID",
        f"DIMENSIONS {mesh.nx + 1} {mesh.ny + 1} 1",
        f"POINTS {n} double",
    ]
    lines.extend(f"{_fmt(x)} {_fmt(y)} 0.0" for x, y in mesh.coords)
    lines.append(f"POINT_DATA {n}")
    for name, arr in fields.items():
        lines.extend(_scalar_block(name, arr))
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_network_snapshot(network, cell_data: dict, path, point_data: dict | None = None,
                           title: str = "nanotherm network"):
    """ASCII legacy-VTK POLYDATA with LINES cells and per-segment scalars."""
    npt = network.n_nodes
    nseg = network.n_segments
    lines = ["# vtk DataFile Version 3.0", title[:255], "ASCII", "DATASET POLYDATA", f"POINTS {npt} double"]
    lines.extend(f"{_fmt(x)} {_fmt(y)} 0.0" for x, y in network.node_xy)
    lines.append(f"LINES {nseg} {3 * nseg}")
    lines.extend(f"2 {a} {b}" for a, b in network.segments)
    lines.append(f"CELL_DATA {nseg}")
    for name, arr in cell_data.items():
        if np.asarray(arr).shape != (nseg,):
            raise ValueError(f"cell field {name!r} must have one value per segment")
        lines.extend(_scalar_block(name, arr))
    if point_data:
        lines.append(f"POINT_DATA {npt}")
        for name, arr in point_data.items():
            lines.extend(_scalar_block(name, arr))
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_snapshot(path) -> tuple[tuple[int, int, int], np.ndarray, dict[str, np.ndarray]]:
    """Minimal reader for the structured-grid files written above."""
    with open(path) as fh:
        toks = fh.read().split("\n")
    i = 0
    dims = None
    pts = None
    data: dict[str, np.ndarray] = {}
    while i < len(toks):
        line = toks[i].strip()
        if line.startswith("DIMENSIONS"):
            dims = tuple(int(t) for t in line.split()[1:4])
        elif line.startswith("POINTS"):
            n = int(line.split()[1])
            pts = np.array([[float(t) for t in toks[i + 1 + k].split()] for k in range(n)])
            i += n
        elif line.startswith("SCALARS"):
            name = line.split()[1]
            n = int(np.prod(dims)) if dims else len(pts)
            data[name] = np.array([float(toks[i + 2 + k]) for k in range(n)])
            i += n + 1
        i += 1
    return dims, pts, data
