"""Field file I/O.

One JSON file holds a grid header plus any number of named components
in node-major order (x fastest, components interleaved per node):

    {"nx": ..., "ny": ..., "x0": ..., "y0": ..., "dx": ..., "dy": ...,
     "components": ["u"], "values": [...]}

``values[(j*nx + i)*ncomp + k]`` is component ``k`` at node ``(i, j)``.
Floats survive a write/read cycle bit-exactly (shortest-repr JSON
floats); NaN entries are stored as ``null`` to stay standard JSON.
CSV export is one node per row with x, y and the components as columns.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .grid import Grid2D, GridError

__all__ = ["write_field", "read_field", "write_csv"]


def _flatten(grid: Grid2D, channels: dict[str, np.ndarray]) -> tuple[list[str], np.ndarray]:
    names: list[str] = []
    planes: list[np.ndarray] = []
    for name, arr in channels.items():
        arr = np.asarray(arr, dtype=float)
        if arr.shape == grid.shape:
            names.append(name)
            planes.append(arr)
        elif arr.ndim == 3 and arr.shape[:2] == grid.shape:
            for k in range(arr.shape[2]):
                names.append(f"{name}_{k}")
                planes.append(arr[:, :, k])
        else:
            raise GridError(f"channel {name!r} has shape {arr.shape}, grid is {grid.shape}")
    stacked = np.stack(planes, axis=-1)  # (ny, nx, ncomp)
    return names, stacked.reshape(-1)


def write_field(path: str | Path, grid: Grid2D, channels: dict[str, np.ndarray]) -> None:
    """Write named components on one grid to a JSON field file."""
    names, flat = _flatten(grid, channels)
    values = [None if np.isnan(v) else float(v) for v in flat]
    doc = {
        "nx": grid.nx,
        "ny": grid.ny,
        "x0": grid.x0,
        "y0": grid.y0,
        "dx": grid.dx,
        "dy": grid.dy,
        "components": names,
        "values": values,
    }
    Path(path).write_text(json.dumps(doc) + "\n")


def read_field(path: str | Path) -> tuple[Grid2D, dict[str, np.ndarray]]:
    """Read a JSON field file back into a grid and per-component arrays."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise GridError(f"{path}: not a valid field file ({exc})") from exc
    try:
        grid = Grid2D(doc["x0"], doc["y0"], doc["nx"], doc["ny"], doc["dx"], doc["dy"])
        names = list(doc["components"])
        flat = np.array(
            [np.nan if v is None else float(v) for v in doc["values"]], dtype=float
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise GridError(f"{path}: malformed field file ({exc})") from exc
    ncomp = len(names)
    if flat.size != grid.nx * grid.ny * ncomp:
        raise GridError(
            f"{path}: expected {grid.nx * grid.ny * ncomp} values, got {flat.size}"
        )
    cube = flat.reshape(grid.ny, grid.nx, ncomp)
    return grid, {name: cube[:, :, k] for k, name in enumerate(names)}


def write_csv(path: str | Path, grid: Grid2D, channels: dict[str, np.ndarray]) -> None:
    """Write one row per node with columns x, y and the channel values."""
    names, flat = _flatten(grid, channels)
    cube = flat.reshape(grid.ny, grid.nx, len(names))
    xs = grid.x()
    ys = grid.y()
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["x", "y", *names])
        for j in range(grid.ny):
            for i in range(grid.nx):
                writer.writerow(
                    [repr(float(xs[i])), repr(float(ys[j])), *(repr(float(v)) for v in cube[j, i])]
                )
