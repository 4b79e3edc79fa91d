"""
Mesh export of sampled immersions.

- OBJ: two-parameter maps only; one quad per grid cell whose four corners
  are all in the export mask. Vertices outside every exported quad are
  dropped.
- VTK legacy ASCII ``STRUCTURED_GRID`` for grids of dimension at most 3,
  with the export mask and any scalar node fields as point data.

Ambient coordinates beyond the third are not representable in either format
and are dropped; missing ones are zero.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Mapping

import numpy as np

from ribaucour.calculus.field import FieldK
from ribaucour.exceptions import GridError
from ribaucour.serialization import atomic_write_text

logger = logging.getLogger(__name__)


def _xyz(f: FieldK) -> np.ndarray:
    values = f.values
    if not f.value_shape:
        values = values[..., None]
    if len(f.value_shape) > 1:
        raise GridError(f"Cannot mesh a field with value shape {f.value_shape}")
    width = values.shape[-1]
    if width > 3:
        logger.debug("Dropping %d ambient coordinates for mesh export", width - 3)
        return values[..., :3]
    pad = np.zeros(values.shape[:-1] + (3 - width,))
    return np.concatenate([values, pad], axis=-1)


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def obj_text(f: FieldK, mask: np.ndarray | None = None) -> str:
    """Wavefront OBJ of a two-parameter map with quads over masked cells."""
    grid = f.grid
    if grid.n != 2:
        raise GridError(f"OBJ export needs a 2-dim grid, got {grid.n}")
    if mask is None:
        mask = np.ones(grid.res, dtype=bool)
    xyz = _xyz(f)
    cells = mask[:-1, :-1] & mask[1:, :-1] & mask[1:, 1:] & mask[:-1, 1:]
    used = np.zeros(grid.res, dtype=bool)
    for i, j in zip(*np.nonzero(cells)):
        used[i : i + 2, j : j + 2] = True

    index = np.zeros(grid.res, dtype=int)
    lines = ["# ribaucour OBJ export", f"# grid {grid.res[0]} x {grid.res[1]}"]
    counter = 0
    for i, j in zip(*np.nonzero(used)):
        counter += 1
        index[i, j] = counter
        lines.append("v " + " ".join(_fmt(x) for x in xyz[i, j]))
    for i, j in zip(*np.nonzero(cells)):
        corners = (index[i, j], index[i + 1, j], index[i + 1, j + 1], index[i, j + 1])
        lines.append("f " + " ".join(str(c) for c in corners))
    logger.debug("OBJ export: %d vertices, %d quads", counter, int(cells.sum()))
    return "\n".join(lines) + "\n"


def vtk_text(
    f: FieldK,
    mask: np.ndarray | None = None,
    point_data: Mapping[str, np.ndarray] | None = None,
    title: str = "ribaucour immersion",
) -> str:
    """Legacy VTK ``STRUCTURED_GRID`` (first grid axis varies fastest)."""
    grid = f.grid
    if grid.n > 3:
        raise GridError(f"VTK export supports grids of dimension <= 3, got {grid.n}")
    if mask is None:
        mask = np.ones(grid.res, dtype=bool)
    order = tuple(reversed(range(grid.n)))
    xyz = np.transpose(_xyz(f), order + (grid.n,)).reshape(-1, 3)
    dims = list(grid.res) + [1] * (3 - grid.n)

    lines = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET STRUCTURED_GRID",
        "DIMENSIONS " + " ".join(str(d) for d in dims),
        f"POINTS {grid.size} double",
    ]
    lines.extend(" ".join(_fmt(x) for x in point) for point in xyz)

    arrays: dict[str, np.ndarray] = {"regular": mask.astype(float)}
    for name, values in (point_data or {}).items():
        values = np.asarray(values, dtype=float)
        if values.shape != grid.res:
            raise GridError(
                f"Point data '{name}' has shape {values.shape}, expected {grid.res}"
            )
        arrays[name] = values
    lines.append(f"POINT_DATA {grid.size}")
    for name, values in arrays.items():
        lines.append(f"SCALARS {name} double 1")
        lines.append("LOOKUP_TABLE default")
        lines.extend(_fmt(x) for x in np.transpose(values, order).reshape(-1))
    return "\n".join(lines) + "\n"


def write_obj(path: Path | str, f: FieldK, mask: np.ndarray | None = None) -> Path:
    return atomic_write_text(path, obj_text(f, mask))


def write_vtk(
    path: Path | str,
    f: FieldK,
    mask: np.ndarray | None = None,
    point_data: Mapping[str, np.ndarray] | None = None,
) -> Path:
    return atomic_write_text(path, vtk_text(f, mask, point_data))
