import logging
import unittest

import numpy as np
import pytest

from ribaucour.calculus.field import FieldK, Grid
from ribaucour.exceptions import GridError
from ribaucour.geometry.mesh import obj_text, vtk_text, write_obj, write_vtk

logger = logging.getLogger(__name__)

tc = unittest.TestCase()
tc.maxDiff = None

GRID = Grid(lo=(0.0, 0.0), hi=(1.0, 1.0), res=(3, 3))


def _plane() -> FieldK:
    return FieldK(GRID, GRID.points())


def _lines(text: str, prefix: str) -> list[str]:
    return [line for line in text.splitlines() if line.startswith(prefix)]


def test_obj_quads_cover_masked_cells() -> None:
    text = obj_text(_plane())
    tc.assertEqual(9, len(_lines(text, "v ")))
    tc.assertEqual(4, len(_lines(text, "f ")))
    tc.assertEqual("v 0 0 0", _lines(text, "v ")[0])

    mask = np.ones(GRID.res, dtype=bool)
    mask[0, 0] = False
    text = obj_text(_plane(), mask)
    tc.assertEqual(8, len(_lines(text, "v ")))
    tc.assertEqual(3, len(_lines(text, "f ")))


def test_obj_needs_two_parameters() -> None:
    line = Grid(lo=(0.0,), hi=(1.0,), res=(5,))
    with pytest.raises(GridError):
        obj_text(FieldK(line, line.points()))


def test_vtk_structured_grid() -> None:
    values = np.concatenate([GRID.points(), np.ones(GRID.res + (2,))], axis=-1)
    text = vtk_text(
        FieldK(GRID, values), point_data={"sigma": np.full(GRID.res, 0.5)}
    )
    lines = text.splitlines()
    tc.assertEqual("# vtk DataFile Version 3.0", lines[0])
    tc.assertIn("DIMENSIONS 3 3 1", lines)
    tc.assertIn("POINTS 9 double", lines)
    tc.assertIn("SCALARS regular double 1", lines)
    tc.assertIn("SCALARS sigma double 1", lines)
    # first grid axis varies fastest; the fourth coordinate is dropped
    points = lines[6:15]
    tc.assertEqual("0 0 1", points[0])
    tc.assertEqual("0.5 0 1", points[1])


def test_vtk_rejects_bad_input() -> None:
    with pytest.raises(GridError):
        vtk_text(_plane(), point_data={"bad": np.zeros(4)})
    grid = Grid(lo=(0.0,) * 4, hi=(1.0,) * 4, res=(3,) * 4)
    with pytest.raises(GridError):
        vtk_text(FieldK(grid, np.zeros(grid.res + (5,))))


def test_writers(tmp_path) -> None:
    write_obj(tmp_path / "m.obj", _plane())
    write_vtk(tmp_path / "m.vtk", _plane())
    tc.assertTrue((tmp_path / "m.obj").read_text(encoding="utf-8").startswith("#"))
    tc.assertTrue((tmp_path / "m.vtk").is_file())
