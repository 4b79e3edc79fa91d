import logging
import unittest

import numpy as np
import pytest

from ribaucour.calculus.expr import parse
from ribaucour.calculus.field import FieldK, Grid, sample
from ribaucour.calculus.linalg import transpose
from ribaucour.exceptions import GridError, NoRegularNodeError
from ribaucour.geometry.frame import (
    analyze,
    curvature_scale,
    flat_normal_bundle_residual,
    gauss_curvature_residual,
    metric_residual,
    parallel_subbundle_residual,
    rotate_normal_frame,
)

logger = logging.getLogger(__name__)

tc = unittest.TestCase()
tc.maxDiff = None


def _immersion(components: list[str], grid: Grid) -> FieldK:
    values = [sample(parse(c, grid.n), grid).values for c in components]
    return FieldK(grid, np.stack(values, axis=-1))


def _square(res: int = 17, half: float = 0.5) -> Grid:
    return Grid(lo=(-half, -half), hi=(half, half), res=(res, res))


def test_paraboloid_metric_and_second_fundamental_form() -> None:
    grid = _square()
    im = analyze(_immersion(["u1", "u2", "(u1^2 + u2^2)/2"], grid))
    u = grid.points()

    expected_metric = np.eye(2) + u[..., :, None] * u[..., None, :]
    assert metric_residual(im, expected_metric) <= 1e-12

    tc.assertEqual((2,), im.normal_seeds)
    tc.assertEqual(1, im.codim)
    scale = 1.0 / np.sqrt(1.0 + (u**2).sum(axis=-1))
    np.testing.assert_allclose(
        im.alpha[..., 0, :, :], scale[..., None, None] * np.eye(2), atol=1e-10
    )
    tc.assertEqual(0.0, flat_normal_bundle_residual(im))


def test_normal_frame_is_orthonormal_and_normal() -> None:
    grid = _square()
    im = analyze(_immersion(["u1", "u2", "u1^2 - u2^2", "2*u1*u2"], grid))
    mask = im.framed_mask
    gram = transpose(im.normal_frame) @ im.normal_frame
    assert np.abs(gram - np.eye(2))[mask].max() <= 1e-12
    assert np.abs(transpose(im.jac) @ im.normal_frame)[mask].max() <= 1e-12
    # positive entry at the seed index
    for column, seed in enumerate(im.normal_seeds):
        assert (im.normal_frame[..., seed, column][mask] > 0).all()


def test_complex_square_has_curved_normal_bundle() -> None:
    im = analyze(_immersion(["u1", "u2", "u1^2 - u2^2", "2*u1*u2"], _square()))
    assert flat_normal_bundle_residual(im) > 1.0
    assert curvature_scale(im) > 1.0


def test_rotating_the_normal_frame_keeps_invariants() -> None:
    im = analyze(_immersion(["u1", "u2", "u1^2 - u2^2", "2*u1*u2"], _square()))
    c, s = np.cos(0.4), np.sin(0.4)
    rotation = np.array([[c, -s], [s, c]])
    rotated = rotate_normal_frame(im, rotation)

    tc.assertAlmostEqual(
        flat_normal_bundle_residual(im), flat_normal_bundle_residual(rotated), places=10
    )
    back = rotate_normal_frame(rotated, rotation.T)
    np.testing.assert_allclose(back.alpha, im.alpha, atol=1e-12)
    np.testing.assert_allclose(back.nconn, im.nconn, atol=1e-12)
    with pytest.raises(GridError):
        rotate_normal_frame(im, np.eye(3))


def test_cylinder_normal_is_parallel() -> None:
    grid = Grid(lo=(0.0, -0.5), hi=(1.0, 0.5), res=(33, 33))
    base = _immersion(["cos(u1)", "sin(u1)", "u2"], grid)
    padded = FieldK(grid, np.concatenate([base.values, np.zeros(grid.res + (1,))], -1))
    im = analyze(padded)
    h2 = grid.h2_max
    tc.assertEqual(2, im.codim)
    residual = parallel_subbundle_residual(im, cols=[0])
    logger.info("Cylinder subbundle residual: %.3e", residual)
    assert residual <= 100 * h2


def test_seed_degeneracy_keeps_nodes_regular() -> None:
    # the seed e2 is tangent along u1 = 0 and u1 = pi
    grid = Grid(lo=(0.0, 0.0), hi=(np.pi, 1.0), res=(33, 9))
    im = analyze(_immersion(["cos(u1)", "sin(u1)", "u2"], grid))

    tc.assertEqual((1,), im.normal_seeds)
    assert im.regular_mask.all()
    assert not im.frame_mask[0].any()
    assert not im.frame_mask[-1].any()
    assert im.frame_mask[1:-1].all()
    assert not im.check_mask[0].any()
    np.testing.assert_array_equal(im.framed_mask, im.frame_mask)


def test_gauss_equation_on_a_sphere_patch() -> None:
    grid = Grid(lo=(-0.5, 0.0), hi=(0.5, 1.0), res=(33, 33))
    im = analyze(
        _immersion(["cos(u1)*cos(u2)", "cos(u1)*sin(u2)", "sin(u1)"], grid)
    )
    assert gauss_curvature_residual(im) <= 100 * grid.h2_max


def test_analyze_rejects_degenerate_maps() -> None:
    grid = _square(5)
    with pytest.raises(GridError):
        analyze(FieldK(grid, np.zeros(grid.res + (1,))))
    with pytest.raises(NoRegularNodeError):
        analyze(FieldK(grid, np.ones(grid.res + (3,))))
    with pytest.raises(GridError):
        analyze(FieldK(grid, np.zeros(grid.res + (2, 2))))
