import logging
import math
import unittest

import numpy as np
import pytest

from ribaucour.calculus.expr import parse
from ribaucour.calculus.field import (
    FieldK,
    Grid,
    OneFormField,
    closedness_residual,
    diff,
    exterior_derivative,
    gradient_array,
    observed_order,
    path_independence_residual,
    path_integrate,
    sample,
    sample_jets,
    staircase_integral,
)
from ribaucour.exceptions import GridError

logger = logging.getLogger(__name__)

tc = unittest.TestCase()
tc.maxDiff = None


def _square(res: int, lo: float = -1.0, hi: float = 1.0) -> Grid:
    return Grid(lo=(lo, lo), hi=(hi, hi), res=(res, res))


# =============================================================================
# Grid
# =============================================================================


def test_grid_properties() -> None:
    grid = Grid(lo=(0.0, -1.0), hi=(1.0, 1.0), res=(5, 9))
    tc.assertEqual(2, grid.n)
    tc.assertEqual((0.25, 0.25), grid.spacing)
    tc.assertEqual(45, grid.size)
    tc.assertEqual((2, 4), grid.center_index)
    tc.assertEqual((45, 2), grid.flat_points().shape)
    np.testing.assert_allclose(grid.point((4, 0)), [1.0, -1.0])
    tc.assertAlmostEqual(math.sqrt(5.0), grid.diameter)


def test_grid_rejects_bad_boxes() -> None:
    with pytest.raises(GridError):
        Grid(lo=(0.0,), hi=(0.0,), res=(5,))
    with pytest.raises(GridError):
        Grid(lo=(0.0,), hi=(1.0,), res=(2,))
    with pytest.raises(GridError):
        Grid(lo=(0.0, 0.0), hi=(1.0,), res=(5,))


def test_interior_mask() -> None:
    grid = _square(5)
    tc.assertEqual(9, int(grid.interior_mask(1).sum()))
    tc.assertEqual(1, int(grid.interior_mask(2).sum()))


def test_product_grid() -> None:
    grid = Grid(lo=(0.0,), hi=(1.0,), res=(5,)).product(
        Grid(lo=(-1.0,), hi=(1.0,), res=(3,))
    )
    tc.assertEqual((5, 3), grid.res)
    tc.assertEqual((0.0, -1.0), grid.lo)


def test_field_rejects_non_finite_values() -> None:
    grid = _square(3)
    values = np.zeros((3, 3))
    values[1, 2] = np.nan
    with pytest.raises(GridError):
        FieldK(grid, values)
    with pytest.raises(GridError):
        FieldK(grid, np.zeros((3, 4)))


# =============================================================================
# Sampling and derivatives
# =============================================================================


def test_sample_expression_and_callable() -> None:
    grid = _square(5)
    by_expression = sample(parse("u1 + 2*u2", 2), grid)
    by_callable = sample(lambda p: p[:, 0] + 2 * p[:, 1], grid)
    np.testing.assert_allclose(by_expression.values, by_callable.values)
    tc.assertAlmostEqual(-3.0, float(by_expression.at((0, 0))))


def test_finite_differences_exact_on_quadratics() -> None:
    grid = _square(9)
    f = sample(parse("u1^2 + u1*u2 - 3*u2^2", 2), grid)
    points = grid.points()
    np.testing.assert_allclose(
        diff(f, 0).values, 2 * points[..., 0] + points[..., 1], atol=1e-12
    )
    np.testing.assert_allclose(
        diff(f, 1).values, points[..., 0] - 6 * points[..., 1], atol=1e-12
    )
    with pytest.raises(GridError):
        diff(f, 2)


def test_gradient_array_layout() -> None:
    grid = _square(7)
    values = np.stack([grid.points()[..., 0], grid.points()[..., 1] ** 2], axis=-1)
    gradients = gradient_array(values, grid)
    tc.assertEqual((7, 7, 2, 2), gradients.shape)
    np.testing.assert_allclose(gradients[..., 0, 0], 1.0, atol=1e-12)
    np.testing.assert_allclose(gradients[..., 0, 1], 0.0, atol=1e-12)


def test_jets_match_finite_differences_at_second_order() -> None:
    e = parse("sin(2*u1)*cos(u2)", 2)
    errors = []
    for res in (17, 33):
        grid = _square(res)
        value, gradient, _ = sample_jets(e, grid)
        fd = exterior_derivative(value)
        errors.append(
            max(
                float(np.abs(fd.components[a] - gradient.values[..., a]).max())
                for a in range(2)
            )
        )
    order = observed_order(errors[0], errors[1])
    logger.info("Observed gradient order: %.3f", order)
    assert 1.8 < order < 2.3


def test_observed_order() -> None:
    tc.assertAlmostEqual(2.0, observed_order(4e-4, 1e-4))
    tc.assertAlmostEqual(1.0, observed_order(9.0, 3.0, ratio=3.0))
    assert math.isinf(observed_order(1e-3, 0.0))


# =============================================================================
# Path integration
# =============================================================================


def test_path_integrate_recovers_primitive() -> None:
    grid = _square(33)
    e = parse("sin(u1)*cos(u2) + u1*u2", 2)
    value, gradient, _ = sample_jets(e, grid)
    rho = OneFormField(grid, (gradient.values[..., 0], gradient.values[..., 1]))
    base = grid.center_index

    primitive = path_integrate(rho, base, float(value.at(base)))

    error = float(np.abs(primitive.values - value.values).max())
    assert error <= grid.h2_max
    tc.assertEqual(float(value.at(base)), float(primitive.at(base)))


def test_closed_form_is_path_independent() -> None:
    grid = _square(33)
    _, gradient, _ = sample_jets(parse("exp(u1)*u2^2", 2), grid)
    rho = OneFormField(grid, (gradient.values[..., 0], gradient.values[..., 1]))
    assert closedness_residual(rho) <= 100 * grid.h2_max
    assert path_independence_residual(rho, grid.center_index) <= 10 * grid.h2_max


def test_rotation_form_is_not_closed() -> None:
    grid = _square(17)
    points = grid.points()
    rho = OneFormField(grid, (-points[..., 1], points[..., 0]))
    tc.assertAlmostEqual(2.0, closedness_residual(rho), places=10)
    # the two staircases from the centre enclose a square of area 1 at a corner
    tc.assertAlmostEqual(
        2.0, path_independence_residual(rho, grid.center_index), places=10
    )


def test_staircase_integral_with_matrix_values() -> None:
    grid = _square(9)
    ones = np.ones(grid.res + (2, 2))
    integral = staircase_integral((ones, 2 * ones), grid, grid.center_index, (0, 1))
    points = grid.points()
    expected = points[..., 0] + 2 * points[..., 1]
    np.testing.assert_allclose(integral[..., 1, 0], expected, atol=1e-12)


def test_one_form_validates_components() -> None:
    grid = _square(5)
    with pytest.raises(GridError):
        OneFormField(grid, (np.zeros((5, 5)),))
    with pytest.raises(GridError):
        OneFormField(grid, (np.zeros((5, 5)), np.zeros((5, 5, 2))))
