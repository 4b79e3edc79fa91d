import json
import logging
import unittest
from pathlib import Path

import numpy as np
import pytest

from ribaucour.calculus.expr import parse
from ribaucour.calculus.field import Grid, observed_order
from ribaucour.config import DEFAULT_TOLERANCES, Tolerances
from ribaucour.constructions.lame import (
    LameInitialData,
    LameSystem,
    _sweep,
    assemble,
    frame_generators,
    initial_data_from_json,
    integrate_lame,
    solve_system,
)
from ribaucour.exceptions import (
    BlowUpError,
    ConfigError,
    ConvergenceError,
    OrthogonalityError,
    ValidationError,
)

logger = logging.getLogger(__name__)

tc = unittest.TestCase()
tc.maxDiff = None

SQUARE = Grid(lo=(-0.5, -0.5), hi=(0.5, 0.5), res=(33, 33))
DATA = Path(__file__).resolve().parents[1] / "gallery" / "data"


def _assert_all_passed(report) -> None:
    failed = [(c.name, c.residual, c.tolerance) for c in report.failed_checks()]
    tc.assertEqual([], failed)


def _load(path: Path, n: int) -> LameInitialData:
    with open(path, mode="r", encoding="utf-8") as file:
        return initial_data_from_json(json.load(file), n)


# =============================================================================
# Trivial net
# =============================================================================


def test_trivial_net() -> None:
    initial = _load(DATA / "lame_trivial_net.json", 2)
    system, report = solve_system(initial, SQUARE)
    _assert_all_passed(report)
    np.testing.assert_array_equal(system.beta, 0.0)
    np.testing.assert_array_equal(system.H, 1.0)
    identity = np.broadcast_to(np.eye(2), SQUARE.res + (2, 2))
    np.testing.assert_allclose(system.X, identity)

    result = assemble(system)
    _assert_all_passed(result.report)
    # s = u - u(base node)
    np.testing.assert_allclose(result.system.s[..., :, 0], SQUARE.points(), atol=1e-12)
    norms = np.linalg.norm(result.W.values[..., 0], axis=-1)
    np.testing.assert_allclose(norms[result.working_mask], 1.0, atol=1e-10)


def test_rotating_net() -> None:
    initial = LameInitialData(
        beta={
            (0, 1): parse("0.3*sin(u1)*cos(u2)", 2),
            (1, 0): parse("-0.3*cos(u1)*sin(u2)", 2),
        },
        H=((1.0, 1.0),),
    )
    system, report = solve_system(initial, SQUARE)
    _assert_all_passed(report)
    tc.assertEqual(0, report.metrics["beta.beta_sweeps"])
    result = assemble(system)
    logger.info("Rotating net checks: %s", [c.name for c in result.report])
    _assert_all_passed(result.report)
    tc.assertIn("principal_metric:1", result.report)


# =============================================================================
# Spherical coordinates
# =============================================================================


def _spherical_initial() -> LameInitialData:
    return LameInitialData(
        beta={
            (0, 1): 1.0,
            (0, 2): parse("sin(u2)", 3),
            (1, 2): parse("cos(u2)", 3),
        },
        H=((1.0, parse("u1", 3), parse("u1*sin(u2)", 3)),),
    )


def _spherical_grid(res: int) -> Grid:
    return Grid(lo=(1.0, 0.8, 0.0), hi=(1.5, 1.4, 0.5), res=(res, res, res))


def _spherical_beta_error(beta: np.ndarray, grid: Grid) -> float:
    theta = grid.points()[..., 1]
    return max(
        np.abs(beta[..., 0, 1] - 1.0).max(),
        np.abs(beta[..., 0, 2] - np.sin(theta)).max(),
        np.abs(beta[..., 1, 2] - np.cos(theta)).max(),
        np.abs(beta[..., 1, 0]).max(),
    )


def test_spherical_coordinates_are_recovered() -> None:
    grid = _spherical_grid(17)
    system, report = solve_system(_spherical_initial(), grid)
    _assert_all_passed(report)
    assert report.metrics["beta.beta_sweeps"] > 0

    points = grid.points()
    r, theta = points[..., 0], points[..., 1]
    h2 = grid.h2_max
    beta_error = _spherical_beta_error(system.beta, grid)
    H_expected = np.stack([np.ones_like(r), r, r * np.sin(theta)], axis=-1)
    H_error = np.abs(system.H[..., 0, :] - H_expected).max()
    logger.info("Spherical errors: beta %.3e, H %.3e", beta_error, H_error)
    assert beta_error <= 10 * h2
    assert H_error <= 10 * h2


def test_rotation_coefficients_converge_at_second_order() -> None:
    errors = []
    for res in (9, 17):
        grid = _spherical_grid(res)
        beta, _ = integrate_lame(_spherical_initial(), grid)
        errors.append(_spherical_beta_error(beta.values, grid))
    order = observed_order(errors[0], errors[1])
    logger.info("Rotation coefficient errors %s, order %.2f", errors, order)
    assert errors[1] < errors[0]
    assert 1.5 <= order <= 2.5


def test_blow_up_cap_aborts_the_march() -> None:
    grid = _spherical_grid(9)
    with pytest.raises(BlowUpError) as raised:
        integrate_lame(
            _spherical_initial(), grid, tolerances=Tolerances(blowup_factor=0.5)
        )
    tc.assertEqual(3, len(raised.value.location))
    assert raised.value.value >= 1.0


def test_oscillating_sweep_raises() -> None:
    grid = Grid(lo=(0.0,), hi=(1.0,), res=(5,))
    with pytest.raises(ConvergenceError) as raised:
        _sweep(
            lambda values: -values,
            np.ones(grid.res),
            grid,
            data_scale=1.0,
            tolerances=DEFAULT_TOLERANCES,
            label="Oscillation",
        )
    tc.assertEqual(2.0, raised.value.change)
    assert raised.value.sweeps > 1


def test_integrate_lame_rejects_diagonal_entries() -> None:
    with pytest.raises(ConfigError):
        integrate_lame({(0, 0): 1.0}, SQUARE)


# =============================================================================
# Frames
# =============================================================================


def test_frame_generators_are_antisymmetric() -> None:
    beta = np.array([[0.0, 0.4], [-0.7, 0.0]])
    B = frame_generators(beta)
    np.testing.assert_allclose(B, -np.swapaxes(B, -1, -2))


def test_non_orthogonal_start_frame() -> None:
    initial = LameInitialData(H=((1.0, 1.0),), X0=np.array([[1.0, 0.1], [0.0, 1.0]]))
    with pytest.raises(OrthogonalityError):
        solve_system(initial, SQUARE)


def test_assemble_rejects_non_closed_potentials() -> None:
    grid = SQUARE
    H = np.ones(grid.res + (1, 2))
    H[..., 0, 0] = grid.points()[..., 1]
    system = LameSystem(
        grid=grid,
        beta=np.zeros(grid.res + (2, 2)),
        H=H,
        X=np.broadcast_to(np.eye(2), grid.res + (2, 2)).copy(),
    )
    with pytest.raises(ValidationError):
        assemble(system)


# =============================================================================
# Initial-data documents
# =============================================================================


def test_initial_data_document() -> None:
    initial = initial_data_from_json(
        {"beta": {"1,2": "u1", "2,1": 0.5}, "H": [[1, [1.0] * 5]], "X0": None}, 2
    )
    tc.assertEqual({(0, 1), (1, 0)}, set(initial.beta))
    tc.assertEqual(0.5, initial.beta[(1, 0)])
    tc.assertEqual((5,), initial.H[0][1].shape)
    tc.assertIsNone(initial.X0)


@pytest.mark.parametrize(
    "document, location",
    [
        ([], "initial"),
        ({"beta": {"1,1": 1.0}, "H": [[1, 1]]}, "initial.beta"),
        ({"beta": {"1-2": 1.0}, "H": [[1, 1]]}, "initial.beta"),
        ({"beta": {"1,2": True}, "H": [[1, 1]]}, "initial.beta.1,2"),
        ({"H": []}, "initial.H"),
        ({"H": [[1]]}, "initial.H[0]"),
        ({"H": [[1, "u3"]]}, "initial.H[0][1]"),
        ({"H": [[1, 1]], "X0": [[1, 0]]}, "initial.X0"),
    ],
)
def test_initial_data_errors(document, location) -> None:
    with pytest.raises(ConfigError) as info:
        initial_data_from_json(document, 2)
    tc.assertEqual(location, info.value.location)
