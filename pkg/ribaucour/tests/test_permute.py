import logging
import unittest

import numpy as np
import pytest

from ribaucour.calculus.expr import parse
from ribaucour.calculus.field import FieldK, Grid
from ribaucour.constructions.construct import flat_inclusion, potential_jets
from ribaucour.exceptions import GenericityError, GridError, IndependenceError
from ribaucour.geometry.frame import analyze
from ribaucour.transforms.permute import (
    COMPOSE_CHECKS,
    SPLIT_CHECKS,
    bianchi_cube,
    compose_sequential,
    scalar_chain,
    split_transform,
)
from ribaucour.transforms.ribaucour import build_data

logger = logging.getLogger(__name__)

tc = unittest.TestCase()
tc.maxDiff = None

SQUARE = Grid(lo=(-1.0, -1.0), hi=(1.0, 1.0), res=(17, 17))
SMALL = Grid(lo=(-0.5, -0.5), hi=(0.5, 0.5), res=(33, 33))


def _plane(grid: Grid):
    flat = flat_inclusion(grid).values
    return analyze(FieldK(grid, np.concatenate([flat, np.zeros(grid.res + (1,))], -1)))


def _data(base, sources: list[str], beta: list[float]):
    potentials = tuple(parse(source, 2) for source in sources)
    phi, gradients, _ = potential_jets(potentials, base.grid)
    return build_data(base, FieldK(base.grid, phi), [beta], dphi=gradients)


def _scalars(base, sources: list[str], betas: list[float]):
    return [_data(base, [s], [b]) for s, b in zip(sources, betas)]


def _assert_all_passed(report) -> None:
    failed = [(c.name, c.residual, c.tolerance) for c in report.failed_checks()]
    tc.assertEqual([], failed)


# =============================================================================
# Splits and compositions
# =============================================================================


@pytest.mark.parametrize("reverse", [False, True])
def test_split_in_both_orders(reverse) -> None:
    data = _data(
        _plane(SMALL), ["u1^2/2 + 0.3", "u2^2/2 + 0.1*u1 - 0.2"], [1.0, 0.5]
    )
    split = split_transform(data, 1, reverse=reverse)
    tc.assertEqual(list(SPLIT_CHECKS), [check.name for check in split.report])
    tc.assertEqual((1,) if reverse else (0,), split.first_block)
    logger.info("Split distance (reverse=%s): %.3e", reverse, split.distance)
    _assert_all_passed(split.report)


def test_explicit_block_and_trivial_split() -> None:
    data = _data(_plane(SQUARE), ["u1 + 0.3", "u2 - 0.2"], [1.0, 0.7])
    explicit = split_transform(data, [1])
    tc.assertEqual(((1,), (0,)), (explicit.first_block, explicit.second_block))
    assert explicit.distance <= 1e-9

    trivial = split_transform(data, 0)
    tc.assertIsNone(trivial.first)
    tc.assertEqual("trivial split", trivial.report.check("composition_distance").detail)
    with pytest.raises(GridError):
        split_transform(data, 3)
    with pytest.raises(GridError):
        split_transform(data, [0, 0])


def test_sequential_reassembly() -> None:
    data = _data(
        _plane(SMALL), ["u1^2/2 + 0.3", "u2^2/2 + 0.1*u1 - 0.2"], [1.0, 0.5]
    )
    split = split_transform(data, 1)
    composed = compose_sequential(split.first, split.bar)
    names = [check.name for check in composed.report]
    for name in COMPOSE_CHECKS:
        tc.assertIn(name, names)
    _assert_all_passed(composed.report)


def test_scalar_chain_matches_direct_transform() -> None:
    data = _data(
        _plane(SMALL), ["u1^2/2 + 0.3", "u2^2/2 + 0.1*u1 - 0.2"], [1.0, 0.5]
    )
    chain = scalar_chain(data)
    tc.assertEqual(2, len(chain.steps))
    _assert_all_passed(chain.report)


# =============================================================================
# Bianchi cubes
# =============================================================================


def test_reflection_quadrilateral() -> None:
    base = _plane(SQUARE)
    cube = bianchi_cube(base, _scalars(base, ["u1 + 0.3", "u2 - 0.2"], [1.0, 0.7]))
    tc.assertEqual([1, 2, 1], cube.report.metrics["family_sizes"])
    tc.assertEqual(4, len(cube.maps))
    tc.assertEqual(1, len(cube.quadrilaterals))
    assert cube.quadrilaterals[0].closure <= 1e-9
    _assert_all_passed(cube.report)


def test_reflection_cube() -> None:
    base = _plane(SQUARE)
    scalars = _scalars(
        base, ["u1 + 0.3", "u2 - 0.2", "0.5*u1 + 0.5*u2 + 1"], [1.0, 0.7, 1.2]
    )
    cube = bianchi_cube(base, scalars, pair_skews={(0, 2): 0.05})
    tc.assertEqual([1, 3, 3, 1], cube.report.metrics["family_sizes"])
    tc.assertEqual(8, len(cube.maps))
    tc.assertEqual(6, len(cube.quadrilaterals))
    tc.assertEqual(12, len(cube.incidence()))
    tc.assertEqual(7, len(cube.report.metrics["minors"]))
    logger.info("Worst closure: %.3e", max(q.closure for q in cube.quadrilaterals))
    _assert_all_passed(cube.report)
    omega = cube.data.Omega.values[cube.data.base_node]
    tc.assertAlmostEqual(0.1, omega[0, 2] - omega[2, 0], places=12)


def test_cube_rejects_a_vanishing_principal_minor() -> None:
    # Omega_11 = |F_1|^2 / 2 is 5e-9 at the centre node
    base = _plane(SQUARE)
    scalars = _scalars(base, ["(u1^2 + u2^2)/2", "u1 + 0.3"], [1e-4, 1.0])
    with pytest.raises(GenericityError) as raised:
        bianchi_cube(base, scalars)
    tc.assertEqual((0,), raised.value.minor)
    assert raised.value.value < 1e-6


def test_cube_rejects_dependent_or_vectorial_data() -> None:
    base = _plane(SQUARE)
    dependent = _scalars(base, ["u1 + 0.3", "2*u1 + 0.6"], [1.0, 0.7])
    with pytest.raises(IndependenceError):
        bianchi_cube(base, dependent)
    with pytest.raises(GridError):
        bianchi_cube(base, [_data(base, ["u1", "u2"], [1.0, 0.5])])
