import logging
import unittest

import numpy as np
import pytest

from ribaucour.calculus.expr import parse
from ribaucour.calculus.field import FieldK, Grid
from ribaucour.constructions.construct import flat_inclusion
from ribaucour.constructions.dupin import (
    DUPIN_CHECKS,
    DupinSpec,
    construct_dupin,
    fit_sphere,
    omega_t_drift,
)
from ribaucour.exceptions import ConfigError, DegenerateKernelError
from ribaucour.transforms.ribaucour import apply_transform

logger = logging.getLogger(__name__)

tc = unittest.TestCase()
tc.maxDiff = None

LINE = Grid(lo=(-1.0,), hi=(1.0,), res=(33,))
LEAVES = Grid(lo=(-0.5,), hi=(0.5,), res=(9,))


def _line_in_plane() -> FieldK:
    flat = flat_inclusion(LINE).values
    return FieldK(LINE, np.concatenate([flat, np.zeros(LINE.res + (1,))], axis=-1))


def _spec(**kwargs) -> DupinSpec:
    defaults = dict(
        base=_line_in_plane(),
        potentials=(parse("u1^2/2 + 1", 1), parse("u1", 1)),
        betas=np.array([[0.0, 0.0], [1.0, 0.5]]),
        t_grid=LEAVES,
        beta0_offset=np.array([0.2]),
    )
    defaults.update(kwargs)
    return DupinSpec(**defaults)


def test_fit_sphere_on_a_tilted_circle() -> None:
    angles = np.linspace(0.0, 2.0 * np.pi, 12, endpoint=False)
    frame = np.array([[1.0, 0.0, 0.0], [0.0, 0.6, 0.8]]).T
    centre = np.array([0.3, -1.0, 2.0])
    points = centre + 1.7 * np.stack([np.cos(angles), np.sin(angles)], -1) @ frame.T
    fitted, radius, residual = fit_sphere(points, 1)
    np.testing.assert_allclose(fitted, centre, atol=1e-12)
    tc.assertAlmostEqual(1.7, radius, places=12)
    assert residual <= 1e-12


def test_leaves_are_circles() -> None:
    result = construct_dupin(_spec())
    tc.assertEqual(LINE.res + LEAVES.res + (3,), result.family.values.shape)
    names = [check.name for check in result.report]
    for name in DUPIN_CHECKS:
        tc.assertIn(name, names)
    failed = [(c.name, c.residual, c.tolerance) for c in result.report.failed_checks()]
    tc.assertEqual([], failed)
    low, high = result.report.metrics["leaf_radius_range"]
    logger.info("Leaf radii between %.4f and %.4f", low, high)
    assert 0.0 < low <= high
    assert result.report.masks["leaf"] > 0


def test_family_at_zero_offset_matches_the_base_leaf() -> None:
    result = construct_dupin(_spec())
    # t = 0 is the middle leaf parameter; there Ω_t = Ω and β_0 is unshifted
    tilde, _ = apply_transform(result.data)
    mask = result.data.working_mask
    middle = result.family.values[:, LEAVES.center_index[0], :]
    np.testing.assert_allclose(middle[mask], tilde[mask], atol=1e-12)


def test_omega_t_closed_form_matches_its_integral() -> None:
    data = construct_dupin(_spec()).data
    im, mask = data.base, data.working_mask
    shifted = im.normal_to_ambient(data.beta)
    shifted[..., 2:, 0] += 0.3
    e00 = np.zeros((2, 2))
    e00[0, 0] = 1.0
    omega_t = data.Omega.values + (0.2 * 0.3 + 0.5 * 0.3**2) * e00

    drift, bound = omega_t_drift(im, data, shifted, omega_t, mask)
    logger.info("Omega_t drift %.3e within %.3e", drift, bound)
    assert drift <= bound

    # a closed form that varies along the base cannot match the integral
    u = LINE.points()[..., 0]
    bent = omega_t + (2.0 * bound * u / np.abs(u[mask]).max())[..., None, None] * e00
    drift, bound = omega_t_drift(im, data, shifted, bent, mask)
    assert drift > bound


def test_without_leaves_is_a_plain_transform() -> None:
    result = construct_dupin(
        _spec(
            potentials=(parse("u1^2/2 + 1", 1),),
            betas=np.array([[0.0], [1.0]]),
            t_grid=None,
            beta0_offset=None,
        )
    )
    tc.assertEqual(LINE.res + (2,), result.family.values.shape)
    tc.assertIn("transform.isometry", result.report)


def test_vanishing_gamma_is_rejected() -> None:
    # phi_0 = 0 with orthogonal constant F_0, F_1 leaves gamma identically zero
    spec = _spec(
        potentials=(parse("0", 1), parse("u1", 1)),
        betas=np.array([[0.0, 0.0], [1.0, 0.0]]),
        beta0_offset=np.array([0.0]),
    )
    with pytest.raises(DegenerateKernelError) as raised:
        construct_dupin(spec)
    tc.assertEqual(1, len(raised.value.point))


def test_spec_validation() -> None:
    with pytest.raises(ConfigError):
        _spec(potentials=(parse("u1", 1),))
    with pytest.raises(ConfigError):
        _spec(betas=np.zeros((3, 2)))
    with pytest.raises(ConfigError):
        _spec(beta0_offset=np.array([0.1, 0.2]))
