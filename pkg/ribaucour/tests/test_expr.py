import logging
import math
import unittest

import numpy as np
import pytest

from ribaucour.calculus.expr import check_commuting_hessians, eval_jet2, parse
from ribaucour.config import Tolerances
from ribaucour.exceptions import (
    ExpressionDomainError,
    ExpressionSyntaxError,
    UnknownIdentifierError,
    VariableIndexError,
)

logger = logging.getLogger(__name__)

tc = unittest.TestCase()
tc.maxDiff = None


# =============================================================================
# Parsing
# =============================================================================


def test_parse_product_jets() -> None:
    e = parse("u1*u2", n_vars=2)
    jet = eval_jet2(e, (3.0, 4.0))

    tc.assertAlmostEqual(12.0, float(jet.value))
    np.testing.assert_allclose(jet.gradient, [4.0, 3.0])
    np.testing.assert_allclose(jet.hessian, [[0.0, 1.0], [1.0, 0.0]])


def test_parse_respects_precedence() -> None:
    e = parse("1 + 2*u1^2 - u2/4", n_vars=2)
    tc.assertAlmostEqual(1 + 2 * 9 - 0.5, e((3.0, 2.0)))


def test_unary_minus_binds_tighter_than_power() -> None:
    e = parse("-u1^2", n_vars=1)
    tc.assertAlmostEqual(4.0, e((2.0,)))


def test_pi_and_real_exponents() -> None:
    tc.assertAlmostEqual(math.pi, parse("pi", 1)((0.3,)))
    tc.assertAlmostEqual(0.5, parse("u1^-1", 1)((2.0,)))
    tc.assertAlmostEqual(3.0, parse("u1^0.5", 1)((9.0,)))

    jet = eval_jet2(parse("u1^0.5", 1), (4.0,))
    np.testing.assert_allclose(jet.gradient, [0.25])
    np.testing.assert_allclose(jet.hessian, [[-1.0 / 32.0]])


def test_function_jets_match_closed_forms() -> None:
    e = parse("sin(u1)*exp(u2) + log(u1) + sqrt(u2)", n_vars=2)
    x, y = 0.7, 1.3
    jet = eval_jet2(e, (x, y))

    gradient = [
        math.cos(x) * math.exp(y) + 1 / x,
        math.sin(x) * math.exp(y) + 0.5 / math.sqrt(y),
    ]
    hessian = [
        [-math.sin(x) * math.exp(y) - 1 / x**2, math.cos(x) * math.exp(y)],
        [math.cos(x) * math.exp(y), math.sin(x) * math.exp(y) - 0.25 * y**-1.5],
    ]
    np.testing.assert_allclose(jet.gradient, gradient, rtol=1e-12)
    np.testing.assert_allclose(jet.hessian, hessian, rtol=1e-12)


def test_hessian_is_exactly_symmetric() -> None:
    e = parse("sin(u1*u2) + u1^3*u2^2", n_vars=2)
    points = np.random.default_rng(0).uniform(-1, 1, size=(50, 2))
    hessian = e.jets(points).hessian
    assert np.array_equal(hessian, np.swapaxes(hessian, -1, -2))


# =============================================================================
# Errors
# =============================================================================


def test_syntax_error_reports_offset() -> None:
    with pytest.raises(ExpressionSyntaxError) as excinfo:
        parse("u1 + * u2", n_vars=2)
    tc.assertEqual(6, excinfo.value.offset)


def test_unbalanced_parenthesis() -> None:
    with pytest.raises(ExpressionSyntaxError) as excinfo:
        parse("(u1 + 1", n_vars=1)
    tc.assertEqual(8, excinfo.value.offset)


def test_unknown_identifier() -> None:
    with pytest.raises(UnknownIdentifierError) as excinfo:
        parse("tan(u1)", n_vars=1)
    tc.assertEqual("tan", excinfo.value.name)
    tc.assertEqual(1, excinfo.value.offset)


def test_variable_index_out_of_range() -> None:
    with pytest.raises(VariableIndexError) as excinfo:
        parse("u1 + u3", n_vars=2)
    tc.assertEqual(3, excinfo.value.index)
    tc.assertEqual(2, excinfo.value.n_vars)


def test_domain_error_names_point_and_operation() -> None:
    e = parse("log(u1)", n_vars=1)
    with pytest.raises(ExpressionDomainError) as excinfo:
        e.jets(np.array([[1.0], [-2.0]]))
    tc.assertEqual((-2.0,), excinfo.value.point)
    tc.assertEqual("log", excinfo.value.operation)


def test_division_by_zero() -> None:
    with pytest.raises(ExpressionDomainError):
        parse("1/u1", n_vars=1)((0.0,))


# =============================================================================
# Commuting Hessians
# =============================================================================


def test_diagonal_quadratics_commute() -> None:
    es = [parse("u1^2/2", 2), parse("u2^2/2 + u1", 2)]
    sample = np.random.default_rng(1).uniform(-1, 1, size=(20, 2))
    report = check_commuting_hessians(es, sample)
    assert report.passed
    tc.assertEqual(0.0, report.max_norm)


def test_radial_potentials_commute() -> None:
    es = [parse("(u1^2 + u2^2)/2", 2), parse("(u1^2 + u2^2)^2/4", 2)]
    sample = np.random.default_rng(2).uniform(-1, 1, size=(30, 2))
    assert check_commuting_hessians(es, sample).passed


def test_non_commuting_pair_is_named() -> None:
    es = [parse("u1^2/2", 2), parse("u1*u2", 2), parse("u2^2", 2)]
    report = check_commuting_hessians(es, [(0.1, 0.2), (0.5, -0.3)])
    assert not report.passed
    tc.assertEqual((1, 2), report.pair)
    tc.assertGreater(report.max_norm, report.tolerance)


def test_commutator_tolerance_scales() -> None:
    es = [parse("u1^2/2", 2), parse("u1*u2", 2)]
    loose = Tolerances(commute=10.0)
    assert check_commuting_hessians(es, [(0.0, 0.0)], tolerances=loose).passed
