"""
Runner for ``verify``: expression-level checks of a potential family.

- commuting Hessians on a sample (exact jets),
- exact jets against finite differences on the run grid, with the observed
  convergence order from one refinement,
- closedness and path independence of ``𝒢ᵗd𝒢`` for ``𝒢 = (∇φ_1 … ∇φ_m)``.
"""

from __future__ import annotations

import logging
import math

import numpy as np

from ribaucour.calculus.expr import Expression, check_commuting_hessians
from ribaucour.calculus.field import Grid, gradient_array, observed_order
from ribaucour.calculus.linalg import masked_max
from ribaucour.config import RunConfig, Tolerances
from ribaucour.constructions.construct import (
    integrate_spherical_omega,
    potential_jets,
)
from ribaucour.exceptions import ConfigError
from ribaucour.reports import Report
from ribaucour.runners.common import (
    RunOutcome,
    grid_of,
    parse_potentials,
    parse_sample,
)

logger = logging.getLogger(__name__)

VERIFY_CHECKS = ("hessian_commutator", "jet_gradient", "jet_hessian")


def _refined(grid: Grid) -> Grid:
    res = tuple(2 * (r - 1) + 1 for r in grid.res)
    return Grid(lo=grid.lo, hi=grid.hi, res=res)


def jet_errors(
    potentials: tuple[Expression, ...], grid: Grid, margin: int
) -> tuple[float, float]:
    """Max finite-difference error of gradients and Hessians on interior nodes."""
    phi, gradients, hessians = potential_jets(potentials, grid)
    mask = grid.interior_mask(margin)
    # both gradient layouts are (a, i)
    gradient_error = masked_max(np.abs(gradient_array(phi, grid) - gradients), mask)
    # FD of exact gradients is (b, c, i); exact Hessians are (i, c, a)
    fd_hessians = np.moveaxis(gradient_array(gradients, grid), grid.n, -1)
    hessian_error = masked_max(
        np.abs(fd_hessians - np.moveaxis(hessians, -3, -2)), mask
    )
    return gradient_error, hessian_error


def derivative_scale(
    potentials: tuple[Expression, ...], grid: Grid, margin: int
) -> float:
    """Largest Hessian entry and FD estimates of the next two derivative orders."""
    _, _, hessians = potential_jets(potentials, grid)
    mask = grid.interior_mask(margin)
    third = gradient_array(hessians, grid)
    fourth = gradient_array(third, grid)
    return max(
        1.0,
        float(np.abs(hessians).max()),
        masked_max(np.abs(third), mask),
        masked_max(np.abs(fourth), mask),
    )


def _order_metric(coarse: float, fine: float) -> float | None:
    order = observed_order(coarse, fine)
    return order if math.isfinite(order) else None


def verify_potentials(
    potentials: tuple[Expression, ...],
    grid: Grid,
    *,
    sample: np.ndarray | None = None,
    base_node: tuple[int, ...] | None = None,
    tolerances: Tolerances,
) -> Report:
    h2 = grid.h2_max
    report = Report(command="verify")
    points = grid.flat_points() if sample is None else sample
    commutator = check_commuting_hessians(potentials, points, tolerances=tolerances)
    detail = None
    if commutator.pair is not None:
        i, j = commutator.pair
        detail = f"pair ({i + 1},{j + 1}) at {list(commutator.point)}"
    report.add_check(
        "hessian_commutator", commutator.max_norm, commutator.tolerance, detail
    )

    margin = tolerances.boundary_margin
    gradient_error, hessian_error = jet_errors(potentials, grid, margin)
    scale = derivative_scale(potentials, grid, margin)
    tolerance = tolerances.resolve("tol_frame", h2, scale)
    report.add_check("jet_gradient", gradient_error, tolerance)
    report.add_check("jet_hessian", hessian_error, tolerance)
    fine_gradient, fine_hessian = jet_errors(potentials, _refined(grid), margin)
    orders = report.metrics
    orders["jet_gradient_order"] = _order_metric(gradient_error, fine_gradient)
    orders["jet_hessian_order"] = _order_metric(hessian_error, fine_hessian)

    _, gradients, hessians = potential_jets(potentials, grid)
    dG = np.moveaxis(hessians, (-3, -2, -1), (-1, -2, -3))
    _, omega_report = integrate_spherical_omega(
        grid,
        gradients,
        dG,
        base_node=grid.center_index if base_node is None else base_node,
        tolerances=tolerances,
    )
    report.merge(omega_report, "omega.")
    report.add_mask("interior", grid.interior_mask(margin))
    return report


def run_verify(config: RunConfig) -> RunOutcome:
    grid = grid_of(config)
    if "potentials_file" in config.payload:
        raise ConfigError(
            "verify needs expression potentials", location="payload.potentials_file"
        )
    potentials = parse_potentials(config, grid)
    report = verify_potentials(
        potentials,
        grid,
        sample=parse_sample(config.payload, grid.n),
        base_node=config.base_node,
        tolerances=config.tolerances,
    )
    return RunOutcome(report=report)
