"""
Grid-sampled field calculus.

Fields live on uniform tensor-product grids over a box. Values are stored as
numpy arrays of shape ``grid.res + value_shape``; the canonical linear order
is row-major with axis 1 slowest.

Derivatives use ``numpy.gradient`` with ``edge_order=2`` (central differences
inside, second-order one-sided stencils on the two boundary layers), so the
scheme is exact on quadratics. Closed one-forms are integrated along
axis-aligned staircase paths with the trapezoidal rule per segment
(``scipy.integrate.cumulative_trapezoid``).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np
from scipy.integrate import cumulative_trapezoid

from ribaucour.calculus.expr import Expression
from ribaucour.exceptions import ExpressionDomainError, GridError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Grid:
    """Uniform tensor-product lattice over the box ``[lo, hi]``."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]
    res: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "lo", tuple(float(x) for x in self.lo))
        object.__setattr__(self, "hi", tuple(float(x) for x in self.hi))
        object.__setattr__(self, "res", tuple(int(r) for r in self.res))
        if not self.res or not len(self.lo) == len(self.hi) == len(self.res):
            raise GridError("lo, hi and res must be non-empty and of equal length")
        for axis, (a, b, r) in enumerate(zip(self.lo, self.hi, self.res)):
            if not a < b:
                raise GridError(f"Empty interval on axis {axis + 1}: [{a}, {b}]")
            if r < 3:
                raise GridError(f"Axis {axis + 1} needs at least 3 samples, got {r}")

    @property
    def n(self) -> int:
        return len(self.res)

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple((b - a) / (r - 1) for a, b, r in zip(self.lo, self.hi, self.res))

    @property
    def h2_max(self) -> float:
        return max(self.spacing) ** 2

    @property
    def size(self) -> int:
        return math.prod(self.res)

    @property
    def diameter(self) -> float:
        return math.dist(self.lo, self.hi)

    @property
    def center_index(self) -> tuple[int, ...]:
        return tuple((r - 1) // 2 for r in self.res)

    def axis_values(self, axis: int) -> np.ndarray:
        return np.linspace(self.lo[axis], self.hi[axis], self.res[axis])

    def point(self, index: Sequence[int]) -> np.ndarray:
        return np.array(
            [a + i * h for a, i, h in zip(self.lo, index, self.spacing)], dtype=float
        )

    def points(self) -> np.ndarray:
        """Node coordinates, shape ``res + (n,)``."""
        mesh = np.meshgrid(
            *[self.axis_values(a) for a in range(self.n)], indexing="ij"
        )
        return np.stack(mesh, axis=-1)

    def flat_points(self) -> np.ndarray:
        return self.points().reshape(self.size, self.n)

    def interior_mask(self, margin: int = 1) -> np.ndarray:
        """Nodes at least ``margin`` layers away from every face of the box."""
        mask = np.ones(self.res, dtype=bool)
        for axis, r in enumerate(self.res):
            width = min(margin, (r - 1) // 2)
            if width <= 0:
                continue
            index = [slice(None)] * self.n
            index[axis] = slice(0, width)
            mask[tuple(index)] = False
            index[axis] = slice(r - width, r)
            mask[tuple(index)] = False
        return mask

    def product(self, other: "Grid") -> "Grid":
        """Grid over the product box (axes of ``self`` first)."""
        return Grid(
            lo=self.lo + other.lo, hi=self.hi + other.hi, res=self.res + other.res
        )


@dataclass(frozen=True)
class FieldK:
    """Grid-sampled map into ℝ^k (scalar, vector or matrix valued)."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if values.shape[: self.grid.n] != self.grid.res:
            raise GridError(
                f"Field shape {values.shape} does not start with grid shape "
                f"{self.grid.res}"
            )
        if not np.isfinite(values).all():
            bad = np.argwhere(~np.isfinite(values))[0][: self.grid.n]
            raise GridError(f"Field has non-finite entries at node {tuple(bad)}")
        object.__setattr__(self, "values", values)

    @property
    def value_shape(self) -> tuple[int, ...]:
        return self.values.shape[self.grid.n :]

    @property
    def data(self) -> np.ndarray:
        """Flat data in canonical order."""
        return self.values.reshape(-1)

    def at(self, index: Sequence[int]) -> np.ndarray:
        return self.values[tuple(index)]


@dataclass(frozen=True)
class OneFormField:
    """Matrix-valued one-form; component ``a`` is the coefficient of ``du_a``."""

    grid: Grid
    components: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        comps = tuple(np.asarray(c, dtype=float) for c in self.components)
        if len(comps) != self.grid.n:
            raise GridError(
                f"Expected {self.grid.n} components, got {len(comps)}"
            )
        shapes = {c.shape for c in comps}
        if len(shapes) != 1 or comps[0].shape[: self.grid.n] != self.grid.res:
            raise GridError("One-form components must share grid and value shape")
        object.__setattr__(self, "components", comps)

    @property
    def value_shape(self) -> tuple[int, ...]:
        return self.components[0].shape[self.grid.n :]


Sampleable = Union[Expression, Callable[[np.ndarray], np.ndarray]]


def _node_of_point(grid: Grid, point: Sequence[float]) -> tuple[int, ...]:
    return tuple(
        int(round((x - a) / h)) for x, a, h in zip(point, grid.lo, grid.spacing)
    )


def sample(e: Sampleable, grid: Grid) -> FieldK:
    """
    Sample an expression or a vectorized callable on every grid node.

    Callables receive the flat node array of shape ``(size, n)`` and return
    an array of shape ``(size,) + value_shape``.
    """
    points = grid.flat_points()
    try:
        if isinstance(e, Expression):
            values = e.evaluate(points)
        else:
            values = np.asarray(e(points), dtype=float)
    except ExpressionDomainError as exc:
        node = _node_of_point(grid, exc.point) if exc.point is not None else None
        raise ExpressionDomainError(
            f"Evaluation failed at node {node}",
            point=exc.point,
            operation=exc.operation,
            cause=exc,
        ) from exc
    return FieldK(grid, values.reshape(grid.res + values.shape[1:]))


def sample_jets(e: Expression, grid: Grid) -> tuple[FieldK, FieldK, FieldK]:
    """Value, gradient and Hessian fields of an expression from exact jets."""
    points = grid.flat_points()
    try:
        jet = e.jets(points)
    except ExpressionDomainError as exc:
        raise ExpressionDomainError(
            f"Evaluation failed at node {_node_of_point(grid, exc.point)}",
            point=exc.point,
            operation=exc.operation,
            cause=exc,
        ) from exc
    n = grid.n
    return (
        FieldK(grid, jet.value.reshape(grid.res)),
        FieldK(grid, jet.gradient.reshape(grid.res + (n,))),
        FieldK(grid, jet.hessian.reshape(grid.res + (n, n))),
    )


def diff_array(values: np.ndarray, grid: Grid, axis: int) -> np.ndarray:
    """``∂/∂u_axis`` (0-based axis) of an array whose leading axes are the grid."""
    return np.gradient(values, grid.spacing[axis], axis=axis, edge_order=2)


def diff(f: FieldK, axis: int) -> FieldK:
    """Partial derivative along ``axis`` (0-based) on the same grid."""
    if not 0 <= axis < f.grid.n:
        raise GridError(f"Axis {axis} out of range for a {f.grid.n}-dim grid")
    return FieldK(f.grid, diff_array(f.values, f.grid, axis))


def gradient_array(values: np.ndarray, grid: Grid) -> np.ndarray:
    """All partials stacked right after the grid axes: ``res + (n,) + value_shape``."""
    return np.stack([diff_array(values, grid, a) for a in range(grid.n)], axis=grid.n)


def exterior_derivative(f: FieldK) -> OneFormField:
    return OneFormField(
        f.grid, tuple(diff_array(f.values, f.grid, a) for a in range(f.grid.n))
    )


def closedness_residual(rho: OneFormField, margin: int = 1) -> float:
    """Max of ``|∂_a ρ_b − ∂_b ρ_a|`` over interior nodes and axis pairs."""
    grid = rho.grid
    if grid.n < 2:
        return 0.0
    mask = grid.interior_mask(margin)
    worst = 0.0
    for a in range(grid.n):
        for b in range(a + 1, grid.n):
            curl = diff_array(rho.components[b], grid, a) - diff_array(
                rho.components[a], grid, b
            )
            worst = max(worst, float(np.max(np.abs(curl[mask]), initial=0.0)))
    return worst


def staircase_integral(
    components: Sequence[np.ndarray],
    grid: Grid,
    base: Sequence[int],
    axes: Sequence[int],
) -> np.ndarray:
    """
    Integrate ``Σ components[a] du_a`` over the staircase through ``axes``.

    The path from the base node runs along ``axes[0]``, then ``axes[1]``, and
    so on; the segment along ``axes[j]`` is taken with the later axes still at
    their base coordinates. Axes not listed are left untouched (the result
    varies freely along them).
    """
    shape = components[axes[0]].shape
    total = np.zeros(shape)
    for position, axis in enumerate(axes):
        comp = components[axis]
        for later in axes[position + 1 :]:
            comp = np.take(comp, [base[later]], axis=later)
        cum = cumulative_trapezoid(
            comp, dx=grid.spacing[axis], axis=axis, initial=0.0
        )
        cum = cum - np.take(cum, [base[axis]], axis=axis)
        total = total + np.broadcast_to(cum, shape)
    return total


def path_integrate(
    rho: OneFormField,
    base: Sequence[int],
    value0: np.ndarray | float,
    *,
    order: Sequence[int] | None = None,
    tolerance: float | None = None,
) -> FieldK:
    """
    Primitive of ``rho`` with value ``value0`` at the ``base`` node.

    The canonical path is the axis-ascending staircase; pass ``order`` to use
    another axis order. When ``tolerance`` is given and the closedness residual
    exceeds it, a warning is logged and integration proceeds.
    """
    grid = rho.grid
    if order is None:
        order = tuple(range(grid.n))
    if tolerance is not None:
        residual = closedness_residual(rho)
        if residual > tolerance:
            logger.warning(
                "Integrating a one-form that is not closed (residual %.3e > %.3e)",
                residual,
                tolerance,
            )
    value0 = np.broadcast_to(np.asarray(value0, dtype=float), rho.value_shape)
    integral = staircase_integral(rho.components, grid, base, order)
    return FieldK(grid, integral + value0)


def path_independence_residual(
    rho: OneFormField, base: Sequence[int], value0: np.ndarray | float = 0.0
) -> float:
    """Max difference between ascending and descending staircase primitives."""
    n = rho.grid.n
    ascending = path_integrate(rho, base, value0)
    descending = path_integrate(rho, base, value0, order=tuple(reversed(range(n))))
    return float(np.max(np.abs(ascending.values - descending.values)))


def observed_order(err_coarse: float, err_fine: float, ratio: float = 2.0) -> float:
    """Convergence order estimated from errors on two grids."""
    if err_fine <= 0.0 or err_coarse <= 0.0:
        return math.inf
    return math.log(err_coarse / err_fine) / math.log(ratio)
