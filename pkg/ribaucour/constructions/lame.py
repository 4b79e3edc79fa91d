"""
Orthogonal nets from the Lamé system.

Pipeline:
    1. ``integrate_lame``: rotation coefficients ``β_ij`` (``i ≠ j``) from
       Goursat data. Each ``β_ij`` is prescribed on the coordinate 2-plane of
       ``(u_i, u_j)`` through the base node and carried off that plane by
       ``∂_k β_ij = β_ik β_kj``.
    2. ``solve_lame_linear``: Lamé coefficients ``H^α`` from
       ``∂_i H_j = β_ij H_i``; ``H_j`` is prescribed on the ``u_j``-axis line.
    3. ``solve_frame``: the orthogonal frame ``X`` from ``∂_a X = X B_a``
       with the antisymmetric ``B_a`` built from the column ``β_·a``.
    4. ``assemble``: potentials ``ds^α_i = Σ_k X_ik H^α_k du_k``,
       ``𝒢 = (s¹, …, sᵐ)``, ``Ω`` from ``dΩ = 𝒢ᵗd𝒢`` and the spherical frame
       ``W``, whose columns carry ``u`` as principal coordinates.

Marching:
    Every unknown is written as its data plus staircase integrals over the
    axes its data does not cover (ascending order, later axes at the base
    node). The resulting fixed-point problem is solved by sweeping until the
    update stalls, which converges to the implicit trapezoid solution. A sweep
    whose values exceed ``blowup_factor`` times the data scale aborts with
    :class:`~ribaucour.exceptions.BlowUpError`; one still moving after
    ``_MAX_SWEEPS`` sweeps raises :class:`~ribaucour.exceptions.ConvergenceError`.

Known Limitations:
    - The diagonal identity of the rotation coefficients is a constraint on
      the data; it is checked and reported, never enforced.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Mapping, Sequence, Union

import numpy as np

from ribaucour.calculus.expr import Expression, parse
from ribaucour.calculus.field import (
    FieldK,
    Grid,
    OneFormField,
    closedness_residual,
    diff_array,
    path_integrate,
    sample,
    staircase_integral,
)
from ribaucour.calculus.linalg import (
    condition_numbers,
    masked_max,
    safe_inv,
    transpose,
)
from ribaucour.config import DEFAULT_TOLERANCES, Tolerances
from ribaucour.constructions.construct import (
    check_spherical,
    integrate_spherical_omega,
    spherical_frame,
    validate_skew,
)
from ribaucour.exceptions import (
    BlowUpError,
    ConfigError,
    ConvergenceError,
    OrthogonalityError,
    RibaucourError,
    SingularOmegaError,
    ValidationError,
)
from ribaucour.geometry.frame import ImmersionData
from ribaucour.reports import Report

logger = logging.getLogger(__name__)

ROTATION_CHECKS = ("lame_cross", "lame_diagonal")
COEFFICIENT_CHECKS = ("lame_coefficients",)
FRAME_CHECKS = ("frame_derivative", "frame_orthogonality")
ASSEMBLE_CHECKS = (
    "potential_closedness",
    "codazzi_commutator",
    "principal_metric",
    "principal_alpha",
)

Profile = Union[Expression, np.ndarray, float]

_MAX_SWEEPS = 200
_SWEEP_TOL = 1e-13


@dataclass(frozen=True)
class LameInitialData:
    """
    Goursat data of the pipeline (0-based axes).

    ``beta`` maps an ordered pair ``(i, j)`` to the values of ``β_ij`` on the
    ``(u_i, u_j)`` plane through the base node; missing pairs are zero.
    ``H[α][j]`` is the profile of ``H^α_j`` along the ``u_j``-axis line.
    Array profiles list their axes in ascending order.
    """

    beta: Mapping[tuple[int, int], Profile] = field(default_factory=dict)
    H: tuple[tuple[Profile, ...], ...] = ()
    X0: np.ndarray | None = None


@dataclass(frozen=True)
class LameSystem:
    """
    Sampled solution of the pipeline.

    ``beta`` is ``res + (n, n)`` with a zero diagonal, ``H`` is
    ``res + (m, n)`` (row ``α`` holds ``H^α``), ``X`` is ``res + (n, n)``
    with the frame vectors as columns and ``s`` is ``res + (n, m)`` with
    ``s^α`` as column ``α`` (``None`` until assembled).
    """

    grid: Grid
    beta: np.ndarray
    H: np.ndarray
    X: np.ndarray
    s: np.ndarray | None = None
    base_node: tuple[int, ...] | None = None

    @property
    def n(self) -> int:
        return self.grid.n

    @property
    def m(self) -> int:
        return self.H.shape[-2]


@dataclass
class LameResult:
    system: LameSystem
    W: FieldK
    omega: FieldK
    immersions: tuple[ImmersionData | None, ...]
    working_mask: np.ndarray
    report: Report


# =============================================================================
# Data on planes and lines
# =============================================================================


def _restrict(
    values: np.ndarray, grid: Grid, keep: Sequence[int], base: Sequence[int]
) -> np.ndarray:
    """Freeze every grid axis outside ``keep`` at its base coordinate."""
    out = values
    for axis in range(grid.n):
        if axis not in keep:
            out = np.take(out, [base[axis]], axis=axis)
    return np.broadcast_to(out, values.shape).copy()


def profile_on_grid(
    profile: Profile,
    grid: Grid,
    keep: Sequence[int],
    base: Sequence[int],
    location: str = "profile",
) -> np.ndarray:
    """
    Broadcast a profile over the grid, varying only along ``keep``.

    Expressions are evaluated on the grid and frozen outside ``keep``; arrays
    must have one axis per kept grid axis in ascending order.
    """
    keep = tuple(sorted(keep))
    if isinstance(profile, Expression):
        return _restrict(sample(profile, grid).values, grid, keep, base)
    values = np.asarray(profile, dtype=float)
    if values.ndim == 0:
        return np.full(grid.res, float(values))
    expected = tuple(grid.res[a] for a in keep)
    if values.shape != expected:
        raise ConfigError(
            f"Profile has shape {values.shape}, expected {expected}",
            location=location,
        )
    shape = [1] * grid.n
    for axis in keep:
        shape[axis] = grid.res[axis]
    return np.broadcast_to(values.reshape(shape), grid.res).copy()


def _base(grid: Grid, base_node: Sequence[int] | None) -> tuple[int, ...]:
    if base_node is None:
        return grid.center_index
    node = tuple(int(i) for i in base_node)
    if len(node) != grid.n or any(not 0 <= i < r for i, r in zip(node, grid.res)):
        raise ConfigError(f"Base node {node} outside the grid", location="base_node")
    return node


def _sweep(
    step: Callable[[np.ndarray], np.ndarray],
    start: np.ndarray,
    grid: Grid,
    *,
    data_scale: float,
    tolerances: Tolerances,
    label: str,
) -> tuple[np.ndarray, int]:
    """Iterate ``step`` from ``start`` until the update stalls."""
    cap = tolerances.blowup_factor * max(1.0, data_scale)
    current = start
    change = np.inf
    for sweep in range(1, _MAX_SWEEPS + 1):
        updated = step(current)
        magnitude = np.nan_to_num(np.abs(updated), nan=np.inf)
        per_node = magnitude.reshape(grid.res + (-1,)).max(axis=-1)
        peak = float(per_node.max())
        if peak > cap:
            node = np.unravel_index(int(np.argmax(per_node)), grid.res)
            raise BlowUpError(
                f"{label} exceeded the cap {cap:.3e}",
                location=tuple(int(i) for i in node),
                value=peak,
            )
        change = float(np.abs(updated - current).max())
        current = updated
        if change <= _SWEEP_TOL * max(1.0, peak):
            logger.debug("%s settled after %d sweeps", label, sweep)
            return current, sweep
    raise ConvergenceError(
        f"{label} did not settle", sweeps=_MAX_SWEEPS, change=change
    )


# =============================================================================
# Rotation coefficients
# =============================================================================


def lame_residuals(
    beta: np.ndarray, grid: Grid, mask: np.ndarray
) -> tuple[float, float]:
    """Max residuals of the cross equations and of the diagonal identity."""
    n = grid.n
    partials = [diff_array(beta, grid, k) for k in range(n)]
    cross = 0.0
    diagonal = 0.0
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            for k in range(n):
                if k in (i, j):
                    continue
                residual = partials[k][..., i, j] - beta[..., i, k] * beta[..., k, j]
                cross = max(cross, masked_max(np.abs(residual), mask))
            if i < j:
                total = partials[i][..., i, j] + partials[j][..., j, i]
                for k in range(n):
                    if k not in (i, j):
                        total = total + beta[..., k, i] * beta[..., k, j]
                diagonal = max(diagonal, masked_max(np.abs(total), mask))
    return cross, diagonal


def integrate_lame(
    initial: Mapping[tuple[int, int], Profile] | LameInitialData,
    grid: Grid,
    *,
    base_node: Sequence[int] | None = None,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> tuple[FieldK, Report]:
    """
    Rotation coefficients from their values on the coordinate 2-planes.

    Returns the ``res + (n, n)`` field of ``β`` (zero diagonal) and a report
    with the cross-equation and diagonal-identity residuals.
    """
    if isinstance(initial, LameInitialData):
        initial = initial.beta
    n = grid.n
    base = _base(grid, base_node)
    data = np.zeros(grid.res + (n, n))
    for (i, j), profile in initial.items():
        if i == j or not (0 <= i < n and 0 <= j < n):
            raise ConfigError(
                f"Invalid rotation coefficient index ({i + 1}, {j + 1})",
                location=f"beta.{i + 1},{j + 1}",
            )
        data[..., i, j] = profile_on_grid(
            profile, grid, (i, j), base, location=f"beta.{i + 1},{j + 1}"
        )
    data_scale = float(np.abs(data).max(initial=0.0))
    pairs = [(i, j) for i in range(n) for j in range(n) if i != j]
    zero = np.zeros(grid.res)

    def step(beta: np.ndarray) -> np.ndarray:
        out = data.copy()
        for i, j in pairs:
            rest = [k for k in range(n) if k not in (i, j)]
            components = [
                beta[..., i, k] * beta[..., k, j] if k in rest else zero
                for k in range(n)
            ]
            out[..., i, j] += staircase_integral(components, grid, base, rest)
        return out

    if n > 2:
        beta, sweeps = _sweep(
            step,
            data,
            grid,
            data_scale=data_scale,
            tolerances=tolerances,
            label="Rotation coefficients",
        )
    else:
        beta, sweeps = data, 0
    logger.debug("Integrated rotation coefficients on %s nodes", grid.size)

    h2 = grid.h2_max
    scale = max(data_scale, float(np.abs(beta).max(initial=0.0)))
    mask = grid.interior_mask(tolerances.boundary_margin)
    cross, diagonal = lame_residuals(beta, grid, mask)
    report = Report()
    report.add_check("lame_cross", cross, tolerances.resolve("tol_lame", h2, scale**2))
    report.add_check(
        "lame_diagonal", diagonal, tolerances.resolve("tol_lame", h2, scale**2)
    )
    report.add_mask("interior", mask)
    report.metrics["beta_sweeps"] = sweeps
    report.metrics["beta_max"] = scale
    return FieldK(grid, beta), report


# =============================================================================
# Lamé coefficients and frame
# =============================================================================


def solve_lame_linear(
    beta: FieldK,
    H_initial: Sequence[Sequence[Profile]],
    *,
    base_node: Sequence[int] | None = None,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> tuple[FieldK, Report]:
    """
    Lamé coefficients ``H^α`` with ``∂_i H_j = β_ij H_i``.

    ``H_initial[α][j]`` is the profile of ``H^α_j`` on the ``u_j``-axis line
    through the base node. Returns a ``res + (m, n)`` field.
    """
    grid = beta.grid
    n = grid.n
    base = _base(grid, base_node)
    m = len(H_initial)
    data = np.zeros(grid.res + (m, n))
    for alpha, profiles in enumerate(H_initial):
        if len(profiles) != n:
            raise ConfigError(
                f"Expected {n} Lamé coefficient profiles, got {len(profiles)}",
                location=f"H[{alpha}]",
            )
        for j, profile in enumerate(profiles):
            data[..., alpha, j] = profile_on_grid(
                profile, grid, (j,), base, location=f"H[{alpha}][{j}]"
            )
    b = beta.values
    data_scale = float(np.abs(data).max(initial=0.0))
    zero = np.zeros(grid.res + (m,))

    def step(H: np.ndarray) -> np.ndarray:
        out = data.copy()
        for j in range(n):
            rest = [i for i in range(n) if i != j]
            components = [
                b[..., i, j, None] * H[..., :, i] if i != j else zero
                for i in range(n)
            ]
            out[..., :, j] += staircase_integral(components, grid, base, rest)
        return out

    if n > 1 and m > 0:
        H, sweeps = _sweep(
            step,
            data,
            grid,
            data_scale=data_scale,
            tolerances=tolerances,
            label="Lamé coefficients",
        )
    else:
        H, sweeps = data, 0

    mask = grid.interior_mask(tolerances.boundary_margin)
    worst = 0.0
    for i in range(n):
        dH = diff_array(H, grid, i)
        for j in range(n):
            if i != j:
                residual = dH[..., :, j] - b[..., i, j, None] * H[..., :, i]
                worst = max(worst, masked_max(np.abs(residual), mask))
    scale = max(1.0, float(np.abs(b).max(initial=0.0))) * max(
        1.0, float(np.abs(H).max(initial=0.0))
    )
    report = Report()
    report.add_check(
        "lame_coefficients", worst, tolerances.resolve("tol_lame", grid.h2_max, scale)
    )
    report.metrics["H_sweeps"] = sweeps
    return FieldK(grid, H), report


def frame_generators(beta: np.ndarray) -> np.ndarray:
    """``B_a`` with ``∂_a X = X B_a``, shape ``res + (n, n, n)`` (``a`` first)."""
    n = beta.shape[-1]
    B = np.zeros(beta.shape[:-2] + (n, n, n))
    for a in range(n):
        B[..., a, a, :] = beta[..., :, a]
        B[..., a, :, a] = -beta[..., :, a]
    return B


def solve_frame(
    beta: FieldK,
    X0: np.ndarray,
    *,
    base_node: Sequence[int] | None = None,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> tuple[FieldK, Report]:
    """
    Frame ``X`` with ``∂_j X_i = β_ij X_j`` and ``∂_i X_i = −Σ_k β_ki X_k``.

    ``X0`` must be orthogonal; the frame stays orthogonal to discretization
    order and a drift beyond ``tol_iso`` aborts.
    """
    grid = beta.grid
    n = grid.n
    base = _base(grid, base_node)
    X0 = np.asarray(X0, dtype=float)
    if X0.shape != (n, n):
        raise ConfigError(f"X0 must be {n}x{n}, got {X0.shape}", location="X0")
    h2 = grid.h2_max
    start_drift = float(np.abs(X0.T @ X0 - np.eye(n)).max())
    if start_drift > tolerances.resolve("tol_alg", h2):
        raise OrthogonalityError(
            "Initial frame X0 is not orthogonal", drift=start_drift
        )

    B = frame_generators(beta.values)
    start = np.broadcast_to(X0, grid.res + (n, n)).copy()

    def step(X: np.ndarray) -> np.ndarray:
        components = [X @ B[..., a, :, :] for a in range(n)]
        return start + staircase_integral(components, grid, base, tuple(range(n)))

    X, sweeps = _sweep(
        step,
        start,
        grid,
        data_scale=1.0,
        tolerances=tolerances,
        label="Frame",
    )

    scale = max(1.0, float(np.abs(beta.values).max(initial=0.0)))
    drift = float(np.abs(transpose(X) @ X - np.eye(n)).max())
    iso_tol = tolerances.resolve("tol_iso", h2, scale)
    if drift > iso_tol:
        raise OrthogonalityError(
            f"Frame drifted beyond {iso_tol:.3e}; refine the grid", drift=drift
        )
    mask = grid.interior_mask(tolerances.boundary_margin)
    worst = 0.0
    for a in range(n):
        residual = diff_array(X, grid, a) - X @ B[..., a, :, :]
        worst = max(worst, masked_max(np.abs(residual), mask))
    report = Report()
    report.add_check(
        "frame_derivative", worst, tolerances.resolve("tol_lame", h2, scale)
    )
    report.add_check("frame_orthogonality", drift, iso_tol)
    report.metrics["X_sweeps"] = sweeps
    return FieldK(grid, X), report


def solve_system(
    initial: LameInitialData,
    grid: Grid,
    *,
    base_node: Sequence[int] | None = None,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> tuple[LameSystem, Report]:
    """Rotation coefficients, Lamé coefficients and frame in one pass."""
    base = _base(grid, base_node)
    X0 = np.eye(grid.n) if initial.X0 is None else initial.X0
    beta, beta_report = integrate_lame(
        initial.beta, grid, base_node=base, tolerances=tolerances
    )
    H, H_report = solve_lame_linear(
        beta, initial.H, base_node=base, tolerances=tolerances
    )
    X, X_report = solve_frame(beta, X0, base_node=base, tolerances=tolerances)
    report = Report()
    report.merge(beta_report, "beta.")
    report.merge(H_report, "H.")
    report.merge(X_report, "X.")
    system = LameSystem(
        grid=grid, beta=beta.values, H=H.values, X=X.values, base_node=base
    )
    return system, report


# =============================================================================
# Codazzi tensors
# =============================================================================


def codazzi_tensors(system: LameSystem) -> np.ndarray:
    """``Φ^α = X diag(H^α) X⁻¹``, shape ``res + (m, n, n)``."""
    X = system.X[..., None, :, :]
    D = system.H[..., :, None, :] * np.eye(system.n)
    return X @ D @ np.linalg.inv(X)


def hessian_commutator(system: LameSystem) -> float:
    """
    Max of ``X (D_α D_β − D_β D_α) X⁻¹`` over nodes and pairs.

    The ``D_α`` are diagonal, so this vanishes identically.
    """
    X = system.X
    X_inv = np.linalg.inv(X)
    worst = 0.0
    for a in range(system.m):
        for b in range(a + 1, system.m):
            da = system.H[..., a, :]
            db = system.H[..., b, :]
            bracket = (da * db - db * da)[..., None, :] * np.eye(system.n)
            worst = max(worst, float(np.abs(X @ bracket @ X_inv).max(initial=0.0)))
    return worst


# =============================================================================
# Assembly
# =============================================================================


def potential_forms(system: LameSystem) -> OneFormField:
    """Components ``∂_a 𝒢 = X_a H_a^α``, each ``res + (n, m)``."""
    X = system.X
    H = system.H
    return OneFormField(
        system.grid,
        tuple(
            X[..., :, a, None] * H[..., None, :, a] for a in range(system.n)
        ),
    )


def _off_diagonal(values: np.ndarray) -> np.ndarray:
    n = values.shape[-1]
    return np.abs(values * (1.0 - np.eye(n)))


def assemble(
    system: LameSystem,
    *,
    omega0_skew: np.ndarray | None = None,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> LameResult:
    """
    Potentials, ``Ω`` and the spherical frame ``W`` of a solved system.

    The potential one-forms must be closed within ``tol_closed``; otherwise
    a :class:`~ribaucour.exceptions.ValidationError` names the residual.
    """
    grid = system.grid
    h2 = grid.h2_max
    base = _base(grid, system.base_node)
    m = system.m
    omega0_skew = validate_skew(omega0_skew, m)

    rho = potential_forms(system)
    form_scale = max(1.0, float(np.abs(system.H).max(initial=0.0))) * max(
        1.0, float(np.abs(system.beta).max(initial=0.0))
    )
    closed_tol = tolerances.resolve("tol_closed", h2, form_scale)
    closed = closedness_residual(rho, tolerances.boundary_margin)
    if closed > closed_tol:
        raise ValidationError(
            "Potential one-forms are not closed",
            check="potential_closedness",
            residual=closed,
            tolerance=closed_tol,
        )
    G = path_integrate(rho, base, np.zeros((system.n, m))).values
    dG = np.stack(rho.components, axis=grid.n)
    system = replace(system, s=G, base_node=base)
    logger.debug("Assembled potentials for m=%d on %s nodes", m, grid.res)

    omega, omega_report = integrate_spherical_omega(
        grid, G, dG, base_node=base, omega0_skew=omega0_skew, tolerances=tolerances
    )
    condition = condition_numbers(omega.values)
    invertible = condition <= tolerances.kappa_max
    if not invertible.any():
        raise SingularOmegaError(location="Omega")
    mask = invertible & grid.interior_mask(tolerances.boundary_margin)
    W = spherical_frame(G, safe_inv(omega.values, invertible))

    report = Report(command="ferapontov")
    report.add_check("potential_closedness", closed, closed_tol)
    report.merge(omega_report, "omega.")
    phis = codazzi_tensors(system)
    commutator = 0.0
    for a in range(m):
        for b in range(a + 1, m):
            bracket = phis[..., a, :, :] @ phis[..., b, :, :] - (
                phis[..., b, :, :] @ phis[..., a, :, :]
            )
            commutator = max(commutator, float(np.abs(bracket).max(initial=0.0)))
    report.add_check(
        "codazzi_commutator",
        commutator,
        tolerances.resolve("tol_alg", h2, form_scale**2),
    )
    report.metrics["hessian_commutator"] = hessian_commutator(system)

    scale = max(1.0, float(np.abs(G).max(initial=0.0)))
    immersions = check_spherical(
        W, grid, mask, report, scale=scale, tolerances=tolerances
    )
    for j, column_im in enumerate(immersions):
        if column_im is None:
            continue
        column_mask = column_im.check_mask & mask
        local = max(1.0, float(np.abs(column_im.metric[column_mask]).max(initial=0.0)))
        report.add_check(
            f"principal_metric:{j + 1}",
            masked_max(_off_diagonal(column_im.metric).max(axis=(-2, -1)), column_mask),
            tolerances.resolve("tol_diag", h2, local),
        )
        report.add_check(
            f"principal_alpha:{j + 1}",
            masked_max(
                _off_diagonal(column_im.alpha).max(axis=(-3, -2, -1)), column_mask
            ),
            tolerances.resolve("tol_diag", h2, local * scale),
        )
    report.add_mask("working", mask)
    report.metrics["omega_max_condition"] = masked_max(condition, mask)
    return LameResult(
        system=system,
        W=FieldK(grid, W),
        omega=omega,
        immersions=tuple(immersions),
        working_mask=mask,
        report=report,
    )


# =============================================================================
# Initial-data documents
# =============================================================================


def _profile_from_json(value: Any, n: int, location: str) -> Profile:
    if isinstance(value, bool):
        raise ConfigError("Expected a number, expression or array", location=location)
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        try:
            return parse(value, n)
        except RibaucourError as exc:
            raise ConfigError(str(exc), location=location, cause=exc) from exc
    if isinstance(value, list):
        try:
            return np.asarray(value, dtype=float)
        except (TypeError, ValueError) as exc:
            raise ConfigError(
                "Malformed sampled profile", location=location, cause=exc
            ) from exc
    raise ConfigError("Expected a number, expression or array", location=location)


def _pair_key(key: str, n: int, location: str) -> tuple[int, int]:
    parts = key.split(",")
    try:
        i, j = (int(p) - 1 for p in parts)
    except ValueError as exc:
        raise ConfigError(
            f"Pair keys look like '1,2', got {key!r}", location=location, cause=exc
        ) from exc
    if i == j or not (0 <= i < n and 0 <= j < n):
        raise ConfigError(f"Invalid pair {key!r} for n={n}", location=location)
    return i, j


def initial_data_from_json(
    document: Any, n: int, location: str = "initial"
) -> LameInitialData:
    """
    Parse an initial-data document.

    Layout (1-based indices)::

        {"beta": {"1,2": <profile>, ...},
         "H": [[<H^1_1>, ..., <H^1_n>], ...],
         "X0": [[...], ...]}

    A profile is a number, an expression in ``u1..un`` or a nested list
    sampled on the plane (``beta``) or line (``H``) through the base node.
    """
    if not isinstance(document, dict):
        raise ConfigError("Initial data must be a JSON object", location=location)
    beta_block = document.get("beta", {})
    if not isinstance(beta_block, dict):
        raise ConfigError("Expected an object", location=f"{location}.beta")
    beta = {
        _pair_key(key, n, f"{location}.beta"): _profile_from_json(
            value, n, f"{location}.beta.{key}"
        )
        for key, value in beta_block.items()
    }
    H_block = document.get("H", [])
    if not isinstance(H_block, list) or not H_block:
        raise ConfigError(
            "Expected a non-empty list of Lamé coefficient rows",
            location=f"{location}.H",
        )
    H = []
    for alpha, row in enumerate(H_block):
        if not isinstance(row, list) or len(row) != n:
            raise ConfigError(
                f"Expected {n} profiles", location=f"{location}.H[{alpha}]"
            )
        H.append(
            tuple(
                _profile_from_json(value, n, f"{location}.H[{alpha}][{j}]")
                for j, value in enumerate(row)
            )
        )
    X0 = None
    if document.get("X0") is not None:
        try:
            X0 = np.asarray(document["X0"], dtype=float)
        except (TypeError, ValueError) as exc:
            raise ConfigError(
                "Malformed X0", location=f"{location}.X0", cause=exc
            ) from exc
        if X0.shape != (n, n):
            raise ConfigError(f"X0 must be {n}x{n}", location=f"{location}.X0")
    return LameInitialData(beta=beta, H=tuple(H), X0=X0)
