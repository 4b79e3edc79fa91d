"""
Explicit constructions of submanifolds with flat normal bundle.

Background:
    All constructions go through the generic transform of
    :mod:`ribaucour.transforms.ribaucour`. A base immersion ``f: U → ℝ^{N₀}``
    is padded to ``(f; 0)`` in ``ℝ^{N₀+m}`` and the data ``(φ_i, β_i)`` is
    extended by ``β(e_i) = β_i + e_{N₀+i}``, so that ``ℱ = (𝒢; I_m)`` and
    ``ℱᵗℱ = 𝒢ᵗ𝒢 + I``. The transformed map is
    ``(f − 𝒢Ω⁻¹φ; −Ω⁻¹φ)`` and carries the parallel flat normal subbundle
    ``P(ℝᵐ)``. With ``f`` the identity of ``ℝⁿ`` and ``β_i = 0`` this is the
    flat normal bundle construction; the spherical frame
    ``W = (𝒢Ω⁻¹; I − Ω⁻¹)`` has orthonormal columns.

Sign convention:
    The immersion returned by :func:`construct_flat` uses the transform's
    ``−Ω⁻¹φ`` in the last block. The map ``(id + 𝒢Ω⁻¹φ; Ω⁻¹φ)`` is returned
    next to it as ``statement_map``; both last blocks have the same norm,
    which is reported as ``statement_sign``. ``W`` equals the last ``m``
    columns of ``P`` up to the reflection ``diag(−I_n, I_m)``.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from ribaucour.calculus.expr import Expression, check_commuting_hessians
from ribaucour.calculus.field import (
    FieldK,
    Grid,
    OneFormField,
    closedness_residual,
    gradient_array,
    path_independence_residual,
    path_integrate,
    sample_jets,
)
from ribaucour.calculus.linalg import (
    condition_numbers,
    eye_like,
    frobenius,
    masked_max,
    matvec,
    safe_inv,
    transpose,
)
from ribaucour.config import DEFAULT_TOLERANCES, Tolerances
from ribaucour.exceptions import (
    CommutatorError,
    ConfigError,
    GridError,
    NoRegularNodeError,
)
from ribaucour.geometry.frame import (
    ImmersionData,
    analyze,
    curvature_scale,
    flat_normal_bundle_residual,
    parallel_subbundle_residual,
)
from ribaucour.reports import Report
from ribaucour.transforms.ribaucour import (
    RibaucourData,
    TransformResult,
    build_data,
    resolve_base_node,
    transform,
)

logger = logging.getLogger(__name__)

Potential = Union[Expression, FieldK]

FLAT_CHECKS: tuple[str, ...] = (
    "hessian_commutator",
    "flat_normal_bundle",
    "statement_sign",
)
SUBBUNDLE_CHECKS: tuple[str, ...] = (
    "beta_normality",
    "subbundle_parallel",
    "converse_omega",
    "subbundle_frame_identity",
)
SPHERICAL_CHECKS: tuple[str, ...] = (
    "w_orthonormality",
    "column_unit_norm",
    "column_flat_normal_bundle",
    "w_projector_columns",
)


def validate_skew(skew: np.ndarray | None, m: int) -> np.ndarray | None:
    if skew is None:
        return None
    skew = np.asarray(skew, dtype=float)
    if skew.shape != (m, m):
        raise ConfigError(f"omega0_skew must be {m}x{m}", location="omega0_skew")
    if not np.allclose(skew, -skew.T, rtol=0.0, atol=1e-14):
        raise ConfigError("omega0_skew must be antisymmetric", location="omega0_skew")
    return skew


@dataclass(frozen=True)
class FlatBundleSpec:
    """Potentials ``φ_1..φ_m`` on a box; Hessians must commute pairwise."""

    grid: Grid
    potentials: tuple[Potential, ...]
    omega0_skew: np.ndarray | None = None
    sample: np.ndarray | None = None
    base_node: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "potentials", tuple(self.potentials))
        if not self.potentials:
            raise ConfigError(
                "At least one potential is required", location="potentials"
            )
        object.__setattr__(
            self, "omega0_skew", validate_skew(self.omega0_skew, len(self.potentials))
        )

    @property
    def n(self) -> int:
        return self.grid.n

    @property
    def m(self) -> int:
        return len(self.potentials)


@dataclass(frozen=True)
class SubbundleSpec:
    """
    Base immersion into ``ℝ^{n+p}`` with pairs ``(φ_i, β_i)``.

    ``betas`` are ambient normal vectors of the base, shape ``(n+p, m)`` or
    ``res + (n+p, m)``.
    """

    base: FieldK
    potentials: tuple[Potential, ...]
    betas: np.ndarray
    omega0_skew: np.ndarray | None = None
    base_node: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "potentials", tuple(self.potentials))
        if not self.potentials:
            raise ConfigError(
                "At least one potential is required", location="potentials"
            )
        m = len(self.potentials)
        ambient = self.base.value_shape[0]
        betas = np.asarray(self.betas, dtype=float)
        if betas.shape == (ambient, m):
            betas = np.broadcast_to(betas, self.base.grid.res + (ambient, m)).copy()
        elif betas.shape != self.base.grid.res + (ambient, m):
            raise ConfigError(
                f"betas must have shape ({ambient}, {m}) per node, got {betas.shape}",
                location="betas",
            )
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "omega0_skew", validate_skew(self.omega0_skew, m))

    @property
    def grid(self) -> Grid:
        return self.base.grid

    @property
    def m(self) -> int:
        return len(self.potentials)


@dataclass(frozen=True)
class FlatResult:
    immersion: ImmersionData
    statement_map: FieldK
    data: RibaucourData
    result: TransformResult
    report: Report


@dataclass(frozen=True)
class SubbundleResult:
    immersion: ImmersionData
    data: RibaucourData
    result: TransformResult
    subbundle: np.ndarray
    report: Report


@dataclass(frozen=True)
class SphericalResult:
    W: FieldK
    immersions: tuple[ImmersionData | None, ...]
    flat: FlatResult
    report: Report = field(default_factory=Report)


def potential_jets(
    potentials: Sequence[Potential], grid: Grid
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Values ``res + (m,)``, gradients ``res + (n, m)`` and Hessians
    ``res + (m, n, n)`` of the potentials.

    Expressions use exact jets; sampled fields use finite differences.
    """
    values, gradients, hessians = [], [], []
    for potential in potentials:
        if isinstance(potential, Expression):
            if potential.n_vars != grid.n:
                raise GridError(
                    f"Potential has {potential.n_vars} variables, grid has {grid.n}"
                )
            value, gradient, hessian = (f.values for f in sample_jets(potential, grid))
        else:
            if potential.grid != grid or potential.value_shape != ():
                raise GridError("Sampled potentials must be scalar fields on the grid")
            value = potential.values
            gradient = np.moveaxis(gradient_array(value, grid), grid.n, -1)
            second = gradient_array(gradient, grid)
            hessian = 0.5 * (second + transpose(second))
        values.append(value)
        gradients.append(gradient)
        hessians.append(hessian)
    return (
        np.stack(values, axis=-1),
        np.stack(gradients, axis=-1),
        np.stack(hessians, axis=-3),
    )


def check_potentials(
    spec: FlatBundleSpec,
    hessians: np.ndarray,
    *,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> tuple[float, float]:
    """
    Commuting-Hessian test; exact on expressions, finite differences otherwise.

    Returns:
        The worst commutator norm and the tolerance it passed.

    Raises:
        CommutatorError: A pair of Hessians does not commute.
    """
    grid = spec.grid
    if all(isinstance(p, Expression) for p in spec.potentials):
        sample = spec.sample if spec.sample is not None else grid.flat_points()
        outcome = check_commuting_hessians(
            spec.potentials, sample, tolerances=tolerances
        )
        if not outcome.passed:
            raise CommutatorError(
                "Hessians of the potentials do not commute",
                pair=outcome.pair,
                residual=outcome.max_norm,
                tolerance=outcome.tolerance,
            )
        return outcome.max_norm, outcome.tolerance

    mask = grid.interior_mask(tolerances.boundary_margin)
    scale = max(1.0, masked_max(np.abs(hessians).max(axis=(-3, -2, -1)), mask) ** 2)
    tolerance = tolerances.resolve("tol_phi_commute", grid.h2_max, scale)
    worst = 0.0
    for i, j in itertools.combinations(range(spec.m), 2):
        a, b = hessians[..., i, :, :], hessians[..., j, :, :]
        residual = masked_max(frobenius(a @ b - b @ a), mask)
        if residual > tolerance:
            raise CommutatorError(
                "Hessians of the potentials do not commute",
                pair=(i, j),
                residual=residual,
                tolerance=tolerance,
            )
        worst = max(worst, residual)
    return worst, tolerance


def flat_inclusion(grid: Grid) -> FieldK:
    """The identity map of the parameter box, as a field into ``ℝⁿ``."""
    return FieldK(grid, grid.points())


def _pad(values: np.ndarray, extra: int) -> np.ndarray:
    zeros = np.zeros(values.shape[:-1] + (extra,))
    return np.concatenate([values, zeros], axis=-1)


def pad_immersion(
    base: FieldK,
    extra: int,
    *,
    base_node: Sequence[int] | None = None,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> tuple[ImmersionData, ImmersionData]:
    """
    Analyze ``base`` and ``(base; 0)`` with ``extra`` zero coordinates.

    The padded normal frame is the base frame followed by the new axes.
    """
    ambient = base.value_shape[0]
    base_im = analyze(base, tolerances=tolerances, reference=base_node)
    padded = FieldK(base.grid, _pad(base.values, extra))
    seeds = base_im.normal_seeds + tuple(range(ambient, ambient + extra))
    padded_im = analyze(padded, tolerances=tolerances, reference=base_node, seeds=seeds)
    return base_im, padded_im


def check_beta_normality(
    base_im: ImmersionData,
    betas: np.ndarray,
    report: Report,
    *,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> None:
    """Record the tangential part of ambient ``β`` vectors (should vanish)."""
    tangential = transpose(base_im.jac) @ betas
    beta_scale = max(1.0, float(np.abs(betas).max()))
    report.add_check(
        "beta_normality",
        masked_max(np.abs(tangential).max(axis=(-2, -1)), base_im.check_mask),
        tolerances.resolve("tol_frame", base_im.grid.h2_max, beta_scale),
    )


def skewed_omega0(
    im: ImmersionData,
    dphi: np.ndarray,
    beta_ambient: np.ndarray,
    skew: np.ndarray | None,
    base_node: Sequence[int] | None,
) -> np.ndarray | None:
    """``ℱᵗℱ/2 + skew`` at the base node, or ``None`` for the default start."""
    if skew is None:
        return None
    node = resolve_base_node(im, base_node)
    F_node = im.jac[node] @ im.metric_inv[node] @ dphi[node] + beta_ambient[node]
    return 0.5 * F_node.T @ F_node + skew


def padded_data(
    base: FieldK,
    phi: np.ndarray,
    betas: np.ndarray,
    *,
    dphi: np.ndarray | None = None,
    dF: np.ndarray | None = None,
    omega0_skew: np.ndarray | None = None,
    base_node: Sequence[int] | None = None,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> tuple[ImmersionData, RibaucourData, Report]:
    """
    Pad ``base`` by ``m`` zero coordinates and build the data with
    ``β(e_i) = β_i + e_{N₀+i}``.

    Returns the padded immersion, the data, and a report with the normality
    check of the ``β_i``.
    """
    grid = base.grid
    m = phi.shape[-1]
    base_im, padded_im = pad_immersion(
        base, m, base_node=base_node, tolerances=tolerances
    )
    report = Report()
    check_beta_normality(base_im, betas, report, tolerances=tolerances)

    unit = np.broadcast_to(np.eye(m), grid.res + (m, m))
    beta_ambient = np.concatenate([betas, unit], axis=-2)
    if dphi is None:
        dphi = gradient_array(phi, grid)
    data = build_data(
        padded_im,
        FieldK(grid, phi),
        padded_im.ambient_to_normal(beta_ambient),
        skewed_omega0(padded_im, dphi, beta_ambient, omega0_skew, base_node),
        tolerances=tolerances,
        base_node=base_node,
        dphi=dphi,
        dF=dF,
    )
    return padded_im, data, report


def construct_flat(
    spec: FlatBundleSpec,
    *,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> FlatResult:
    """
    Submanifold of ``ℝ^{n+m}`` with flat normal bundle from commuting potentials.

    Raises:
        CommutatorError: Two potentials have non-commuting Hessians.
        SingularOmegaError: Ω is singular on every checked node.
    """
    grid = spec.grid
    n, m = spec.n, spec.m
    logger.info("Flat normal bundle construction: n=%d, m=%d", n, m)
    phi, gradients, hessians = potential_jets(spec.potentials, grid)
    commutator, commutator_tol = check_potentials(
        spec, hessians, tolerances=tolerances
    )

    # ∂_a ℱ = (∂_a 𝒢; 0) with (∂_a 𝒢)[c, i] = Hess φ_i[c, a]
    dF = np.zeros(grid.res + (n, n + m, m))
    dF[..., :n, :] = np.moveaxis(hessians, (-3, -2, -1), (-1, -2, -3))

    _, data, _ = padded_data(
        flat_inclusion(grid),
        phi,
        np.zeros(grid.res + (n, m)),
        dphi=gradients,
        dF=dF,
        omega0_skew=spec.omega0_skew,
        base_node=spec.base_node,
        tolerances=tolerances,
    )
    result = transform(data, tolerances=tolerances)
    tilde = result.tilde_im
    mask = result.working_mask
    h2 = grid.h2_max

    report = Report(command="construct-flat")
    report.add_check("hessian_commutator", commutator, commutator_tol)
    report.merge(data.report, "data.")
    report.merge(result.report, "transform.")
    report.add_check(
        "flat_normal_bundle",
        flat_normal_bundle_residual(tilde),
        tolerances.resolve("tol_flat", h2, curvature_scale(tilde)),
    )

    x = result.omega_inv_phi
    statement = data.base.f.values + matvec(data.F, x)
    last_tilde = np.linalg.norm(result.tilde_f.values[..., n:], axis=-1)
    last_statement = np.linalg.norm(statement[..., n:], axis=-1)
    report.add_check(
        "statement_sign",
        masked_max(np.abs(last_tilde - last_statement), mask),
        tolerances.resolve("tol_alg", h2, data.scale),
    )
    report.notes.append(
        "immersion = (id - G Omega^-1 phi; -Omega^-1 phi); "
        "statement_map = (id + G Omega^-1 phi; Omega^-1 phi)"
    )
    report.add_mask("working", mask)
    report.metrics["omega_at_base"] = data.Omega.at(data.base_node).tolist()
    return FlatResult(
        immersion=tilde,
        statement_map=FieldK(grid, statement),
        data=data,
        result=result,
        report=report,
    )


def converse_frame_residuals(
    result: TransformResult, ambient: int
) -> tuple[float, float, float]:
    """
    Apply the converse recipe to the transformed map with ``ξ_j = P e_{N₀+j}``.

    With ``ℱ_c = ξ − e``, ``Ω_c = I − (⟨ξ_j, e_i⟩)_{ij}``,
    ``β_c = ξ − e^⊥`` and ``P_c = I − ℱ_cΩ_c⁻¹ℱ_cᵗ``, returns the max of
    ``|P_cξ − e|``, ``|Ω_c − Ω⁻¹|`` and ``|eᵗP_cβ_cΩ_c⁻ᵗ − I|`` on the
    working mask.
    """
    data, tilde = result.data, result.tilde_im
    mask = result.working_mask
    m = data.m
    total = ambient + m
    e = np.zeros((total, m))
    e[ambient:, :] = np.eye(m)
    xi = result.P[..., :, ambient:]
    F_c = xi - e
    omega_c = np.eye(m) - e.T @ xi
    omega_c_inv = safe_inv(omega_c, mask)
    P_c = np.eye(total) - F_c @ omega_c_inv @ transpose(F_c)

    projection = masked_max(np.abs(P_c @ xi - e).max(axis=(-2, -1)), mask)
    inverse = masked_max(
        np.abs(omega_c - data.omega_inv()).max(axis=(-2, -1)), mask
    )
    beta_c = xi - tilde.normal_projector() @ e
    beta_tilde = P_c @ beta_c @ transpose(omega_c_inv)
    frame = masked_max(
        np.abs(e.T @ beta_tilde - np.eye(m)).max(axis=(-2, -1)), mask
    )
    return projection, inverse, frame


def construct_subbundle(
    spec: SubbundleSpec,
    *,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> SubbundleResult:
    """
    Submanifold of ``ℝ^{n+p+m}`` carrying a parallel flat normal subbundle.

    Raises:
        CodazziResidualError: Some ``(φ_i, β_i)`` violates the compatibility
            condition with the base.
        CommutatorError: The tensors ``Hess φ_i − A_{β_i}`` do not commute.
        SingularOmegaError: Ω is singular on every checked node.
    """
    grid = spec.grid
    ambient = spec.base.value_shape[0]
    m = spec.m
    logger.info(
        "Parallel subbundle construction: n=%d, N=%d, m=%d", grid.n, ambient, m
    )
    phi, gradients, _ = potential_jets(spec.potentials, grid)
    padded_im, data, report = padded_data(
        spec.base,
        phi,
        spec.betas,
        dphi=gradients,
        omega0_skew=spec.omega0_skew,
        base_node=spec.base_node,
        tolerances=tolerances,
    )
    commutator = data.report.check("phi_commutator")
    if not commutator.passed:
        worst_pair, worst = (0, 1), -1.0
        for i, j in itertools.combinations(range(m), 2):
            a, b = data.Phi[..., i, :, :], data.Phi[..., j, :, :]
            value = masked_max(frobenius(a @ b - b @ a), data.base.check_mask)
            if value > worst:
                worst_pair, worst = (i, j), value
        raise CommutatorError(
            "Codazzi tensors of the pairs do not commute",
            pair=worst_pair,
            residual=commutator.residual,
            tolerance=commutator.tolerance,
        )

    result = transform(data, tolerances=tolerances)
    tilde = result.tilde_im
    h2 = grid.h2_max
    report.command = "construct-subbundle"
    report.merge(data.report, "data.")
    report.merge(result.report, "transform.")

    subbundle = result.P[..., :, ambient:]
    report.add_check(
        "subbundle_parallel",
        parallel_subbundle_residual(tilde, sections=subbundle),
        tolerances.resolve("tol_flat", h2, data.scale * curvature_scale(tilde)),
    )
    projection, inverse, frame = converse_frame_residuals(result, ambient)
    report.add_check(
        "converse_omega",
        inverse,
        tolerances.resolve("tol_alg", h2, data.scale**2),
    )
    report.add_check(
        "subbundle_frame_identity",
        max(projection, frame),
        tolerances.resolve("tol_rel", h2, data.scale * curvature_scale(tilde)),
    )
    report.add_mask("working", result.working_mask)
    return SubbundleResult(
        immersion=tilde,
        data=data,
        result=result,
        subbundle=subbundle,
        report=report,
    )


def spherical_frame(G: np.ndarray, omega_inv: np.ndarray) -> np.ndarray:
    """``W = (𝒢Ω⁻¹; I − Ω⁻¹)``, shape ``res + (n+m, m)``."""
    return np.concatenate([G @ omega_inv, eye_like(omega_inv) - omega_inv], axis=-2)


def integrate_spherical_omega(
    grid: Grid,
    G: np.ndarray,
    dG: np.ndarray,
    *,
    base_node: Sequence[int],
    omega0_skew: np.ndarray | None = None,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> tuple[FieldK, Report]:
    """
    Integrate ``dΩ = 𝒢ᵗd𝒢`` with ``Ω + Ωᵗ = 𝒢ᵗ𝒢 + I`` at ``base_node``.

    ``dG[..., a, :, :]`` is ``∂_a 𝒢``. The report carries closedness,
    path independence and the symmetric-part residual.
    """
    h2 = grid.h2_max
    node = tuple(base_node)
    m = G.shape[-1]
    mask = grid.interior_mask(tolerances.boundary_margin)
    rho = OneFormField(
        grid, tuple(transpose(G) @ dG[..., a, :, :] for a in range(grid.n))
    )
    gram = transpose(G) @ G + np.eye(m)
    scale = max(1.0, float(np.abs(gram).max())) * max(1.0, float(np.abs(dG).max()))
    closed_tol = tolerances.resolve("tol_closed", h2, scale)
    start = 0.5 * gram[node]
    if omega0_skew is not None:
        start = start + omega0_skew
    report = Report()
    report.add_check("omega_closedness", closedness_residual(rho), closed_tol)
    omega = path_integrate(rho, node, start, tolerance=closed_tol)
    report.add_check(
        "path_independence",
        path_independence_residual(rho, node, start),
        grid.diameter * closed_tol + tolerances.resolve("tol_path", h2, scale),
    )
    report.add_check(
        "omega_symmetric_part",
        masked_max(
            np.abs(omega.values + transpose(omega.values) - gram).max(axis=(-2, -1)),
            mask,
        ),
        tolerances.resolve("tol_sym", h2, scale),
    )
    return omega, report


def check_spherical(
    W: np.ndarray,
    grid: Grid,
    mask: np.ndarray,
    report: Report,
    *,
    scale: float = 1.0,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> list[ImmersionData | None]:
    """
    Orthonormality of ``W`` and per-column sphere checks.

    Columns whose differential is singular everywhere are skipped with a
    warning and yield ``None``.
    """
    h2 = grid.h2_max
    m = W.shape[-1]
    gram = transpose(W) @ W
    report.add_check(
        "w_orthonormality",
        masked_max(np.abs(gram - np.eye(m)).max(axis=(-2, -1)), mask),
        tolerances.resolve("tol_iso", h2, scale),
    )
    immersions: list[ImmersionData | None] = []
    for j in range(m):
        column = W[..., j]
        report.add_check(
            f"column_unit_norm:{j + 1}",
            masked_max(np.abs(np.linalg.norm(column, axis=-1) - 1.0), mask),
            tolerances.resolve("tol_iso", h2, scale),
        )
        try:
            column_im = analyze(FieldK(grid, column), tolerances=tolerances)
        except NoRegularNodeError:
            logger.warning("Column %d of W has no regular node; skipped", j + 1)
            report.notes.append(f"column {j + 1} of W is singular everywhere")
            immersions.append(None)
            continue
        report.add_check(
            f"column_flat_normal_bundle:{j + 1}",
            flat_normal_bundle_residual(column_im),
            tolerances.resolve("tol_flat", h2, scale * curvature_scale(column_im)),
        )
        immersions.append(column_im)
    return immersions


def construct_spherical(
    spec: FlatBundleSpec,
    *,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> SphericalResult:
    """
    Spherical frame ``W`` of the flat normal bundle construction.

    Every column of ``W`` maps the box into the unit sphere of ``ℝ^{n+m}``.
    """
    flat = construct_flat(spec, tolerances=tolerances)
    data = flat.data
    n = spec.n
    mask = flat.result.working_mask
    W = spherical_frame(data.dphi, data.omega_inv())

    report = Report(command="spherical")
    report.merge(flat.report, "flat.")
    reflection = np.diag(np.concatenate([-np.ones(n), np.ones(spec.m)]))
    report.add_check(
        "w_projector_columns",
        masked_max(
            np.abs(W - reflection @ flat.result.P[..., :, n:]).max(axis=(-2, -1)), mask
        ),
        tolerances.resolve("tol_alg", spec.grid.h2_max, data.scale**2),
    )
    immersions = check_spherical(
        W, spec.grid, mask, report, scale=data.scale, tolerances=tolerances
    )
    report.add_mask("working", mask)
    condition = condition_numbers(data.Omega.values)
    report.metrics["omega_max_condition"] = masked_max(condition, mask)
    return SphericalResult(
        W=FieldK(spec.grid, W),
        immersions=tuple(immersions),
        flat=flat,
        report=report,
    )
