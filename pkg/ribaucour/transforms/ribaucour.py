"""
Vectorial Ribaucour transformation of a sampled immersion.

Background:
    Data over ``V = ℝᵐ`` is a section ``φ`` with ``ω = dφ``, normal-valued
    ``β`` (stored as normal-frame coefficients) and an ``m×m`` matrix field
    ``Ω``. From them:

    - ``ℱ = f_* ∇φ + β`` (ambient ``N×m`` per node),
    - ``Φ_i = ∇(grad φ_i) − A_{β e_i}`` (``n×n`` per node and basis vector),
    - ``dΩ = ℱᵗdℱ`` and ``Ω + Ωᵗ = ℱᵗℱ``.

    The transform is ``f̃ = f − ℱΩ⁻¹φ`` with bundle isometry
    ``P = I − ℱΩ⁻¹ℱᵗ`` and ``D = I − Σ_i (Ω⁻¹φ)_i Φ_i``, so that
    ``f̃_* = P f_* D``. The inverse triple ``(Ω⁻¹φ, Pβ(Ω⁻¹)ᵗ, Ω⁻¹)`` takes
    ``f̃`` back to ``f``.

Masks:
    Every residual is a max over the *working mask*: regular nodes of the
    base away from the boundary layers where ``Ω`` has condition number at
    most ``kappa_max``. The transform further drops nodes where ``det Ω``
    is not resolved by the grid (``resolved_mask``). Masks are counted in
    every report.

Known Limitations:
    - Only exact ``ω = dφ``; general closed-form Combescure data is not
      supported.
    - Nothing is continued across the non-invertible locus of ``Ω``.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ribaucour.calculus.field import (
    FieldK,
    OneFormField,
    closedness_residual,
    gradient_array,
    path_independence_residual,
    path_integrate,
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
    CodazziResidualError,
    FrameMismatchError,
    GridError,
    NoRegularNodeError,
    SingularOmegaError,
)
from ribaucour.geometry.frame import ImmersionData, analyze, curvature_scale
from ribaucour.reports import Report

logger = logging.getLogger(__name__)

DATA_CHECKS: tuple[str, ...] = (
    "codazzi",
    "phi_symmetry",
    "combescure_relation",
    "phi_commutator",
    "alpha_phi_symmetry",
    "omega_closedness",
    "path_independence",
    "omega_symmetric_part",
    "omega_derivative",
    "scalar_omega",
)
TRANSFORM_CHECKS: tuple[str, ...] = (
    "isometry",
    "metric_relation",
    "differential_relation",
)
RELATION_CHECKS: tuple[str, ...] = (
    "normal_connection_relation",
    "shape_operator_relation",
    "second_fundamental_form_relation",
)
INVERSE_CHECKS: tuple[str, ...] = (
    "round_trip",
    "inverse_F",
    "inverse_phi_relation",
)


@dataclass(frozen=True)
class RibaucourData:
    """
    Ribaucour data over an analyzed immersion; arrays lead with ``grid.res``.

    ``dphi[a, i] = ∂_a φ_i``, ``F`` is ``N×m``, ``dF[a] = ∂_a ℱ``,
    ``Phi[i]`` is the matrix of ``Φ_{e_i}`` in the coordinate basis
    (``Phi[i][c, a]`` is the ``∂_c`` component of ``Φ_i ∂_a``).
    """

    base: ImmersionData
    phi: FieldK
    beta: np.ndarray
    dphi: np.ndarray
    F: np.ndarray
    dF: np.ndarray
    Phi: np.ndarray
    Omega: FieldK
    invertible_mask: np.ndarray
    base_node: tuple[int, ...]
    scale: float
    report: Report
    form_scale: float = 1.0

    @property
    def m(self) -> int:
        return self.phi.value_shape[0]

    @property
    def omega(self) -> OneFormField:
        """``ω = dφ`` as a one-form; component ``a`` is ``∂_a φ``."""
        grid = self.base.grid
        return OneFormField(
            grid, tuple(self.dphi[..., a, :] for a in range(grid.n))
        )

    @property
    def beta_ambient(self) -> np.ndarray:
        return self.base.normal_to_ambient(self.beta)

    @property
    def working_mask(self) -> np.ndarray:
        return self.base.check_mask & self.invertible_mask

    def omega_inv(self) -> np.ndarray:
        return safe_inv(self.Omega.values, self.invertible_mask)

    def phi_along(self, v: np.ndarray) -> np.ndarray:
        """``Φ_v`` for per-node vectors ``v`` of shape ``res + (m,)``."""
        return np.einsum("...i,...iac->...ac", v, self.Phi)


@dataclass(frozen=True)
class TransformResult:
    data: RibaucourData
    tilde_f: FieldK
    tilde_im: ImmersionData
    P: np.ndarray
    D: np.ndarray
    omega_inv_phi: np.ndarray
    working_mask: np.ndarray
    inverse_data: RibaucourData
    report: Report


def _as_vector_field(phi: FieldK) -> FieldK:
    if phi.value_shape == ():
        return FieldK(phi.grid, phi.values[..., None])
    if len(phi.value_shape) != 1:
        raise GridError(f"phi must be vector valued, got shape {phi.value_shape}")
    return phi


def _as_beta(base: ImmersionData, beta: np.ndarray | FieldK, m: int) -> np.ndarray:
    values = beta.values if isinstance(beta, FieldK) else np.asarray(beta, float)
    shape = (base.codim, m)
    if values.shape == shape:
        return np.broadcast_to(values, base.grid.res + shape).copy()
    if values.shape == base.grid.res + shape:
        return values
    raise GridError(
        f"beta must have shape {shape} or {base.grid.res + shape}, got {values.shape}"
    )


def _as_matrix_field(
    base: ImmersionData, value: np.ndarray | FieldK, m: int
) -> np.ndarray:
    values = value.values if isinstance(value, FieldK) else np.asarray(value, float)
    if values.shape == (m, m):
        return np.broadcast_to(values, base.grid.res + (m, m)).copy()
    if values.shape == base.grid.res + (m, m):
        return values
    raise GridError(f"Expected {m}x{m} matrices, got shape {values.shape}")


def resolve_base_node(
    im: ImmersionData, base_node: Sequence[int] | None
) -> tuple[int, ...]:
    """The requested base node, or the centre node, or the first checked node."""
    if base_node is not None:
        node = tuple(int(i) for i in base_node)
        if not im.framed_mask[node]:
            raise NoRegularNodeError(f"Base node {node} is not regular")
        return node
    centre = im.grid.center_index
    if im.check_mask[centre]:
        return centre
    candidates = np.argwhere(im.check_mask)
    if not len(candidates):
        candidates = np.argwhere(im.framed_mask)
    return tuple(int(i) for i in candidates[0])


def codazzi_residual(
    base: ImmersionData, beta: np.ndarray, tangent: np.ndarray
) -> np.ndarray:
    """
    Per-node max of ``|α(∂_a, grad φ_i) + (∇⊥_a β)e_i|`` in normal coordinates.

    ``tangent`` holds ``grad φ_i`` in coordinates, shape ``res + (n, m)``.
    """
    grid = base.grid
    second = np.einsum("...bac,...ci->...abi", base.alpha, tangent)
    dbeta = gradient_array(beta, grid)
    connection = np.einsum("...adb,...di->...abi", base.nconn, beta)
    return np.abs(second + dbeta + connection).max(axis=(-3, -2, -1))


def build_data(
    base: ImmersionData,
    phi: FieldK,
    beta: np.ndarray | FieldK,
    omega0: np.ndarray | None = None,
    *,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
    base_node: Sequence[int] | None = None,
    dphi: np.ndarray | None = None,
    dF: np.ndarray | None = None,
    Omega: np.ndarray | FieldK | None = None,
    restrict: np.ndarray | None = None,
    strict: bool = True,
) -> RibaucourData:
    """
    Assemble ℱ, Φ and Ω for the data ``(φ, β)`` over ``base`` and check it.

    Args:
        base: Analyzed immersion.
        phi: Section φ, values ``res + (m,)`` (a scalar field means m = 1).
        beta: Normal-frame coefficients, ``(N−n, m)`` or ``res + (N−n, m)``.
        omega0: Ω at the base node. Defaults to ``ℱᵗℱ/2`` there (skew part 0).
        tolerances: Tolerance policy.
        base_node: Node where Ω is initialized (default: centre node).
        dphi: Exact ``∂_a φ_i`` (``res + (n, m)``) replacing finite differences.
        dF: Exact ``∂_a ℱ`` (``res + (n, N, m)``) replacing finite differences.
        Omega: A complete Ω field; skips the integration (used for inverse and
            split data whose Ω is known in closed form).
        restrict: Extra mask intersected with the invertible mask.
        strict: Raise on a normal compatibility violation instead of recording it.

    Raises:
        CodazziResidualError: ``strict`` and the compatibility residual is too large.
        NoRegularNodeError: The requested base node is not regular.
    """
    grid = base.grid
    h2 = grid.h2_max
    phi = _as_vector_field(phi)
    m = phi.value_shape[0]
    beta = _as_beta(base, beta, m)
    node = resolve_base_node(base, base_node)
    mask = base.check_mask
    report = Report()

    if dphi is None:
        dphi = gradient_array(phi.values, grid)
    tangent = base.metric_inv @ dphi
    tangent_ambient = base.jac @ tangent
    beta_ambient = base.normal_to_ambient(beta)
    F = tangent_ambient + beta_ambient
    if dF is None:
        dF = gradient_array(F, grid)
        d_tangent = gradient_array(tangent_ambient, grid)
    else:
        d_tangent = dF - gradient_array(beta_ambient, grid)

    f_scale = max(1.0, masked_max(np.sum(F * F, axis=(-2, -1)), mask))
    geometry_scale = f_scale * curvature_scale(base)

    codazzi = masked_max(codazzi_residual(base, beta, tangent), mask)
    codazzi_tol = tolerances.resolve("tol_codazzi", h2, geometry_scale)
    if strict and codazzi > codazzi_tol:
        raise CodazziResidualError(residual=codazzi, tolerance=codazzi_tol)
    report.add_check("codazzi", codazzi, codazzi_tol)

    to_coords = base.metric_inv @ transpose(base.jac)
    hessian_part = np.einsum("...cN,...aNi->...ica", to_coords, d_tangent)
    shape_ops = base.shape_operators().operators
    Phi = hessian_part - np.einsum("...bi,...bca->...ica", beta, shape_ops)

    g_phi = base.metric[..., None, :, :] @ Phi
    report.add_check(
        "phi_symmetry",
        masked_max(np.abs(g_phi - transpose(g_phi)).max(axis=(-3, -2, -1)), mask),
        tolerances.resolve("tol_sym", h2, geometry_scale),
    )
    combescure = np.einsum("...cN,...aNi->...ica", to_coords, dF) - Phi
    report.add_check(
        "combescure_relation",
        masked_max(np.abs(combescure).max(axis=(-3, -2, -1)), mask),
        tolerances.resolve("tol_rel", h2, geometry_scale),
    )
    worst_commutator = 0.0
    for i, j in itertools.combinations(range(m), 2):
        a, b = Phi[..., i, :, :], Phi[..., j, :, :]
        commutator = masked_max(frobenius(a @ b - b @ a), mask)
        worst_commutator = max(worst_commutator, commutator)
    report.add_check(
        "phi_commutator",
        worst_commutator,
        tolerances.resolve("tol_phi_commute", h2, geometry_scale),
    )
    alpha_phi = base.alpha[..., :, None, :, :] @ Phi[..., None, :, :, :]
    report.add_check(
        "alpha_phi_symmetry",
        masked_max(
            np.abs(alpha_phi - transpose(alpha_phi)).max(axis=(-4, -3, -2, -1)), mask
        ),
        tolerances.resolve("tol_sym", h2, geometry_scale),
    )

    rho = OneFormField(
        grid, tuple(transpose(F) @ dF[..., a, :, :] for a in range(grid.n))
    )
    rho_scale = max(1.0, masked_max(np.abs(dF).max(axis=(-3, -2, -1)), mask)) * f_scale
    closed_tol = tolerances.resolve("tol_closed", h2, rho_scale)
    report.add_check("omega_closedness", closedness_residual(rho), closed_tol)

    FtF = transpose(F) @ F
    integrated = Omega is None
    if integrated:
        if omega0 is None:
            start = 0.5 * FtF[node]
        else:
            start = np.asarray(omega0, dtype=float)
            if start.shape != (m, m):
                raise GridError(f"omega0 must be {m}x{m}, got {start.shape}")
        logger.debug("Integrating Omega from base node %s", node)
        omega_values = path_integrate(rho, node, start, tolerance=closed_tol).values
        report.add_check(
            "path_independence",
            path_independence_residual(rho, node, start),
            grid.diameter * closed_tol
            + tolerances.resolve("tol_path", h2, rho_scale),
        )
    else:
        omega_values = _as_matrix_field(base, Omega, m)

    condition = condition_numbers(omega_values)
    invertible = base.framed_mask & (condition <= tolerances.kappa_max)
    if restrict is not None:
        invertible &= restrict
    if (mask & ~invertible).any():
        logger.warning(
            "Omega is not invertible on %d checked nodes",
            int(np.count_nonzero(mask & ~invertible)),
        )
    working = mask & invertible
    omega_inv = safe_inv(omega_values, invertible)
    scale = max(f_scale, masked_max(np.abs(omega_inv).max(axis=(-2, -1)), working))

    report.add_check(
        "omega_symmetric_part",
        masked_max(
            np.abs(omega_values + transpose(omega_values) - FtF).max(axis=(-2, -1)),
            mask,
        ),
        tolerances.resolve("tol_sym", h2, rho_scale),
    )
    d_omega = gradient_array(omega_values, grid)
    report.add_check(
        "omega_derivative",
        masked_max(
            np.abs(d_omega - np.stack(rho.components, axis=grid.n)).max(
                axis=(-3, -2, -1)
            ),
            mask,
        ),
        tolerances.resolve("tol_closed", h2, rho_scale),
    )
    if m == 1 and integrated and omega0 is None:
        report.add_check(
            "scalar_omega",
            masked_max(np.abs(omega_values - 0.5 * FtF)[..., 0, 0], mask),
            tolerances.resolve("tol_sym", h2, rho_scale),
        )

    report.add_mask("regular", base.regular_mask)
    report.add_mask("checked", mask)
    report.add_mask("invertible", invertible)
    report.add_mask("working", working)
    logger.debug(
        "Built Ribaucour data with m=%d on %d working nodes", m, int(working.sum())
    )
    return RibaucourData(
        base=base,
        phi=phi,
        beta=beta,
        dphi=dphi,
        F=F,
        dF=dF,
        Phi=Phi,
        Omega=FieldK(grid, omega_values),
        invertible_mask=invertible,
        base_node=node,
        scale=scale,
        report=report,
        form_scale=rho_scale,
    )


def from_triple(
    base: ImmersionData,
    phi: FieldK,
    beta: np.ndarray | FieldK,
    Omega: np.ndarray | FieldK,
    **kwargs,
) -> RibaucourData:
    """Data for a known triple ``(φ, β, Ω)``; Ω is checked, not integrated."""
    return build_data(base, phi, beta, Omega=Omega, **kwargs)


def resolved_mask(omega: np.ndarray, threshold: float) -> np.ndarray:
    """
    Nodes where ``det Ω`` varies slowly on the grid scale.

    A node is kept when the second difference of ``det Ω`` along every axis
    stays below ``threshold·|det Ω|``, at the node and at its axis
    neighbours. Near a zero of ``det Ω`` the finite-difference stencils of
    the transformed map do not resolve ``Ω⁻¹``.
    """
    det = np.linalg.det(omega)
    n = det.ndim
    ok = np.ones(det.shape, dtype=bool)
    for axis in range(n):

        def part(s: slice) -> tuple[slice, ...]:
            index = [slice(None)] * n
            index[axis] = s
            return tuple(index)

        second = np.zeros_like(det)
        second[part(slice(1, -1))] = (
            det[part(slice(2, None))]
            - 2.0 * det[part(slice(1, -1))]
            + det[part(slice(None, -2))]
        )
        ok &= np.abs(second) <= threshold * np.abs(det)
    kept = ok.copy()
    for axis in range(n):
        lower = [slice(None)] * n
        upper = [slice(None)] * n
        lower[axis], upper[axis] = slice(1, None), slice(None, -1)
        kept[tuple(lower)] &= ok[tuple(upper)]
        kept[tuple(upper)] &= ok[tuple(lower)]
    return kept


def apply_transform(data: RibaucourData) -> tuple[np.ndarray, np.ndarray]:
    """``f − ℱΩ⁻¹φ`` and ``Ω⁻¹φ``, with ``Ω = I`` off the invertible mask."""
    x = matvec(data.omega_inv(), data.phi.values)
    return data.base.f.values - matvec(data.F, x), x


def transform(
    data: RibaucourData,
    *,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> TransformResult:
    """
    Apply the Ribaucour transform and derive ``P``, ``D`` and the inverse data.

    Raises:
        SingularOmegaError: Ω is not invertible on any checked node.
        NoRegularNodeError: The transformed map is singular everywhere.
    """
    base = data.base
    grid = base.grid
    h2 = grid.h2_max
    if not data.working_mask.any():
        raise SingularOmegaError(location="Omega")

    tilde, x = apply_transform(data)
    omega_inv = data.omega_inv()
    P = np.eye(base.ambient_dim) - data.F @ omega_inv @ transpose(data.F)
    D = np.eye(base.dim) - data.phi_along(x)

    tilde_f = FieldK(grid, tilde)
    tilde_im = analyze(tilde_f, tolerances=tolerances, reference=data.base_node)
    resolved = resolved_mask(data.Omega.values, tolerances.resolution)
    working = data.working_mask & tilde_im.check_mask
    if (working & ~resolved).any():
        logger.warning(
            "det Omega is under-resolved on %d working nodes; excluded",
            int(np.count_nonzero(working & ~resolved)),
        )
    working &= resolved
    report = Report()
    report.add_mask("resolved", resolved)
    report.add_mask("working", working)
    scale = data.scale

    # PᵗP − I = −ℱΩ⁻ᵗ(Ω + Ωᵗ − ℱᵗℱ)Ω⁻¹ℱᵗ, weighted per node by |ℱΩ⁻¹|²
    gain = np.linalg.norm(data.F @ omega_inv, ord=2, axis=(-2, -1)) ** 2
    defect = np.abs(transpose(P) @ P - eye_like(P)).max(axis=(-2, -1))
    report.add_check(
        "isometry",
        masked_max(defect / np.maximum(1.0, gain), working),
        tolerances.resolve("tol_iso", h2, data.m * data.form_scale),
    )
    pulled = transpose(D) @ base.metric @ D
    report.add_check(
        "metric_relation",
        masked_max(np.abs(tilde_im.metric - pulled).max(axis=(-2, -1)), working),
        tolerances.resolve("tol_rel", h2, scale * curvature_scale(base)),
    )
    report.add_check(
        "differential_relation",
        masked_max(
            np.abs(tilde_im.jac - P @ base.jac @ D).max(axis=(-2, -1)), working
        ),
        tolerances.resolve("tol_rel", h2, scale * curvature_scale(base)),
    )

    inverse_beta = tilde_im.ambient_to_normal(
        P @ data.beta_ambient @ transpose(omega_inv)
    )
    inverse_data = from_triple(
        tilde_im,
        FieldK(grid, x),
        inverse_beta,
        omega_inv,
        tolerances=tolerances,
        base_node=data.base_node if tilde_im.framed_mask[data.base_node] else None,
        restrict=data.invertible_mask,
        strict=False,
    )
    logger.debug("Transformed immersion: %d working nodes", int(working.sum()))
    return TransformResult(
        data=data,
        tilde_f=tilde_f,
        tilde_im=tilde_im,
        P=P,
        D=D,
        omega_inv_phi=x,
        working_mask=working,
        inverse_data=inverse_data,
        report=report,
    )


def verify_prop12(
    data: RibaucourData,
    result: TransformResult,
    *,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> Report:
    """
    Residuals of the relations between the normal geometry of ``f`` and ``f̃``:

    - normal connection: ``∇̃⊥(Pξ) = P∇⊥ξ``,
    - shape operators: ``Ã_{Pξ} = D⁻¹(A_ξ + Φ_{Ω⁻¹βᵗξ})``,
    - second fundamental forms: ``α̃(X, Y) = P(α(X, DY) + βΩ⁻ᵗΦ(X)ᵗDY)``.

    Raises:
        FrameMismatchError: The two immersions have different normal ranks.
    """
    base, tilde = data.base, result.tilde_im
    if base.codim != tilde.codim or base.grid != tilde.grid:
        raise FrameMismatchError(
            f"Normal ranks differ: {base.codim} vs {tilde.codim}"
        )
    grid = base.grid
    h2 = grid.h2_max
    mask = result.working_mask
    P, D = result.P, result.D
    omega_inv = data.omega_inv()
    scale = data.scale * max(curvature_scale(base), curvature_scale(tilde))
    tolerance = tolerances.resolve("tol_rel", h2, scale)
    report = Report()

    moved = P @ base.normal_frame
    d_moved = gradient_array(moved, grid)
    tilde_proj = tilde.normal_projector()[..., None, :, :]
    lhs = tilde_proj @ d_moved
    rhs = P[..., None, :, :] @ base.normal_projector()[..., None, :, :] @ (
        gradient_array(base.normal_frame, grid)
    )
    report.add_check(
        "normal_connection_relation",
        masked_max(np.abs(lhs - rhs).max(axis=(-3, -2, -1)), mask),
        tolerance,
    )

    weights = transpose(tilde.normal_frame) @ moved
    tilde_alpha = np.einsum("...kb,...kac->...bac", weights, tilde.alpha)
    lhs_ops = tilde.metric_inv[..., None, :, :] @ tilde_alpha
    directions = np.einsum("...ij,...bj->...bi", omega_inv, data.beta)
    phi_terms = np.einsum("...bi,...iac->...bac", directions, data.Phi)
    d_inv = safe_inv(D, mask)[..., None, :, :]
    rhs_ops = d_inv @ (base.shape_operators().operators + phi_terms)
    report.add_check(
        "shape_operator_relation",
        masked_max(np.abs(lhs_ops - rhs_ops).max(axis=(-3, -2, -1)), mask),
        tolerance,
    )

    alpha_d = base.alpha @ D[..., None, :, :]
    first = np.einsum("...kb,...bac->...ack", base.normal_frame, alpha_d)
    phi_g_d = transpose(data.Phi) @ base.metric[..., None, :, :] @ D[..., None, :, :]
    coefficients = np.einsum("...ji,...jac->...aci", omega_inv, phi_g_d)
    second = np.einsum("...ki,...aci->...ack", data.beta_ambient, coefficients)
    expected = np.einsum("...kl,...acl->...ack", P, first + second)
    actual = np.einsum("...kb,...bac->...ack", tilde.normal_frame, tilde.alpha)
    report.add_check(
        "second_fundamental_form_relation",
        masked_max(np.abs(actual - expected).max(axis=(-3, -2, -1)), mask),
        tolerance,
    )
    return report


def invert(
    result: TransformResult,
    *,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> tuple[FieldK, Report]:
    """
    Transform ``f̃`` with the inverse data and compare with the original ``f``.

    Also checks ``ℱ̃ = −ℱΩ⁻¹`` and ``DΦ̃_v = −Φ_{Ω⁻¹v}``.
    """
    data, inverse = result.data, result.inverse_data
    grid = data.base.grid
    h2 = grid.h2_max
    if not inverse.working_mask.any():
        raise SingularOmegaError(location="inverse Omega")
    recovered, _ = apply_transform(inverse)
    mask = result.working_mask & inverse.working_mask
    scale = data.scale * curvature_scale(data.base)
    omega_inv = data.omega_inv()
    report = Report()

    report.add_check(
        "round_trip",
        masked_max(np.abs(recovered - data.base.f.values).max(axis=-1), mask),
        tolerances.resolve("tol_inv", h2, scale),
    )
    report.add_check(
        "inverse_F",
        masked_max(np.abs(inverse.F + data.F @ omega_inv).max(axis=(-2, -1)), mask),
        tolerances.resolve("tol_rel", h2, scale),
    )
    lhs = result.D[..., None, :, :] @ inverse.Phi
    rhs = -np.einsum("...ji,...jac->...iac", omega_inv, data.Phi)
    report.add_check(
        "inverse_phi_relation",
        masked_max(np.abs(lhs - rhs).max(axis=(-3, -2, -1)), mask),
        tolerances.resolve("tol_rel", h2, scale * curvature_scale(result.tilde_im)),
    )
    return FieldK(grid, recovered), report
