"""
Families of Ribaucour transforms carrying a Dupin principal normal.

Background:
    ``g`` is an immersion into ``ℝ^{N−m} ⊂ ℝ^N`` and ``(φ, β, Ω)`` is
    Ribaucour data over ``V = ℝ ⊕ ℝᵐ`` (basis ``e_0, e_1..e_m``). The
    ``ℝᵐ`` factor of ``V`` is identified with the orthogonal complement of
    ``ℝ^{N−m}``. For ``t ∈ ℝᵐ``::

        β_t = e_0* ⊗ (β_0 + t) + Σ_i e_i* ⊗ β(e_i)
        Ω_t = Ω + (⟨β_0, t⟩ + |t|²/2) e_0* ⊗ e_0

    and ``G(x, t)`` is the transform of ``g`` by ``(φ, β_t, Ω_t)``. For fixed
    ``x`` the leaf ``t ↦ G(x, t)`` is a round ``m``-sphere, and the leaf
    directions are principal with a common normal of multiplicity ``m``.

Diagnostics:
    - the bilinear map ``γ`` controlling the conullity must have trivial
      kernel; its smallest singular value is reported,
    - sphere fit of each leaf (least squares in the affine span),
    - multiplicity of the principal normal along the leaves,
    - the closed form of ``Ω_t`` against ``Ω_t`` integrated from ``dℱ_t``
      with the same base-node value.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ribaucour.calculus.field import FieldK, Grid
from ribaucour.calculus.linalg import masked_max, matvec, safe_inv, transpose
from ribaucour.config import DEFAULT_TOLERANCES, Tolerances
from ribaucour.constructions.construct import (
    Potential,
    validate_skew,
    check_beta_normality,
    pad_immersion,
    potential_jets,
    skewed_omega0,
)
from ribaucour.exceptions import (
    ConfigError,
    DegenerateKernelError,
    NoRegularNodeError,
    SingularOmegaError,
)
from ribaucour.geometry.frame import ImmersionData, analyze, curvature_scale
from ribaucour.reports import Report
from ribaucour.transforms.ribaucour import (
    RibaucourData,
    apply_transform,
    build_data,
    from_triple,
    transform,
)

logger = logging.getLogger(__name__)

DUPIN_CHECKS: tuple[str, ...] = (
    "omega_t_formula",
    "family_codazzi",
    "family_omega_symmetric_part",
    "family_omega_derivative",
    "sphere_fit",
    "principal_normal",
)

_FAMILY_CHECKS = {
    "codazzi": "family_codazzi",
    "omega_symmetric_part": "family_omega_symmetric_part",
    "omega_derivative": "family_omega_derivative",
}


@dataclass(frozen=True)
class DupinSpec:
    """
    Base ``g`` into ``ℝ^{N−m}`` with data over ``ℝ^{m+1}``.

    ``potentials`` are ``φ_0..φ_m``; ``betas`` are ambient normal vectors of
    ``g`` in ``ℝ^{N−m}``, shape ``(N−m, m+1)`` or per node. ``beta0_offset``
    is the constant ``ℝᵐ`` component of ``β_0``. ``t_grid`` is the box of
    leaf parameters; ``None`` means ``m = 0``.
    """

    base: FieldK
    potentials: tuple[Potential, ...]
    betas: np.ndarray
    t_grid: Grid | None = None
    beta0_offset: np.ndarray | None = None
    omega0_skew: np.ndarray | None = None
    base_node: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "potentials", tuple(self.potentials))
        m = self.m
        if len(self.potentials) != m + 1:
            raise ConfigError(
                f"Expected {m + 1} potentials for leaves of dimension {m}",
                location="potentials",
            )
        ambient = self.base.value_shape[0]
        betas = np.asarray(self.betas, dtype=float)
        if betas.shape == (ambient, m + 1):
            betas = np.broadcast_to(betas, self.base.grid.res + betas.shape).copy()
        elif betas.shape != self.base.grid.res + (ambient, m + 1):
            raise ConfigError(
                f"betas must have shape ({ambient}, {m + 1}) per node",
                location="betas",
            )
        object.__setattr__(self, "betas", betas)
        offset = np.zeros(m) if self.beta0_offset is None else self.beta0_offset
        offset = np.asarray(offset, dtype=float)
        if offset.shape != (m,):
            raise ConfigError(
                f"beta0_offset must have length {m}", location="beta0_offset"
            )
        object.__setattr__(self, "beta0_offset", offset)
        object.__setattr__(self, "omega0_skew", validate_skew(self.omega0_skew, m + 1))

    @property
    def m(self) -> int:
        return 0 if self.t_grid is None else self.t_grid.n

    @property
    def grid(self) -> Grid:
        return self.base.grid


@dataclass(frozen=True)
class DupinResult:
    family: FieldK
    family_im: ImmersionData | None
    data: RibaucourData
    report: Report


def gamma_singular_values(data: RibaucourData) -> np.ndarray:
    """
    Smallest singular value of ``Z ↦ γ(Z, ·)`` per node (shape ``res``).

    ``γ(Z, X) = (α(Z, D_1X) + β_1Ω_11⁻ᵗ⟨Φ_1 Z, D_1X⟩ − φ̄_0⟨Z, X⟩β̂_0)``
    projected to ``ℝ^{N−m}``, where ``D_1``, ``φ̄_0`` and ``β̂_0`` come from
    the split of the data into ``e_0`` and ``ℝᵐ`` blocks. Values are divided
    by the largest entry so they compare against a relative floor.
    """
    base = data.base
    m = data.m - 1
    ambient = base.ambient_dim - m
    omega = data.Omega.values
    mask = data.working_mask
    omega11_inv = safe_inv(omega[..., 1:, 1:], mask)
    omega01 = omega[..., 0, 1:]
    phi = data.phi.values
    x1 = matvec(omega11_inv, phi[..., 1:])
    D1 = np.eye(base.dim) - data.phi_along(
        np.concatenate([np.zeros(x1.shape[:-1] + (1,)), x1], axis=-1)
    )
    phi0_bar = phi[..., 0] - np.sum(omega01 * x1, axis=-1)
    beta = data.beta_ambient
    beta0_hat = beta[..., :, 0] - matvec(
        beta[..., :, 1:] @ transpose(omega11_inv), omega01
    )

    # coordinates: gamma[a, c, k] = γ(∂_a, ∂_c)_k
    alpha_ambient = np.einsum("...kb,...bac->...ack", base.normal_frame, base.alpha)
    first = np.einsum("...adk,...dc->...ack", alpha_ambient, D1)
    pairing = transpose(data.Phi[..., 1:, :, :]) @ (base.metric @ D1)[..., None, :, :]
    weights = np.einsum("...ij,...jac->...aci", transpose(omega11_inv), pairing)
    second = np.einsum("...ki,...aci->...ack", beta[..., :, 1:], weights)
    third = (phi0_bar[..., None, None, None] * base.metric[..., None]) * beta0_hat[
        ..., None, None, :
    ]
    gamma = (first + second - third)[..., :ambient]
    flat = gamma.reshape(gamma.shape[:-3] + (base.dim, base.dim * ambient))
    singular = np.linalg.svd(flat, compute_uv=False)
    size = np.maximum(np.abs(flat).max(axis=(-2, -1)), 1e-300)
    return singular[..., -1] / size


def fit_sphere(points: np.ndarray, dim: int) -> tuple[np.ndarray, float, float]:
    """
    Least-squares ``dim``-sphere through ``points`` (``P × N``).

    Returns the centre, the radius and the residual: the larger of the
    distance of the points to the fitted ``(dim+1)``-dimensional affine span
    and ``max | |p − c| − r |``.
    """
    mean = points.mean(axis=0)
    centred = points - mean
    _, _, vt = np.linalg.svd(centred, full_matrices=False)
    basis = vt[: dim + 1].T
    coords = centred @ basis
    planarity = float(np.abs(centred - coords @ basis.T).max())
    system = np.column_stack([2.0 * coords, np.ones(len(coords))])
    rhs = np.sum(coords * coords, axis=1)
    solution, *_ = np.linalg.lstsq(system, rhs, rcond=None)
    centre, offset = solution[:-1], solution[-1]
    radius = float(np.sqrt(max(offset + centre @ centre, 0.0)))
    spread = np.abs(np.linalg.norm(coords - centre, axis=1) - radius)
    return mean + basis @ centre, radius, max(planarity, float(spread.max()))


def principal_normal_defect(
    im: ImmersionData, leaf_axes: Sequence[int]
) -> tuple[np.ndarray, np.ndarray]:
    """
    Singular values of ``Z ↦ α(Z, ·) − ⟨Z, ·⟩η`` with ``η`` the mean of
    ``α(Z_s, Z_s)`` over orthonormal leaf directions ``Z_s``.

    Returns the ascending singular values (``res + (n,)``) and ``η``.
    """
    n = im.dim
    metric = np.where(im.regular_mask[..., None, None], im.metric, np.eye(n))
    lower = np.linalg.cholesky(metric)
    lower_inv = np.linalg.inv(lower)
    ortho_alpha = lower_inv[..., None, :, :] @ im.alpha @ transpose(lower_inv)[
        ..., None, :, :
    ]
    second = np.einsum("...kb,...bij->...ijk", im.normal_frame, ortho_alpha)

    # leaf directions in the metric-orthonormal tangent basis
    leaf = transpose(lower)[..., :, list(leaf_axes)]
    leaf, _ = np.linalg.qr(leaf)
    eta = np.einsum("...is,...ijk,...js->...k", leaf, second, leaf) / len(leaf_axes)
    defect = second - np.eye(n)[:, :, None] * eta[..., None, None, :]
    flat = defect.reshape(defect.shape[:-3] + (n, -1))
    singular = np.linalg.svd(flat, compute_uv=False)
    return singular[..., ::-1], eta


def omega_t_drift(
    im: ImmersionData,
    data: RibaucourData,
    beta_ambient: np.ndarray,
    omega_t: np.ndarray,
    mask: np.ndarray,
    *,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> tuple[float, float]:
    """
    Distance between a closed-form ``Ω_t`` and the one integrated from
    ``dΩ_t = ℱ_tᵗdℱ_t`` with the same value at the base node.

    Returns the max drift on ``mask`` and the path tolerance it is held to.
    """
    integrated = build_data(
        im,
        data.phi,
        im.ambient_to_normal(beta_ambient),
        omega_t[data.base_node],
        tolerances=tolerances,
        base_node=data.base_node,
        dphi=data.dphi,
        strict=False,
    )
    drift = masked_max(
        np.abs(integrated.Omega.values - omega_t).max(axis=(-2, -1)), mask
    )
    grid = im.grid
    bound = max(1.0, grid.diameter) * tolerances.resolve(
        "tol_path", grid.h2_max, integrated.form_scale
    )
    return drift, bound


def construct_dupin(
    spec: DupinSpec,
    *,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> DupinResult:
    """
    Family ``G(x, t)`` of transforms over the product of the base grid and
    the leaf grid.

    Raises:
        CodazziResidualError: ``(φ, β)`` is incompatible with ``g``.
        DegenerateKernelError: ``γ`` has a nontrivial kernel at a checked node.
        SingularOmegaError: Ω is singular on every checked node.
    """
    grid = spec.grid
    m = spec.m
    ambient = spec.base.value_shape[0] + m
    logger.info(
        "Dupin family: base dim %d, leaves of dim %d in R^%d", grid.n, m, ambient
    )
    phi, gradients, _ = potential_jets(spec.potentials, grid)
    base_im, padded_im = pad_immersion(
        spec.base, m, base_node=spec.base_node, tolerances=tolerances
    )
    report = Report(command="dupin")
    check_beta_normality(base_im, spec.betas, report, tolerances=tolerances)

    beta_ambient = np.concatenate(
        [spec.betas, np.zeros(grid.res + (m, m + 1))], axis=-2
    )
    beta_ambient[..., spec.base.value_shape[0] :, 0] = spec.beta0_offset
    data = build_data(
        padded_im,
        FieldK(grid, phi),
        padded_im.ambient_to_normal(beta_ambient),
        skewed_omega0(
            padded_im, gradients, beta_ambient, spec.omega0_skew, spec.base_node
        ),
        tolerances=tolerances,
        base_node=spec.base_node,
        dphi=gradients,
    )
    report.merge(data.report, "data.")

    if m == 0:
        result = transform(data, tolerances=tolerances)
        report.merge(result.report, "transform.")
        return DupinResult(
            family=result.tilde_f, family_im=result.tilde_im, data=data, report=report
        )

    mask = data.working_mask
    if not mask.any():
        raise SingularOmegaError(location="Omega")
    gamma = gamma_singular_values(data)
    floor = tolerances.minor_floor
    degenerate = mask & (gamma <= floor)
    if degenerate.any():
        node = tuple(int(i) for i in np.argwhere(degenerate)[0])
        raise DegenerateKernelError(point=grid.point(node))
    report.metrics["gamma_min_singular_value"] = float(gamma[mask].min())

    t_grid = spec.t_grid
    h2 = grid.h2_max
    family = np.zeros(grid.res + t_grid.res + (ambient,))
    leaf_mask = mask.copy()
    worst = {name: (0.0, 1.0) for name in _FAMILY_CHECKS.values()}
    formula = (0.0, 1.0)
    e00 = np.zeros((m + 1, m + 1))
    e00[0, 0] = 1.0
    for index in np.ndindex(*t_grid.res):
        t = t_grid.point(index)
        shifted = beta_ambient.copy()
        shifted[..., spec.base.value_shape[0] :, 0] += t
        pairing = np.einsum("...k,k->...", beta_ambient[..., -m:, 0], t)
        omega_t = data.Omega.values + (pairing + 0.5 * t @ t)[..., None, None] * e00
        data_t = from_triple(
            padded_im,
            data.phi,
            padded_im.ambient_to_normal(shifted),
            omega_t,
            tolerances=tolerances,
            base_node=data.base_node,
            dphi=data.dphi,
            strict=False,
        )
        drift, bound = omega_t_drift(
            padded_im, data, shifted, omega_t, mask, tolerances=tolerances
        )
        if drift / bound >= formula[0] / formula[1]:
            formula = (drift, bound)
        for source, target in _FAMILY_CHECKS.items():
            check = data_t.report.check(source)
            if check.residual / check.tolerance >= worst[target][0] / worst[target][1]:
                worst[target] = (check.residual, check.tolerance)
        leaf_mask &= data_t.invertible_mask
        tilde, _ = apply_transform(data_t)
        family[(Ellipsis,) + index + (slice(None),)] = tilde
    logger.debug("Transformed %d leaf parameters", t_grid.size)

    report.add_check("omega_t_formula", *formula)
    for name, (residual, tolerance) in worst.items():
        report.add_check(name, residual, tolerance)

    fit_mask = leaf_mask & base_im.check_mask
    fit_residual, radii = 0.0, []
    for node in np.argwhere(fit_mask):
        points = family[tuple(node)].reshape(-1, ambient)
        _, radius, residual = fit_sphere(points, m)
        fit_residual = max(fit_residual, residual)
        radii.append(radius)
    radius_scale = max([1.0] + [r * r for r in radii])
    report.add_check(
        "sphere_fit",
        fit_residual,
        tolerances.resolve("tol_sphere", t_grid.h2_max, radius_scale),
    )
    if radii:
        report.metrics["leaf_radius_range"] = [min(radii), max(radii)]

    product = grid.product(t_grid)
    family_field = FieldK(product, family)
    family_im = None
    try:
        family_im = analyze(family_field, tolerances=tolerances)
    except NoRegularNodeError:
        logger.warning("Dupin family is singular everywhere; multiplicity skipped")
        report.notes.append("family has no regular node")
    if family_im is not None:
        leaf_axes = tuple(range(grid.n, product.n))
        singular, _ = principal_normal_defect(family_im, leaf_axes)
        check_mask = family_im.check_mask & np.broadcast_to(
            leaf_mask.reshape(grid.res + (1,) * m), product.res
        )
        scale = curvature_scale(family_im)
        tolerance = tolerances.resolve("tol_eig", product.h2_max, scale)
        report.add_check(
            "principal_normal",
            masked_max(singular[..., m - 1], check_mask),
            tolerance,
        )
        multiplicity = np.count_nonzero(singular <= tolerance, axis=-1)
        counts = Counter(multiplicity[check_mask].tolist())
        report.metrics["multiplicity"] = {str(k): v for k, v in sorted(counts.items())}
    report.add_mask("leaf", fit_mask)
    return DupinResult(
        family=family_field, family_im=family_im, data=data, report=report
    )
