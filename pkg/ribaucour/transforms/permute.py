"""
Decomposition, composition and permutability of Ribaucour transforms.

A transform with data over ``V = V₁ ⊕ V₂`` factors through a transform by
the ``V_j`` block followed by a transform of the intermediate immersion with
the barred data

    φ̄_i = φ_i − Ω_ij Ω_jj⁻¹ φ_j
    β̄_i = P_j(β_i − β_j (Ω_jj⁻¹)ᵗ Ω_ijᵗ)
    Ω̄_ii = Ω_ii − Ω_ij Ω_jj⁻¹ Ω_ji

Splits are described by the tuple of parent coordinates transformed first
(the ``j`` block); the remaining coordinates form the ``i`` block.

Bianchi cubes index their transforms by tuples ``α`` of 0-based scalar
indices; reports print them 1-based (``{1,3}``).
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from ribaucour.calculus.field import FieldK, OneFormField, path_integrate
from ribaucour.calculus.linalg import (
    condition_numbers,
    frobenius,
    masked_max,
    matvec,
    safe_inv,
    transpose,
)
from ribaucour.config import DEFAULT_TOLERANCES, Tolerances
from ribaucour.exceptions import (
    CommutatorError,
    GenericityError,
    GridError,
    IndependenceError,
    SingularOmegaError,
    ValidationError,
)
from ribaucour.geometry.frame import ImmersionData, curvature_scale
from ribaucour.reports import Report
from ribaucour.transforms.ribaucour import (
    RibaucourData,
    TransformResult,
    build_data,
    from_triple,
    transform,
)

logger = logging.getLogger(__name__)

SPLIT_CHECKS: tuple[str, ...] = (
    "composition_distance",
    "barred_F_identity",
    "block_inverse_identity",
    "block_cross_identity",
    "block_reassembly",
)
COMBINE_CHECKS: tuple[str, ...] = ("pair_commutator",)
COMPOSE_CHECKS: tuple[str, ...] = (
    "sequential_commutator",
    "bar_omega_symmetric_part",
    "F2_identity",
    "sequential_distance",
)
CUBE_CHECKS: tuple[str, ...] = ("family_sizes", "quadrilateral_closure")
CHAIN_CHECKS: tuple[str, ...] = ("scalar_chain_distance",)


def _label(alpha: Sequence[int]) -> str:
    return "{" + ",".join(str(i + 1) for i in alpha) + "}"


def _block(matrix: np.ndarray, rows: Sequence[int], cols: Sequence[int]) -> np.ndarray:
    return matrix[..., list(rows), :][..., :, list(cols)]


def restrict_data(
    data: RibaucourData,
    indices: Sequence[int],
    *,
    restrict: np.ndarray | None = None,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> RibaucourData:
    """Sub-triple ``(φ_α, β_α, Ω_α)`` for the coordinates ``indices``."""
    idx = list(indices)
    grid = data.base.grid
    return from_triple(
        data.base,
        FieldK(grid, data.phi.values[..., idx]),
        data.beta[..., idx],
        _block(data.Omega.values, idx, idx),
        dphi=data.dphi[..., idx],
        dF=data.dF[..., idx],
        base_node=data.base_node,
        restrict=data.invertible_mask if restrict is None else restrict,
        tolerances=tolerances,
    )


def bar_data(
    parent: RibaucourData,
    first_block: Sequence[int],
    second_block: Sequence[int],
    first: TransformResult,
    *,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> RibaucourData:
    """Barred triple for ``second_block`` over the intermediate immersion ``f_j``."""
    j, i = list(first_block), list(second_block)
    omega = parent.Omega.values
    o_jj_inv = first.data.omega_inv()
    o_ij, o_ji, o_ii = _block(omega, i, j), _block(omega, j, i), _block(omega, i, i)
    phi = parent.phi.values
    phi_bar = phi[..., i] - matvec(o_ij @ o_jj_inv, phi[..., j])
    beta_amb = parent.beta_ambient
    beta_bar = first.P @ (
        beta_amb[..., i] - beta_amb[..., j] @ transpose(o_jj_inv) @ transpose(o_ij)
    )
    omega_bar = o_ii - o_ij @ o_jj_inv @ o_ji
    tilde = first.tilde_im
    node = parent.base_node if tilde.framed_mask[parent.base_node] else None
    return from_triple(
        tilde,
        FieldK(tilde.grid, phi_bar),
        tilde.ambient_to_normal(beta_bar),
        omega_bar,
        base_node=node,
        restrict=first.working_mask & parent.invertible_mask,
        tolerances=tolerances,
        strict=False,
    )


def block_identity_residuals(
    omega: np.ndarray,
    i: Sequence[int],
    j: Sequence[int],
    mask: np.ndarray,
    kappa: float,
) -> tuple[float, float, float]:
    """
    Residuals of the block-inverse identities of a 2×2 block matrix.

    Returns ``(inverse, cross, reassembly)``:
    ``Ω̄_ii⁻¹ = Ω_ii⁻¹ + Ω_ii⁻¹Ω_ijΩ̄_jj⁻¹Ω_jiΩ_ii⁻¹``,
    ``Ω̄_ii⁻¹Ω_ijΩ_jj⁻¹ = Ω_ii⁻¹Ω_ijΩ̄_jj⁻¹`` and the ``ii`` block of ``Ω⁻¹``
    against ``Ω̄_ii⁻¹``, each a max over nodes where every block involved is
    invertible.
    """
    o_ii, o_jj = _block(omega, i, i), _block(omega, j, j)
    o_ij, o_ji = _block(omega, i, j), _block(omega, j, i)
    valid = mask & (condition_numbers(o_ii) <= kappa)
    valid &= condition_numbers(o_jj) <= kappa
    valid &= condition_numbers(omega) <= kappa
    o_ii_inv, o_jj_inv = safe_inv(o_ii, valid), safe_inv(o_jj, valid)
    bar_ii = o_ii - o_ij @ o_jj_inv @ o_ji
    bar_jj = o_jj - o_ji @ o_ii_inv @ o_ij
    valid &= (condition_numbers(bar_ii) <= kappa) & (condition_numbers(bar_jj) <= kappa)
    if not valid.any():
        return 0.0, 0.0, 0.0
    bar_ii_inv, bar_jj_inv = safe_inv(bar_ii, valid), safe_inv(bar_jj, valid)
    inverse = bar_ii_inv - (o_ii_inv + o_ii_inv @ o_ij @ bar_jj_inv @ o_ji @ o_ii_inv)
    cross = bar_ii_inv @ o_ij @ o_jj_inv - o_ii_inv @ o_ij @ bar_jj_inv
    full_inv = safe_inv(omega, valid)
    reassembly = _block(full_inv, i, i) - bar_ii_inv
    return (
        masked_max(np.abs(inverse).max(axis=(-2, -1)), valid),
        masked_max(np.abs(cross).max(axis=(-2, -1)), valid),
        masked_max(np.abs(reassembly).max(axis=(-2, -1)), valid),
    )


@dataclass(frozen=True)
class SplitData:
    """A two-step factorization of a transform and its comparison report."""

    parent: RibaucourData
    first_block: tuple[int, ...]
    second_block: tuple[int, ...]
    first: TransformResult | None
    bar: RibaucourData | None
    second: TransformResult | None
    direct: TransformResult
    composed: FieldK
    mask: np.ndarray
    report: Report

    @property
    def distance(self) -> float:
        return self.report.check("composition_distance").residual


def _split_blocks(
    m: int, split: int | Sequence[int], reverse: bool
) -> tuple[tuple[int, ...], tuple[int, ...]]:
    if isinstance(split, (int, np.integer)):
        if not 0 <= split <= m:
            raise GridError(f"Split dimension {split} outside 0..{m}")
        v1, v2 = tuple(range(split)), tuple(range(split, m))
        return (v2, v1) if reverse else (v1, v2)
    first = tuple(sorted(int(i) for i in split))
    if any(not 0 <= i < m for i in first) or len(set(first)) != len(first):
        raise GridError(f"Invalid block {first} for m={m}")
    rest = tuple(i for i in range(m) if i not in first)
    return (rest, first) if reverse else (first, rest)


def split_transform(
    parent: RibaucourData,
    split: int | Sequence[int],
    *,
    reverse: bool = False,
    direct: TransformResult | None = None,
    mask: np.ndarray | None = None,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> SplitData:
    """
    Factor the transform by ``parent`` into two successive transforms.

    ``split`` is either the dimension ``m₁`` of ``V₁`` (the first ``m₁``
    coordinates) or an explicit tuple of coordinates. The block ``V₁`` is
    applied first unless ``reverse`` is set.

    Raises:
        SingularOmegaError: ``Ω_jj`` or ``Ω̄_ii`` is singular on the whole mask.
    """
    j, i = _split_blocks(parent.m, split, reverse)
    base = parent.base
    h2 = base.grid.h2_max
    direct = direct or transform(parent, tolerances=tolerances)
    report = Report()
    scale = parent.scale * curvature_scale(base)
    comp_tol = tolerances.resolve("tol_comp", h2, scale)
    alg_tol = tolerances.resolve("tol_alg", 0.0, parent.scale**2)

    if not i or not j:
        common = direct.working_mask if mask is None else direct.working_mask & mask
        report.add_mask("common", common)
        report.add_check("composition_distance", 0.0, comp_tol, "trivial split")
        return SplitData(
            parent, j, i, None, None, None, direct, direct.tilde_f, common, report
        )

    logger.debug("Splitting m=%d transform: first %s then %s", parent.m, j, i)
    first_data = restrict_data(parent, j, tolerances=tolerances)
    if not first_data.working_mask.any():
        raise SingularOmegaError(location="Omega_jj")
    first = transform(first_data, tolerances=tolerances)
    bar = bar_data(parent, j, i, first, tolerances=tolerances)
    if not bar.working_mask.any():
        raise SingularOmegaError(location="bar Omega_ii")
    second = transform(bar, tolerances=tolerances)

    common = first.working_mask & second.working_mask & direct.working_mask
    if mask is not None:
        common &= mask
    report.add_mask("common", common)
    distance = np.abs(second.tilde_f.values - direct.tilde_f.values).max(axis=-1)
    report.add_check("composition_distance", masked_max(distance, common), comp_tol)

    o_jj_inv = first.data.omega_inv()
    expected_F = parent.F[..., list(i)] - parent.F[..., list(j)] @ o_jj_inv @ _block(
        parent.Omega.values, j, i
    )
    report.add_check(
        "barred_F_identity",
        masked_max(np.abs(bar.F - expected_F).max(axis=(-2, -1)), common),
        tolerances.resolve("tol_rel", h2, scale),
    )
    inverse, cross, reassembly = block_identity_residuals(
        parent.Omega.values, i, j, parent.working_mask, tolerances.kappa_max
    )
    report.add_check("block_inverse_identity", inverse, alg_tol)
    report.add_check("block_cross_identity", cross, alg_tol)
    report.add_check("block_reassembly", reassembly, alg_tol)
    return SplitData(
        parent, j, i, first, bar, second, direct, second.tilde_f, common, report
    )


def _stack(parts: Sequence[RibaucourData]) -> dict[str, np.ndarray]:
    return {
        "phi": np.concatenate([p.phi.values for p in parts], axis=-1),
        "beta": np.concatenate([p.beta for p in parts], axis=-1),
        "dphi": np.concatenate([p.dphi for p in parts], axis=-1),
        "dF": np.concatenate([p.dF for p in parts], axis=-1),
        "F": np.concatenate([p.F for p in parts], axis=-1),
    }


def combine_transforms(
    base: ImmersionData,
    parts: Sequence[RibaucourData],
    *,
    omega0_skew: np.ndarray | None = None,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> RibaucourData:
    """
    Assemble vectorial data from transforms of the same immersion.

    The off-diagonal blocks ``Ω_ij`` integrate ``ℱ_iᵗdℱ_j`` starting from
    ``ℱ_iᵗℱ_j / 2`` at the base node (plus ``omega0_skew`` when given), so
    ``Ω_ij + Ω_jiᵗ = ℱ_iᵗℱ_j`` holds there.

    Raises:
        CommutatorError: Codazzi tensors of two parts do not commute.
        ValidationError: The assembled Ω violates ``Ω + Ωᵗ = ℱᵗℱ``.
    """
    if not parts:
        raise GridError("At least one transform is required")
    if any(p.base.grid != base.grid for p in parts):
        raise GridError("All transforms must share the base grid")
    if len(parts) == 1 and omega0_skew is None:
        return parts[0]

    h2 = base.grid.h2_max
    mask = base.check_mask
    scale = max(p.scale for p in parts) * curvature_scale(base)
    tolerance = max(
        tolerances.resolve("tol_phi_commute", h2, scale),
        tolerances.resolve("tol_commute", 0.0, scale),
    )
    worst = 0.0
    for p, q in itertools.combinations(range(len(parts)), 2):
        for v in range(parts[p].m):
            for w in range(parts[q].m):
                a = parts[p].Phi[..., v, :, :]
                b = parts[q].Phi[..., w, :, :]
                residual = masked_max(frobenius(a @ b - b @ a), mask)
                if residual > tolerance:
                    raise CommutatorError(
                        pair=(p, q), residual=residual, tolerance=tolerance
                    )
                worst = max(worst, residual)

    stacked = _stack(parts)
    node = parts[0].base_node
    F0 = stacked["F"][node]
    omega0 = 0.5 * F0.T @ F0
    if omega0_skew is not None:
        skew = np.asarray(omega0_skew, dtype=float)
        if skew.shape != omega0.shape or np.abs(skew + skew.T).max() > 0.0:
            raise GridError("omega0_skew must be a skew matrix of matching size")
        omega0 = omega0 + skew
    data = build_data(
        base,
        FieldK(base.grid, stacked["phi"]),
        stacked["beta"],
        omega0,
        tolerances=tolerances,
        base_node=node,
        dphi=stacked["dphi"],
        dF=stacked["dF"],
    )
    data.report.add_check("pair_commutator", worst, tolerance)
    symmetric = data.report.check("omega_symmetric_part")
    if not symmetric.passed:
        raise ValidationError(
            check=symmetric.name,
            residual=symmetric.residual,
            tolerance=symmetric.tolerance,
        )
    logger.debug("Combined %d transforms into m=%d data", len(parts), data.m)
    return data


@dataclass(frozen=True)
class Quadrilateral:
    """Bianchi quadrilateral ``{f_bottom, f_left, f_right, f_top}``."""

    bottom: tuple[int, ...]
    left: tuple[int, ...]
    right: tuple[int, ...]
    top: tuple[int, ...]
    closure: float


@dataclass(frozen=True)
class CubeState:
    k: int
    data: RibaucourData
    families: tuple[tuple[tuple[int, ...], ...], ...]
    results: Mapping[tuple[int, ...], TransformResult]
    maps: Mapping[tuple[int, ...], FieldK]
    minors: Mapping[tuple[int, ...], float]
    edges: Mapping[tuple[tuple[int, ...], tuple[int, ...]], float]
    quadrilaterals: tuple[Quadrilateral, ...]
    mask: np.ndarray
    report: Report

    def incidence(self) -> list[dict]:
        """Edges ``α_j → α`` with their composition errors, for reports."""
        return [
            {"from": [i + 1 for i in low], "to": [i + 1 for i in high], "error": err}
            for (low, high), err in sorted(self.edges.items())
        ]


def check_independence(data: RibaucourData, tolerances: Tolerances) -> None:
    """φ spans ℝᵏ over the working nodes and ℱ is injective on each of them."""
    mask = data.working_mask
    if not mask.any():
        raise SingularOmegaError(location="assembled Omega")
    samples = data.phi.values[mask]
    if np.linalg.matrix_rank(samples) < data.m:
        raise IndependenceError(f"The values of phi do not span R^{data.m}")
    singular = np.linalg.svd(data.F, compute_uv=False)
    floor = tolerances.regular_floor * float(singular[mask].max())
    weakest = np.where(mask, singular[..., -1], np.inf)
    node = np.unravel_index(int(np.argmin(weakest)), weakest.shape)
    if weakest[node] <= floor:
        raise IndependenceError(
            f"F is not injective at node {tuple(int(i) for i in node)}"
        )


def principal_minors(
    data: RibaucourData, tolerances: Tolerances
) -> dict[tuple[int, ...], float]:
    """Smallest ``|det Ω_α|`` on the working mask per multi-index."""
    mask = data.working_mask
    floor = tolerances.minor_floor * tolerances.scale
    minors: dict[tuple[int, ...], float] = {}
    for r in range(1, data.m + 1):
        for alpha in itertools.combinations(range(data.m), r):
            det = np.abs(np.linalg.det(_block(data.Omega.values, alpha, alpha)))
            value = float(det[mask].min())
            minors[alpha] = value
            if value < floor:
                raise GenericityError(minor=alpha, value=value)
    return minors


def _pair_skew(
    k: int, pair_skews: Mapping[tuple[int, int], float] | None
) -> np.ndarray:
    skew = np.zeros((k, k))
    for (i, j), value in (pair_skews or {}).items():
        if not (0 <= i < j < k):
            raise GridError(f"Invalid pair {(i, j)} for k={k}")
        skew[i, j], skew[j, i] = value, -value
    return skew


def bianchi_cube(
    base: ImmersionData,
    scalars: Sequence[RibaucourData],
    *,
    pair_skews: Mapping[tuple[int, int], float] | None = None,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> CubeState:
    """
    Build the Bianchi k-cube of ``k`` scalar transforms of ``base``.

    ``pair_skews`` chooses the free constant of each pairwise ``Ω`` entry:
    at the base node ``Ω_ij = ⟨ℱ_i, ℱ_j⟩/2 + s`` and ``Ω_ji = ⟨ℱ_i, ℱ_j⟩/2 − s``.

    Raises:
        IndependenceError: φ does not span ℝᵏ or ℱ is not injective.
        GenericityError: A principal minor of Ω falls below the floor.
    """
    k = len(scalars)
    if any(s.m != 1 for s in scalars):
        raise GridError("Bianchi cubes are built from scalar transforms")
    skew = _pair_skew(k, pair_skews)
    data = combine_transforms(
        base, scalars, omega0_skew=skew if k > 1 else None, tolerances=tolerances
    )
    check_independence(data, tolerances)
    minors = principal_minors(data, tolerances)

    families = tuple(
        tuple(itertools.combinations(range(k), r)) for r in range(k + 1)
    )
    results: dict[tuple[int, ...], TransformResult] = {}
    restricted: dict[tuple[int, ...], RibaucourData] = {}
    for family in families[1:]:
        for alpha in family:
            restricted[alpha] = restrict_data(data, alpha, tolerances=tolerances)
            results[alpha] = transform(restricted[alpha], tolerances=tolerances)
            logger.debug("Cube transform %s computed", _label(alpha))
    mask = data.working_mask.copy()
    for result in results.values():
        mask &= result.working_mask

    maps: dict[tuple[int, ...], FieldK] = {(): base.f}
    maps.update({alpha: r.tilde_f for alpha, r in results.items()})

    report = Report()
    report.merge(data.report, "assembled.")
    report.add_mask("cube", mask)
    for alpha, result in results.items():
        report.add_mask(f"working {_label(alpha)}", result.working_mask)
    report.metrics["minors"] = {_label(a): v for a, v in minors.items()}
    sizes = [len(f) for f in families]
    expected = [math.comb(k, r) for r in range(k + 1)]
    report.metrics["family_sizes"] = sizes
    report.add_check(
        "family_sizes",
        float(sum(abs(a - b) for a, b in zip(sizes, expected))),
        0.0,
    )

    edges: dict[tuple[tuple[int, ...], tuple[int, ...]], float] = {}
    for family in families[1:]:
        for alpha in family:
            for dropped in alpha:
                low = tuple(i for i in alpha if i != dropped)
                if not low:
                    edges[(low, alpha)] = 0.0
                    continue
                positions = [alpha.index(i) for i in low]
                split = split_transform(
                    restricted[alpha],
                    positions,
                    direct=results[alpha],
                    mask=mask,
                    tolerances=tolerances,
                )
                edges[(low, alpha)] = split.distance

    h2 = base.grid.h2_max
    tol = tolerances.resolve("tol_comp", h2, data.scale * curvature_scale(base))
    quads: list[Quadrilateral] = []
    for family in families[2:]:
        for alpha in family:
            for a, b in itertools.combinations(alpha, 2):
                left = tuple(i for i in alpha if i != b)
                right = tuple(i for i in alpha if i != a)
                bottom = tuple(i for i in alpha if i not in (a, b))
                closure = max(
                    edges[(bottom, left)],
                    edges[(bottom, right)],
                    edges[(left, alpha)],
                    edges[(right, alpha)],
                )
                quads.append(Quadrilateral(bottom, left, right, alpha, closure))
    worst = max((q.closure for q in quads), default=0.0)
    report.add_check("quadrilateral_closure", worst, tol)
    report.metrics["quadrilaterals"] = [
        {
            "vertices": [
                _label(v) for v in (q.bottom, q.left, q.right, q.top)
            ],
            "closure": q.closure,
        }
        for q in quads
    ]

    state = CubeState(
        k=k,
        data=data,
        families=families,
        results=results,
        maps=maps,
        minors=minors,
        edges=edges,
        quadrilaterals=tuple(quads),
        mask=mask,
        report=report,
    )
    report.metrics["incidence"] = state.incidence()
    logger.info("Bianchi %d-cube built: %d quadrilaterals", k, len(quads))
    return state


@dataclass(frozen=True)
class ComposeResult:
    parent: RibaucourData
    bar_omega12: np.ndarray
    bar_omega21: np.ndarray
    sequential: TransformResult
    direct: TransformResult
    report: Report


def compose_sequential(
    first_result: TransformResult,
    bar_second: RibaucourData,
    *,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> ComposeResult:
    """
    Assemble parent data over ``f`` from a transform ``f₁`` of ``f`` and data
    ``(φ̄₂, β̄₂, Ω̄₂₂)`` over ``f₁``.

    The barred first block is the inverse data of ``f₁`` (``ℱ̄₁ = −ℱ₁Ω₁₁⁻¹``).
    ``Ω̄₁₂`` and ``Ω̄₂₁`` integrate ``ℱ̄₁ᵗdℱ̄₂`` and ``ℱ̄₂ᵗdℱ̄₁``
    from halves of ``ℱ̄₁ᵗℱ̄₂`` at the base node. The inverse of ``P₁`` is taken as ``P₁ᵗ``.

    Raises:
        CommutatorError: ``Φ̄²`` and ``Φ̄¹`` do not commute.
        ValidationError: The assembled triple fails a defining identity.
    """
    first = first_result.data
    bar_first = first_result.inverse_data
    f1 = first_result.tilde_im
    if bar_second.base.grid != f1.grid:
        raise GridError("Second data must live over the first transform")
    base = first.base
    grid = base.grid
    h2 = grid.h2_max
    m1, m2 = first.m, bar_second.m
    mask = first_result.working_mask & bar_second.working_mask
    scale = max(first.scale, bar_second.scale) * curvature_scale(base)
    report = Report()

    tolerance = max(
        tolerances.resolve("tol_phi_commute", h2, scale),
        tolerances.resolve("tol_commute", 0.0, scale),
    )
    worst = 0.0
    for v in range(m1):
        for w in range(m2):
            a = bar_first.Phi[..., v, :, :]
            b = bar_second.Phi[..., w, :, :]
            residual = masked_max(frobenius(a @ b - b @ a), mask)
            if residual > tolerance:
                raise CommutatorError(
                    pair=(v, m1 + w), residual=residual, tolerance=tolerance
                )
            worst = max(worst, residual)
    report.add_check("sequential_commutator", worst, tolerance)

    node = first.base_node
    F1, F2 = bar_first.F, bar_second.F
    rho12 = OneFormField(
        grid, tuple(transpose(F1) @ bar_second.dF[..., a, :, :] for a in range(grid.n))
    )
    rho21 = OneFormField(
        grid, tuple(transpose(F2) @ bar_first.dF[..., a, :, :] for a in range(grid.n))
    )
    cross = transpose(F1) @ F2
    bar12 = path_integrate(rho12, node, 0.5 * cross[node]).values
    bar21 = path_integrate(rho21, node, 0.5 * transpose(cross)[node]).values
    report.add_check(
        "bar_omega_symmetric_part",
        masked_max(np.abs(bar12 + transpose(bar21) - cross).max(axis=(-2, -1)), mask),
        tolerances.resolve("tol_sym", h2, scale),
    )

    omega11 = first.Omega.values
    phi1 = first.phi.values
    phi2 = bar_second.phi.values - matvec(bar21, phi1)
    beta2 = transpose(first_result.P) @ bar_second.beta_ambient - (
        first.beta_ambient @ transpose(bar21)
    )
    omega22 = bar_second.Omega.values - bar21 @ omega11 @ bar12
    omega12 = omega11 @ bar12
    omega21 = -bar21 @ omega11
    omega = np.concatenate(
        [
            np.concatenate([omega11, omega12], axis=-1),
            np.concatenate([omega21, omega22], axis=-1),
        ],
        axis=-2,
    )
    parent = from_triple(
        base,
        FieldK(grid, np.concatenate([phi1, phi2], axis=-1)),
        np.concatenate([first.beta, base.ambient_to_normal(beta2)], axis=-1),
        omega,
        base_node=node,
        restrict=first_result.working_mask & bar_second.invertible_mask,
        tolerances=tolerances,
        strict=False,
    )
    for name in ("codazzi", "omega_symmetric_part"):
        check = parent.report.check(name)
        if not check.passed:
            raise ValidationError(
                check=name, residual=check.residual, tolerance=check.tolerance
            )
    report.merge(parent.report, "parent.")

    expected_F2 = F2 - F1 @ omega11 @ bar12
    report.add_check(
        "F2_identity",
        masked_max(np.abs(parent.F[..., m1:] - expected_F2).max(axis=(-2, -1)), mask),
        tolerances.resolve("tol_rel", h2, scale),
    )
    direct = transform(parent, tolerances=tolerances)
    sequential = transform(bar_second, tolerances=tolerances)
    common = mask & direct.working_mask & sequential.working_mask
    report.add_mask("common", common)
    report.add_check(
        "sequential_distance",
        masked_max(
            np.abs(direct.tilde_f.values - sequential.tilde_f.values).max(axis=-1),
            common,
        ),
        tolerances.resolve("tol_comp", h2, scale),
    )
    return ComposeResult(parent, bar12, bar21, sequential, direct, report)


@dataclass(frozen=True)
class ChainResult:
    chained: FieldK
    steps: tuple[TransformResult, ...]
    direct: TransformResult
    report: Report


def scalar_chain(
    data: RibaucourData, *, tolerances: Tolerances = DEFAULT_TOLERANCES
) -> ChainResult:
    """Realize an m-dimensional transform as m successive scalar transforms."""
    direct = transform(data, tolerances=tolerances)
    steps: list[TransformResult] = []
    current = data
    while current.m > 1:
        first = transform(
            restrict_data(current, (0,), tolerances=tolerances),
            tolerances=tolerances,
        )
        steps.append(first)
        current = bar_data(
            current, (0,), tuple(range(1, current.m)), first, tolerances=tolerances
        )
        if not current.working_mask.any():
            raise SingularOmegaError(location=f"chain step {len(steps) + 1}")
    steps.append(transform(current, tolerances=tolerances))

    mask = direct.working_mask.copy()
    for step in steps:
        mask &= step.working_mask
    chained = steps[-1].tilde_f
    report = Report()
    report.add_mask("common", mask)
    report.add_check(
        "scalar_chain_distance",
        masked_max(np.abs(chained.values - direct.tilde_f.values).max(axis=-1), mask),
        tolerances.resolve(
            "tol_comp", data.base.grid.h2_max, data.scale * curvature_scale(data.base)
        )
        * len(steps),
    )
    return ChainResult(chained, tuple(steps), direct, report)
