"""
Extrinsic geometry of a sampled immersion.

Background:
    An immersion is given by its samples ``f: grid -> ℝ^N``. From them we
    derive, node by node, the Jacobian, induced metric, an orthonormal normal
    frame, the second fundamental form ``alpha_b[a, c] = ⟨∂_a ∂_c f, ξ_b⟩``,
    the shape operators ``A_b = g⁻¹ alpha_b`` and the normal connection
    coefficients ``nconn[a, b, c] = ⟨∂_a ξ_b, ξ_c⟩``.

Normal frame convention:
    At a reference node (the base node when regular, otherwise the first
    regular node in canonical order) the standard basis vectors are ranked by
    the length of their component normal to the tangent space, greedily and
    with ties broken by ascending index; the chosen ``N − n`` seed indices are
    then orthonormalized in ascending order at every node, projecting out the
    tangent space and the previous normals. The resulting column has positive
    entry at its own seed index. Using one seed set for the whole grid keeps
    the frame smooth wherever the seed components do not vanish. Nodes where
    a seed residual collapses below ``_SEED_FLOOR`` stay regular (regularity
    is a property of the Jacobian alone) but drop out of ``frame_mask`` and
    therefore out of ``check_mask``.

Known Limitations:
    - Only parameter-domain presentations (coordinates on a box).
    - Second derivatives lose one order at the boundary layers; residual
      checks use ``check_mask`` (regular nodes at least ``boundary_margin``
      layers inside the box).
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from ribaucour.calculus.field import FieldK, Grid, diff_array
from ribaucour.calculus.linalg import (
    eye_like,
    frobenius,
    masked_max,
    safe_inv,
    transpose,
)
from ribaucour.config import DEFAULT_TOLERANCES, Tolerances
from ribaucour.exceptions import GridError, NoRegularNodeError

logger = logging.getLogger(__name__)

_SEED_FLOOR = 1e-3
# constant maps have exactly zero finite differences
_ABSOLUTE_FLOOR = 1e-12


@dataclass(frozen=True)
class ShapeOperators:
    """Shape operators ``A_b = metric⁻¹ alpha_b``, shape ``res + (N−n, n, n)``."""

    operators: np.ndarray

    def self_adjointness_residual(self, metric: np.ndarray, mask: np.ndarray) -> float:
        g_a = metric[..., None, :, :] @ self.operators
        return masked_max(np.abs(g_a - transpose(g_a)).max(axis=(-3, -2, -1)), mask)


@dataclass(frozen=True)
class ImmersionData:
    """Sampled immersion plus its derived frame data (arrays lead with ``grid.res``)."""

    grid: Grid
    f: FieldK
    jac: np.ndarray
    metric: np.ndarray
    metric_inv: np.ndarray
    normal_frame: np.ndarray
    alpha: np.ndarray
    nconn: np.ndarray
    hess_f: np.ndarray
    singular_values: np.ndarray
    regular_mask: np.ndarray
    interior_mask: np.ndarray
    normal_seeds: tuple[int, ...]
    frame_mask: np.ndarray

    @property
    def dim(self) -> int:
        return self.grid.n

    @property
    def ambient_dim(self) -> int:
        return self.f.value_shape[0]

    @property
    def codim(self) -> int:
        return self.ambient_dim - self.dim

    @property
    def framed_mask(self) -> np.ndarray:
        """Regular nodes whose normal frame is well defined."""
        return self.regular_mask & self.frame_mask

    @property
    def check_mask(self) -> np.ndarray:
        return self.framed_mask & self.interior_mask

    def shape_operators(self) -> ShapeOperators:
        return ShapeOperators(self.metric_inv[..., None, :, :] @ self.alpha)

    def normal_to_ambient(self, coeffs: np.ndarray) -> np.ndarray:
        """Normal-frame coefficients ``res + (N−n, m)`` to ambient ``res + (N, m)``."""
        return self.normal_frame @ coeffs

    def ambient_to_normal(self, vectors: np.ndarray) -> np.ndarray:
        return transpose(self.normal_frame) @ vectors

    def normal_projector(self) -> np.ndarray:
        return self.normal_frame @ transpose(self.normal_frame)

    def tangent_coordinates(self, vectors: np.ndarray) -> np.ndarray:
        """Coordinates in ``∂_1..∂_n`` of the tangential part of ambient vectors."""
        return self.metric_inv @ (transpose(self.jac) @ vectors)


def gram_schmidt(vectors: np.ndarray) -> np.ndarray:
    """Column-wise Gram-Schmidt of stacks ``... × N × k``; continuous in the input."""
    columns: list[np.ndarray] = []
    for j in range(vectors.shape[-1]):
        v = vectors[..., j]
        for q in columns:
            v = v - np.sum(q * v, axis=-1, keepdims=True) * q
        length = np.linalg.norm(v, axis=-1, keepdims=True)
        columns.append(v / np.maximum(length, 1e-300))
    return np.stack(columns, axis=-1)


def _choose_seeds(jac_q: np.ndarray, count: int) -> tuple[int, ...]:
    ambient = jac_q.shape[0]
    basis = np.eye(ambient)
    span = jac_q.copy()
    chosen: list[int] = []
    for _ in range(count):
        residual = basis - span @ (span.T @ basis)
        lengths = np.linalg.norm(residual, axis=0)
        lengths[chosen] = -1.0
        best = int(np.argmax(lengths))
        chosen.append(best)
        span = np.column_stack([span, residual[:, best] / lengths[best]])
    return tuple(sorted(chosen))


def _reference_node(regular: np.ndarray, preferred: Sequence[int]) -> tuple[int, ...]:
    if regular[tuple(preferred)]:
        return tuple(preferred)
    return tuple(int(i) for i in np.argwhere(regular)[0])


def analyze(
    f: FieldK,
    grid: Grid | None = None,
    *,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
    reference: Sequence[int] | None = None,
    seeds: Sequence[int] | None = None,
) -> ImmersionData:
    """
    Derive Jacobian, metric, normal frame, second fundamental form and normal
    connection of a sampled immersion.

    Args:
        f: Field into ℝ^N on an n-dimensional grid.
        grid: Parameter grid; defaults to ``f.grid``.
        tolerances: Supplies the regularity floor and boundary margin.
        reference: Node used to pick the normal-frame seeds (default: centre).
        seeds: Explicit seed indices, skipping the automatic choice.

    Raises:
        GridError: N < n or the field is not vector valued.
        NoRegularNodeError: The differential is rank deficient everywhere.
    """
    grid = grid or f.grid
    if len(f.value_shape) != 1:
        raise GridError("An immersion must be vector valued")
    n, ambient = grid.n, f.value_shape[0]
    if ambient < n:
        raise GridError(f"Ambient dimension {ambient} is smaller than {n}")

    first = [diff_array(f.values, grid, a) for a in range(n)]
    jac = np.stack(first, axis=-1)
    singular_values = np.linalg.svd(jac, compute_uv=False)
    largest = float(singular_values.max())
    floor = max(tolerances.regular_floor * largest, _ABSOLUTE_FLOOR)
    regular = singular_values[..., -1] >= floor
    if not regular.any():
        raise NoRegularNodeError()

    metric = transpose(jac) @ jac
    metric_inv = safe_inv(metric, regular)

    tangent_q, _ = np.linalg.qr(jac)
    reference = _reference_node(regular, reference or grid.center_index)
    if seeds is None:
        seeds = _choose_seeds(tangent_q[reference], ambient - n)
    seeds = tuple(sorted(seeds))
    logger.debug("Normal frame seeds %s chosen at node %s", seeds, reference)

    columns: list[np.ndarray] = []
    framed = np.ones(grid.res, dtype=bool)
    span = tangent_q
    for seed in seeds:
        e = np.zeros(ambient)
        e[seed] = 1.0
        residual = e - (span @ span[..., seed, :][..., None])[..., 0]
        length = np.linalg.norm(residual, axis=-1)
        framed &= length >= _SEED_FLOOR
        column = residual / np.maximum(length, 1e-300)[..., None]
        columns.append(column)
        span = np.concatenate([span, column[..., None]], axis=-1)
    if columns:
        normal_frame = np.stack(columns, axis=-1)
    else:
        normal_frame = np.zeros(grid.res + (ambient, 0))
    if not (regular & framed).any():
        raise NoRegularNodeError("Normal frame degenerates on every regular node")
    if not framed[regular].all():
        logger.debug(
            "Normal frame seeds %s degenerate on %d regular nodes",
            seeds,
            int((regular & ~framed).sum()),
        )

    second = np.stack(
        [
            np.stack([diff_array(first[a], grid, c) for c in range(n)], axis=-2)
            for a in range(n)
        ],
        axis=-3,
    )
    hess_f = 0.5 * (second + np.swapaxes(second, -2, -3))
    alpha = np.einsum("...kb,...ack->...bac", normal_frame, hess_f)

    nconn = np.stack(
        [
            transpose(diff_array(normal_frame, grid, a)) @ normal_frame
            for a in range(n)
        ],
        axis=-3,
    )

    logger.debug(
        "Analyzed immersion into R^%d: %d of %d nodes regular",
        ambient,
        int(regular.sum()),
        grid.size,
    )
    return ImmersionData(
        grid=grid,
        f=f,
        jac=jac,
        metric=metric,
        metric_inv=metric_inv,
        normal_frame=normal_frame,
        alpha=alpha,
        nconn=nconn,
        hess_f=hess_f,
        singular_values=singular_values,
        regular_mask=regular,
        interior_mask=grid.interior_mask(tolerances.boundary_margin),
        normal_seeds=seeds,
        frame_mask=framed,
    )


def _orthonormal_operators(im: ImmersionData, alpha: np.ndarray) -> np.ndarray:
    """Second fundamental forms in a metric-orthonormal tangent basis."""
    metric = np.where(im.regular_mask[..., None, None], im.metric, eye_like(im.metric))
    lower = np.linalg.cholesky(metric)
    lower_inv = np.linalg.inv(lower)[..., None, :, :]
    return lower_inv @ alpha @ transpose(lower_inv)


def _commutator_max(ops: np.ndarray, mask: np.ndarray) -> float:
    worst = 0.0
    for b, c in itertools.combinations(range(ops.shape[-3]), 2):
        a_b, a_c = ops[..., b, :, :], ops[..., c, :, :]
        worst = max(worst, masked_max(frobenius(a_b @ a_c - a_c @ a_b), mask))
    return worst


def curvature_scale(im: ImmersionData) -> float:
    """``max(1, max |A_b|²)`` over the check mask; scales flatness tolerances."""
    ops = _orthonormal_operators(im, im.alpha)
    if ops.shape[-3] == 0:
        return 1.0
    return max(1.0, masked_max(frobenius(ops).max(axis=-1), im.check_mask) ** 2)


def flat_normal_bundle_residual(im: ImmersionData) -> float:
    """
    Max Frobenius norm of ``[A_b, A_b']`` over checked nodes and normal pairs.

    Operators are taken in a metric-orthonormal tangent basis, so the value
    does not depend on the parametrization's metric distortion.
    """
    return _commutator_max(_orthonormal_operators(im, im.alpha), im.check_mask)


def parallel_subbundle_residual(
    im: ImmersionData,
    cols: Sequence[int] | None = None,
    *,
    sections: np.ndarray | None = None,
) -> float:
    """
    Parallelism plus flatness defect of a normal subbundle.

    The subbundle is either spanned by normal-frame columns ``cols`` or by
    ambient ``sections`` (shape ``res + (N, k)``, projected to the normal
    space and orthonormalized). The residual is the largest normal-connection
    component leaving the subbundle plus the flat-bundle residual of the
    shape operators restricted to it.
    """
    mask = im.check_mask
    if sections is None:
        if not cols:
            raise ValueError("cols must be non-empty")
        inside = list(cols)
        outside = [c for c in range(im.codim) if c not in inside]
        leak = 0.0
        if outside:
            block = im.nconn[..., inside, :][..., outside]
            leak = masked_max(np.abs(block).max(axis=(-3, -2, -1)), mask)
        alpha = im.alpha[..., inside, :, :]
    else:
        basis = gram_schmidt(im.normal_projector() @ sections)
        outside_projector = im.normal_projector() - basis @ transpose(basis)
        leak = 0.0
        for a in range(im.dim):
            moved = outside_projector @ diff_array(basis, im.grid, a)
            leak = max(leak, masked_max(np.abs(moved).max(axis=(-2, -1)), mask))
        weights = transpose(im.normal_frame) @ basis
        alpha = np.einsum("...bk,...bac->...kac", weights, im.alpha)
    flat = _commutator_max(_orthonormal_operators(im, alpha), mask)
    return leak + flat


def gauss_curvature_residual(im: ImmersionData) -> float:
    """
    Compare intrinsic and extrinsic Gauss curvature of a surface (n = 2).

    The intrinsic side uses the Brioschi formula on finite differences of
    the metric; the extrinsic side is ``Σ_b det(alpha_b) / det(g)``.
    """
    if im.dim != 2:
        raise GridError("Gauss curvature comparison needs a 2-dimensional grid")
    grid = im.grid
    e, f_, g = im.metric[..., 0, 0], im.metric[..., 0, 1], im.metric[..., 1, 1]

    def d(x: np.ndarray, axis: int) -> np.ndarray:
        return diff_array(x, grid, axis)

    e_u, e_v = d(e, 0), d(e, 1)
    f_u, f_v = d(f_, 0), d(f_, 1)
    g_u, g_v = d(g, 0), d(g, 1)
    e_vv, g_uu, f_uv = d(e_v, 1), d(g_u, 0), d(f_u, 1)

    first = np.stack(
        [
            np.stack([-0.5 * e_vv + f_uv - 0.5 * g_uu, 0.5 * e_u, f_u - 0.5 * e_v], -1),
            np.stack([f_v - 0.5 * g_u, e, f_], -1),
            np.stack([0.5 * g_v, f_, g], -1),
        ],
        axis=-2,
    )
    zero = np.zeros_like(e)
    second = np.stack(
        [
            np.stack([zero, 0.5 * e_v, 0.5 * g_u], -1),
            np.stack([0.5 * e_v, e, f_], -1),
            np.stack([0.5 * g_u, f_, g], -1),
        ],
        axis=-2,
    )
    det_g = e * g - f_ * f_
    safe_det = np.where(im.regular_mask, det_g, 1.0)
    intrinsic = (np.linalg.det(first) - np.linalg.det(second)) / safe_det**2
    extrinsic = np.linalg.det(im.alpha).sum(axis=-1) / safe_det
    # the Brioschi formula differentiates the metric twice
    mask = im.framed_mask & grid.interior_mask(3)
    return masked_max(np.abs(intrinsic - extrinsic), mask)


def rotate_normal_frame(im: ImmersionData, rotation: np.ndarray) -> ImmersionData:
    """Right-multiply the normal frame by a constant orthogonal matrix."""
    rotation = np.asarray(rotation, dtype=float)
    if rotation.shape != (im.codim, im.codim):
        raise GridError(f"Rotation must be {im.codim}x{im.codim}")
    alpha = np.einsum("bk,...bac->...kac", rotation, im.alpha)
    nconn = np.einsum("bk,cl,...abc->...akl", rotation, rotation, im.nconn)
    return replace(
        im, normal_frame=im.normal_frame @ rotation, alpha=alpha, nconn=nconn
    )


def metric_residual(im: ImmersionData, expected: np.ndarray) -> float:
    """Max entry of ``|metric − expected|`` over checked nodes."""
    return masked_max(np.abs(im.metric - expected).max(axis=(-2, -1)), im.check_mask)
