"""Runners for ``construct-flat``, ``construct-subbundle`` and ``spherical``."""

from __future__ import annotations

import logging

from ribaucour.calculus.field import FieldK
from ribaucour.config import RunConfig
from ribaucour.constructions.construct import (
    FlatBundleSpec,
    SubbundleSpec,
    construct_flat,
    construct_spherical,
    construct_subbundle,
)
from ribaucour.runners.common import (
    MeshArtifact,
    RunOutcome,
    grid_of,
    immersion_mesh,
    parse_base,
    parse_matrix,
    parse_potentials,
    parse_sample,
    parse_skew,
    require,
)

logger = logging.getLogger(__name__)


def _flat_spec(config: RunConfig) -> FlatBundleSpec:
    grid = grid_of(config)
    potentials = parse_potentials(config, grid)
    return FlatBundleSpec(
        grid=grid,
        potentials=potentials,
        omega0_skew=parse_skew(config.payload, len(potentials)),
        sample=parse_sample(config.payload, grid.n),
        base_node=config.base_node,
    )


def run_construct_flat(config: RunConfig) -> RunOutcome:
    result = construct_flat(_flat_spec(config), tolerances=config.tolerances)
    mask = result.data.invertible_mask
    return RunOutcome(
        report=result.report,
        fields={
            "immersion": result.immersion.f,
            "statement_map": result.statement_map,
            "omega": result.data.Omega,
        },
        meshes={"immersion": immersion_mesh(result.immersion, mask)},
    )


def run_construct_subbundle(config: RunConfig) -> RunOutcome:
    payload = config.payload
    grid = grid_of(config)
    base = parse_base(config, grid)
    potentials = parse_potentials(config, grid)
    m = len(potentials)
    betas = parse_matrix(
        require(payload, "betas"), grid, (base.value_shape[0], m), "payload.betas"
    )
    spec = SubbundleSpec(
        base=base,
        potentials=potentials,
        betas=betas,
        omega0_skew=parse_skew(payload, m),
        base_node=config.base_node,
    )
    result = construct_subbundle(spec, tolerances=config.tolerances)
    return RunOutcome(
        report=result.report,
        fields={
            "immersion": result.immersion.f,
            "subbundle": FieldK(grid, result.subbundle),
            "omega": result.data.Omega,
        },
        meshes={
            "immersion": immersion_mesh(
                result.immersion, result.data.invertible_mask
            )
        },
    )


def run_spherical(config: RunConfig) -> RunOutcome:
    result = construct_spherical(_flat_spec(config), tolerances=config.tolerances)
    mask = result.flat.data.invertible_mask
    meshes: dict[str, MeshArtifact] = {}
    for j, column_im in enumerate(result.immersions):
        if column_im is not None:
            meshes[f"column_{j + 1}"] = immersion_mesh(column_im, mask)
    return RunOutcome(
        report=result.report,
        fields={"W": result.W, "omega": result.flat.data.Omega},
        meshes=meshes,
    )
