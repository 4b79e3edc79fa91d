"""Runner for ``dupin``."""

from __future__ import annotations

import logging

from ribaucour.config import RunConfig
from ribaucour.constructions.dupin import DupinSpec, construct_dupin
from ribaucour.runners.common import (
    RunOutcome,
    grid_of,
    immersion_mesh,
    parse_base,
    parse_constant_matrix,
    parse_matrix,
    parse_potentials,
    parse_skew,
    parse_subgrid,
    require,
)

logger = logging.getLogger(__name__)


def run_dupin(config: RunConfig) -> RunOutcome:
    """
    Build the family over the product of the run grid and ``payload.t_domain``.

    The family is exported as a mesh only when the product grid has at most
    three parameters.
    """
    payload = config.payload
    grid = grid_of(config)
    base = parse_base(config, grid)
    potentials = parse_potentials(config, grid)
    t_grid = parse_subgrid(payload, "t_domain")
    m = 0 if t_grid is None else t_grid.n
    betas = parse_matrix(
        require(payload, "betas"), grid, (base.value_shape[0], m + 1), "payload.betas"
    )
    offset = None
    if payload.get("beta0_offset") is not None:
        offset = parse_constant_matrix(
            payload["beta0_offset"], (m,), "payload.beta0_offset"
        )
    spec = DupinSpec(
        base=base,
        potentials=potentials,
        betas=betas,
        t_grid=t_grid,
        beta0_offset=offset,
        omega0_skew=parse_skew(payload, m + 1),
        base_node=config.base_node,
    )
    result = construct_dupin(spec, tolerances=config.tolerances)
    meshes = {}
    if result.family_im is not None and result.family.grid.n <= 3:
        meshes["family"] = immersion_mesh(result.family_im)
    else:
        logger.debug("Family is not meshable, skipping export")
    return RunOutcome(
        report=result.report,
        fields={"family": result.family, "omega": result.data.Omega},
        meshes=meshes,
    )
