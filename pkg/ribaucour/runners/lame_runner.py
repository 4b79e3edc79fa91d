"""Runner for ``ferapontov``: Lamé system, potentials and the spherical frame."""

from __future__ import annotations

import logging

from ribaucour.calculus.field import FieldK
from ribaucour.config import RunConfig, read_json_document
from ribaucour.constructions.lame import (
    assemble,
    initial_data_from_json,
    solve_system,
)
from ribaucour.exceptions import ConfigError
from ribaucour.reports import Report
from ribaucour.runners.common import (
    MeshArtifact,
    RunOutcome,
    grid_of,
    immersion_mesh,
    parse_skew,
)

logger = logging.getLogger(__name__)


def run_ferapontov(config: RunConfig) -> RunOutcome:
    payload = config.payload
    grid = grid_of(config)
    if "initial_file" in payload:
        document = read_json_document(config.resolve_path(payload["initial_file"]))
        location = "payload.initial_file"
    elif "initial" in payload:
        document, location = payload["initial"], "payload.initial"
    else:
        raise ConfigError("Missing initial data", location="payload.initial")
    initial = initial_data_from_json(document, grid.n, location)

    system, system_report = solve_system(
        initial, grid, base_node=config.base_node, tolerances=config.tolerances
    )
    result = assemble(
        system,
        omega0_skew=parse_skew(payload, system.m),
        tolerances=config.tolerances,
    )
    report = Report(command="ferapontov")
    report.merge(system_report)
    report.merge(result.report)

    meshes: dict[str, MeshArtifact] = {}
    for j, column_im in enumerate(result.immersions):
        if column_im is not None:
            meshes[f"column_{j + 1}"] = immersion_mesh(column_im, result.working_mask)
    return RunOutcome(
        report=report,
        fields={
            "W": result.W,
            "omega": result.omega,
            "beta": FieldK(grid, system.beta),
            "H": FieldK(grid, system.H),
            "X": FieldK(grid, system.X),
        },
        meshes=meshes,
    )
