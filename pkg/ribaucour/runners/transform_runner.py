"""Runners for ``transform``, ``compose`` and ``cube``."""

from __future__ import annotations

import logging
from typing import Any, Sequence

import numpy as np

from ribaucour.calculus.field import FieldK, Grid
from ribaucour.config import RunConfig
from ribaucour.constructions.construct import Potential, potential_jets
from ribaucour.exceptions import ConfigError
from ribaucour.geometry.frame import ImmersionData
from ribaucour.reports import Report
from ribaucour.runners.common import (
    RunOutcome,
    analyze_base,
    grid_of,
    immersion_mesh,
    parse_base,
    parse_constant_matrix,
    parse_matrix,
    parse_potentials,
    require,
)
from ribaucour.transforms.permute import (
    bianchi_cube,
    compose_sequential,
    scalar_chain,
    split_transform,
)
from ribaucour.transforms.ribaucour import (
    RibaucourData,
    build_data,
    invert,
    transform,
    verify_prop12,
)

logger = logging.getLogger(__name__)


def _data(
    config: RunConfig,
    base: ImmersionData,
    potentials: Sequence[Potential],
    beta: np.ndarray,
    omega0: np.ndarray | None = None,
) -> RibaucourData:
    grid = base.grid
    phi, gradients, _ = potential_jets(potentials, grid)
    return build_data(
        base,
        FieldK(grid, phi),
        beta,
        omega0,
        tolerances=config.tolerances,
        base_node=config.base_node,
        dphi=gradients,
    )


def _setup(
    config: RunConfig, beta_key: str
) -> tuple[Grid, ImmersionData, tuple[Potential, ...], np.ndarray]:
    grid = grid_of(config)
    base = analyze_base(config, parse_base(config, grid))
    potentials = parse_potentials(config, grid)
    beta = parse_matrix(
        require(config.payload, beta_key),
        grid,
        (base.codim, len(potentials)),
        f"payload.{beta_key}",
    )
    return grid, base, potentials, beta


def _omega0(payload: Any, m: int) -> np.ndarray | None:
    if payload.get("omega0") is None:
        return None
    return parse_constant_matrix(payload["omega0"], (m, m), "payload.omega0")


def run_transform(config: RunConfig) -> RunOutcome:
    grid, base, potentials, beta = _setup(config, "beta")
    data = _data(
        config, base, potentials, beta, _omega0(config.payload, len(potentials))
    )
    result = transform(data, tolerances=config.tolerances)
    relations = verify_prop12(data, result, tolerances=config.tolerances)
    recovered, inverse_report = invert(result, tolerances=config.tolerances)

    report = Report(command="transform")
    report.merge(data.report, "data.")
    report.merge(result.report, "transform.")
    report.merge(relations, "relations.")
    report.merge(inverse_report, "inverse.")
    return RunOutcome(
        report=report,
        fields={
            "transformed": result.tilde_f,
            "recovered": recovered,
            "omega": data.Omega,
        },
        meshes={"transformed": immersion_mesh(result.tilde_im, result.working_mask)},
    )


def _split_arg(value: Any, m: int) -> int | tuple[int, ...]:
    if isinstance(value, bool):
        raise ConfigError("Expected an integer or index list", location="payload.split")
    if isinstance(value, int):
        return value
    if isinstance(value, list) and all(isinstance(i, int) for i in value):
        return tuple(i - 1 for i in value)
    raise ConfigError("Expected an integer or index list", location="payload.split")


def run_compose(config: RunConfig) -> RunOutcome:
    """
    Both split orders, the sequential re-assembly and, on request, the
    scalar chain of one vectorial transform.
    """
    payload = config.payload
    tolerances = config.tolerances
    grid, base, potentials, beta = _setup(config, "beta")
    m = len(potentials)
    data = _data(config, base, potentials, beta, _omega0(payload, m))
    split = _split_arg(payload.get("split", m // 2), m)

    forward = split_transform(data, split, tolerances=tolerances)
    backward = split_transform(
        data, split, reverse=True, direct=forward.direct, tolerances=tolerances
    )
    report = Report(command="compose")
    report.merge(data.report, "data.")
    report.merge(forward.direct.report, "direct.")
    report.merge(forward.report, "split.")
    report.merge(backward.report, "split_reverse.")
    fields = {"direct": forward.direct.tilde_f, "composed": forward.composed}

    if forward.first is not None:
        composed = compose_sequential(forward.first, forward.bar, tolerances=tolerances)
        report.merge(composed.report, "sequential.")
    else:
        report.notes.append("trivial split: sequential assembly skipped")
    if payload.get("chain", False):
        chain = scalar_chain(data, tolerances=tolerances)
        report.merge(chain.report, "chain.")
        fields["chained"] = chain.chained
    return RunOutcome(
        report=report,
        fields=fields,
        meshes={
            "direct": immersion_mesh(
                forward.direct.tilde_im, forward.direct.working_mask
            )
        },
    )


def _pair_skews(value: Any, k: int) -> dict[tuple[int, int], float]:
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigError("Expected an object", location="payload.pair_skews")
    skews = {}
    for key, skew in value.items():
        try:
            i, j = (int(p) - 1 for p in key.split(","))
        except ValueError as exc:
            raise ConfigError(
                f"Pair keys look like '1,2', got {key!r}",
                location="payload.pair_skews",
                cause=exc,
            ) from exc
        if not 0 <= i < j < k:
            raise ConfigError(
                f"Invalid pair {key!r} for k={k}", location="payload.pair_skews"
            )
        if isinstance(skew, bool) or not isinstance(skew, (int, float)):
            raise ConfigError("Expected a number", location=f"payload.pair_skews.{key}")
        skews[(i, j)] = float(skew)
    return skews


def run_cube(config: RunConfig) -> RunOutcome:
    grid, base, potentials, beta = _setup(config, "betas")
    k = len(potentials)
    scalars = [
        _data(config, base, potentials[i : i + 1], beta[..., i : i + 1])
        for i in range(k)
    ]
    cube = bianchi_cube(
        base,
        scalars,
        pair_skews=_pair_skews(config.payload.get("pair_skews"), k),
        tolerances=config.tolerances,
    )
    report = Report(command="cube")
    report.merge(cube.report)
    fields = {
        "map_" + "_".join(str(i + 1) for i in alpha): f
        for alpha, f in cube.maps.items()
        if alpha
    }
    meshes = {
        "map_" + "_".join(str(i + 1) for i in alpha): immersion_mesh(
            result.tilde_im, cube.mask
        )
        for alpha, result in cube.results.items()
    }
    return RunOutcome(report=report, fields=fields, meshes=meshes)
