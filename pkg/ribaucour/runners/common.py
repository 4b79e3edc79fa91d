"""
Shared payload parsing and the run outcome container.

Payload values that name potentials or matrices accept numbers and
expression strings in ``u1..un``; expression errors surface as
:class:`~ribaucour.exceptions.ConfigError` with the payload key path.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from ribaucour.calculus.expr import Expression, parse
from ribaucour.calculus.field import FieldK, Grid, sample
from ribaucour.config import RunConfig, parse_domain, read_json_document
from ribaucour.constructions.construct import Potential, flat_inclusion
from ribaucour.exceptions import ConfigError, RibaucourError
from ribaucour.geometry.frame import ImmersionData, analyze
from ribaucour.reports import Report
from ribaucour.serialization import field_from_json

logger = logging.getLogger(__name__)


@dataclass
class MeshArtifact:
    field: FieldK
    mask: np.ndarray | None = None
    point_data: dict[str, np.ndarray] = field(default_factory=dict)


@dataclass
class RunOutcome:
    """Report plus the artifacts a run asks to have written."""

    report: Report
    fields: dict[str, FieldK] = field(default_factory=dict)
    meshes: dict[str, MeshArtifact] = field(default_factory=dict)


def immersion_mesh(im: ImmersionData, mask: np.ndarray | None = None) -> MeshArtifact:
    """Mesh of an analyzed immersion restricted to its regular nodes."""
    export = im.regular_mask if mask is None else im.regular_mask & mask
    return MeshArtifact(
        field=im.f,
        mask=export,
        point_data={"smallest_singular_value": im.singular_values[..., -1]},
    )


# =============================================================================
# Payload values
# =============================================================================


def require(payload: Any, key: str, location: str = "payload") -> Any:
    if key not in payload:
        raise ConfigError("Missing key", location=f"{location}.{key}")
    return payload[key]


def parse_expression(source: Any, n: int, location: str) -> Expression:
    if not isinstance(source, str):
        raise ConfigError("Expected an expression string", location=location)
    try:
        return parse(source, n)
    except RibaucourError as exc:
        raise ConfigError(str(exc), location=location, cause=exc) from exc


def load_field(config: RunConfig, key: str, location: str | None = None) -> FieldK:
    """Field cache referenced by ``payload[key]`` (a path relative to the config)."""
    location = location or f"payload.{key}"
    document = read_json_document(config.resolve_path(config.payload[key]))
    return field_from_json(document, location=location)


def grid_of(config: RunConfig) -> Grid:
    try:
        return config.domain.grid()
    except RibaucourError as exc:
        raise ConfigError(str(exc), location="domain", cause=exc) from exc


def parse_potentials(
    config: RunConfig, grid: Grid, key: str = "potentials"
) -> tuple[Potential, ...]:
    """
    Potentials from ``payload[key]`` (expression list) or ``payload[key_file]``.

    A file holds one field cache with value shape ``(m,)``.
    """
    payload = config.payload
    file_key = f"{key}_file"
    if file_key in payload:
        cache = load_field(config, file_key)
        if cache.grid != grid or len(cache.value_shape) != 1:
            raise ConfigError(
                "Potential cache must hold an m-vector field on the run grid",
                location=f"payload.{file_key}",
            )
        return tuple(
            FieldK(grid, cache.values[..., i]) for i in range(cache.value_shape[0])
        )
    sources = require(payload, key)
    if not isinstance(sources, list) or not sources:
        raise ConfigError(
            "Expected a non-empty list of expressions", location=f"payload.{key}"
        )
    return tuple(
        parse_expression(source, grid.n, f"payload.{key}[{i}]")
        for i, source in enumerate(sources)
    )


def _entry_values(value: Any, grid: Grid, location: str) -> np.ndarray:
    if isinstance(value, bool):
        raise ConfigError("Expected a number or expression", location=location)
    if isinstance(value, (int, float)):
        return np.full(grid.res, float(value))
    return sample(parse_expression(value, grid.n, location), grid).values


def parse_matrix(
    value: Any, grid: Grid, shape: tuple[int, int], location: str
) -> np.ndarray:
    """
    A constant or expression-valued matrix, returned as ``res + shape``.

    Entries may be numbers or expression strings; a plain numeric matrix is
    broadcast unchanged.
    """
    rows, cols = shape
    if not isinstance(value, list) or len(value) != rows:
        raise ConfigError(f"Expected a {rows}x{cols} matrix", location=location)
    out = np.zeros(grid.res + shape)
    for r, row in enumerate(value):
        if not isinstance(row, list) or len(row) != cols:
            raise ConfigError(
                f"Expected {cols} entries", location=f"{location}[{r}]"
            )
        for c, entry in enumerate(row):
            out[..., r, c] = _entry_values(entry, grid, f"{location}[{r}][{c}]")
    return out


def parse_constant_matrix(
    value: Any, shape: tuple[int, ...], location: str
) -> np.ndarray:
    try:
        matrix = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError("Expected a numeric matrix", location=location) from exc
    if matrix.shape != shape:
        raise ConfigError(
            f"Expected shape {shape}, got {matrix.shape}", location=location
        )
    return matrix


def parse_skew(payload: Any, m: int) -> np.ndarray | None:
    if payload.get("omega0_skew") is None:
        return None
    return parse_constant_matrix(
        payload["omega0_skew"], (m, m), "payload.omega0_skew"
    )


def parse_sample(payload: Any, n: int) -> np.ndarray | None:
    if payload.get("sample") is None:
        return None
    points = np.asarray(payload["sample"], dtype=float)
    if points.ndim != 2 or points.shape[1] != n or not len(points):
        raise ConfigError(
            f"Sample must be a list of {n}-vectors", location="payload.sample"
        )
    return points


def parse_base(config: RunConfig, grid: Grid) -> FieldK:
    """
    Base immersion from ``payload.base`` or ``payload.base_file``.

    ``{"kind": "inclusion", "ambient": N}`` is the flat inclusion of the box
    into ``ℝᴺ``; ``{"kind": "expressions", "components": [...]}`` samples
    one expression per ambient coordinate.
    """
    payload = config.payload
    if "base_file" in payload:
        base = load_field(config, "base_file")
        if base.grid != grid or len(base.value_shape) != 1:
            raise ConfigError(
                "Base cache must hold a vector field on the run grid",
                location="payload.base_file",
            )
        return base
    block = payload.get("base", {"kind": "inclusion"})
    if not isinstance(block, dict):
        raise ConfigError("Expected an object", location="payload.base")
    kind = block.get("kind", "inclusion")
    if kind == "inclusion":
        ambient = block.get("ambient", grid.n)
        valid = isinstance(ambient, int) and not isinstance(ambient, bool)
        if not valid or ambient < grid.n:
            raise ConfigError(
                f"Ambient dimension must be an integer >= {grid.n}",
                location="payload.base.ambient",
            )
        flat = flat_inclusion(grid).values
        pad = np.zeros(grid.res + (ambient - grid.n,))
        return FieldK(grid, np.concatenate([flat, pad], axis=-1))
    if kind == "expressions":
        components = require(block, "components", "payload.base")
        if not isinstance(components, list) or len(components) <= grid.n:
            raise ConfigError(
                "Expected more components than parameters",
                location="payload.base.components",
            )
        values = [
            _entry_values(c, grid, f"payload.base.components[{i}]")
            for i, c in enumerate(components)
        ]
        return FieldK(grid, np.stack(values, axis=-1))
    raise ConfigError(f"Unknown base kind {kind!r}", location="payload.base.kind")


def analyze_base(config: RunConfig, base: FieldK) -> ImmersionData:
    return analyze(base, tolerances=config.tolerances, reference=config.base_node)


def parse_subgrid(payload: Any, key: str) -> Grid | None:
    if payload.get(key) is None:
        return None
    return parse_domain(payload[key], f"payload.{key}").grid()
