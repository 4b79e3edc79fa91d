"""
JSON encoding of reports, dataclasses and sampled fields.

Dataclasses carry a ``_type`` marker so they can be rebuilt; numpy arrays are
encoded as ``{"_ndarray": {"shape": [...], "data": [...]}}`` and non-finite
floats as ``{"_float": "inf"}``. Field caches use the plain layout
``{"grid": {"lo", "hi", "res"}, "value_shape": [...], "data": [...]}`` with
data in canonical order (row-major, axis 1 slowest).

Every writer goes through :func:`atomic_write_text`: a temporary file in the
target directory, then ``os.replace``.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
import typing
from collections.abc import Mapping
from dataclasses import fields, is_dataclass
from pathlib import Path

import numpy as np

from ribaucour.calculus.field import FieldK, Grid
from ribaucour.exceptions import ConfigError, GridError

# Type marker key used for serialization/deserialization
_TYPE_KEY = "_type"
_NDARRAY_KEY = "_ndarray"
_FLOAT_KEY = "_float"

# Registry mapping type names to classes (populated lazily)
_TYPE_REGISTRY: dict[str, type] = {}


def _encode_float(value: float) -> typing.Any:
    if math.isfinite(value):
        return value
    return {_FLOAT_KEY: repr(value)}


def serialize_value(value: typing.Any) -> typing.Any:
    """Convert ``value`` into plain JSON-compatible data."""
    if isinstance(value, np.ndarray):
        return {
            _NDARRAY_KEY: {
                "shape": list(value.shape),
                "data": [serialize_value(x) for x in value.reshape(-1).tolist()],
            }
        }
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return _encode_float(float(value))
    if isinstance(value, Path):
        return str(value)
    if is_dataclass(value) and not isinstance(value, type):
        result = {_TYPE_KEY: type(value).__name__}
        for item in fields(value):
            result[item.name] = serialize_value(getattr(value, item.name))
        return result
    if isinstance(value, Mapping):
        return {str(key): serialize_value(val) for key, val in value.items()}
    if isinstance(value, (list, tuple, set)):
        return [serialize_value(item) for item in value]
    return value


def _get_type_registry() -> dict[str, type]:
    """Lazily populate and return the type registry."""
    if _TYPE_REGISTRY:
        return _TYPE_REGISTRY

    from ribaucour import config, reports
    from ribaucour.calculus import field

    for module in (reports, field, config):
        for name in dir(module):
            obj = getattr(module, name)
            if isinstance(obj, type) and is_dataclass(obj):
                _TYPE_REGISTRY[name] = obj

    return _TYPE_REGISTRY


def deserialize_value(value: typing.Any) -> typing.Any:
    """Inverse of :func:`serialize_value` for registered dataclasses."""
    if isinstance(value, list):
        return [deserialize_value(item) for item in value]
    if not isinstance(value, dict):
        return value
    if _NDARRAY_KEY in value:
        block = value[_NDARRAY_KEY]
        data = [deserialize_value(x) for x in block["data"]]
        return np.asarray(data, dtype=float).reshape(block["shape"])
    if _FLOAT_KEY in value:
        return float(value[_FLOAT_KEY])
    if _TYPE_KEY in value:
        registry = _get_type_registry()
        type_name = value[_TYPE_KEY]
        if type_name not in registry:
            raise KeyError(f"Unknown serialized type: {type_name}")
        cls = registry[type_name]
        names = {item.name for item in fields(cls)}
        kwargs = {
            key: deserialize_value(val) for key, val in value.items() if key in names
        }
        return cls(**kwargs)
    return {key: deserialize_value(val) for key, val in value.items()}


def dumps_canonical(value: typing.Any) -> str:
    """Deterministic JSON text (sorted keys, fixed separators)."""
    return (
        json.dumps(
            serialize_value(value),
            sort_keys=True,
            separators=(",", ": "),
            indent=1,
            allow_nan=False,
        )
        + "\n"
    )


def atomic_write_text(path: Path | str, text: str) -> Path:
    """Write ``text`` to ``path`` through a temporary file and ``os.replace``."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, temp_name = tempfile.mkstemp(
        prefix=f".{target.name}.", suffix=".tmp", dir=target.parent
    )
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(text)
        os.replace(temp_name, target)
    except BaseException:
        if os.path.exists(temp_name):
            os.unlink(temp_name)
        raise
    return target


# =============================================================================
# Field caches
# =============================================================================


def field_to_json(f: FieldK) -> dict:
    return {
        "grid": {
            "lo": list(f.grid.lo),
            "hi": list(f.grid.hi),
            "res": list(f.grid.res),
        },
        "value_shape": list(f.value_shape),
        "data": f.data.tolist(),
    }


def field_from_json(document: typing.Any, location: str = "field") -> FieldK:
    """Rebuild a field cache; malformed input raises ConfigError."""
    if not isinstance(document, dict):
        raise ConfigError("Field cache must be a JSON object", location=location)
    for key in ("grid", "value_shape", "data"):
        if key not in document:
            raise ConfigError("Missing key", location=f"{location}.{key}")
    block = document["grid"]
    try:
        grid = Grid(lo=block["lo"], hi=block["hi"], res=block["res"])
        value_shape = tuple(int(x) for x in document["value_shape"])
        data = np.asarray(document["data"], dtype=float)
        values = data.reshape(grid.res + value_shape)
        return FieldK(grid, values)
    except GridError as exc:
        raise ConfigError(str(exc), location=f"{location}.grid", cause=exc) from exc
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(
            f"Malformed field cache: {exc}", location=location, cause=exc
        ) from exc


def write_field(path: Path | str, f: FieldK) -> Path:
    return atomic_write_text(path, json.dumps(field_to_json(f), sort_keys=True) + "\n")
