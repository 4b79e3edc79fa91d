"""
Tolerances and run configuration.

Tolerances are expressed as factors of ``h²_max`` (the squared largest grid
spacing) so that every check tightens under refinement at the rate of the
second-order schemes. A few constants (linear-algebra tolerance, condition
number cap, principal-minor floor) are absolute.

Run configurations are JSON documents. Raw bytes are decoded with
charset_normalizer before parsing, so configs written by editors using a
legacy encoding still load.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from types import MappingProxyType
from typing import Any, Mapping

from charset_normalizer import from_bytes

from ribaucour.exceptions import ConfigError

logger = logging.getLogger(__name__)

COMMANDS: tuple[str, ...] = (
    "construct-flat",
    "construct-subbundle",
    "spherical",
    "ferapontov",
    "transform",
    "compose",
    "cube",
    "dupin",
    "verify",
)

# tolerance name -> factor attribute of Tolerances (value = factor * h² * scales)
_H2_FACTORS: dict[str, str] = {
    "tol_closed": "closed",
    "tol_path": "path",
    "tol_flat": "frame",
    "tol_sym": "frame",
    "tol_frame": "frame",
    "tol_phi_commute": "frame",
    "tol_rel": "relation",
    "tol_iso": "relation",
    "tol_inv": "relation",
    "tol_comp": "relation",
    "tol_codazzi": "relation",
    "tol_lame": "lame",
    "tol_diag": "lame",
    "tol_sphere": "sphere",
    "tol_eig": "eig",
}

# tolerance name -> absolute attribute of Tolerances (value = constant * scales)
_ABSOLUTE: dict[str, str] = {
    "tol_alg": "algebra",
    "tol_commute": "commute",
}


@dataclass(frozen=True)
class Tolerances:
    """
    Tolerance policy shared by every check.

    Factors multiply ``h²_max`` of the grid a check runs on. ``scale`` is a
    global multiplier (CLI ``--tol-scale``). ``resolution`` bounds the
    relative second difference of ``det Ω`` on nodes a transform is checked
    on. ``overrides`` maps a tolerance name (for example ``"tol_flat"``) to an
    absolute value that replaces the grid-derived one; the global scale
    still applies.
    """

    closed: float = 50.0
    path: float = 100.0
    frame: float = 100.0
    relation: float = 200.0
    lame: float = 200.0
    sphere: float = 100.0
    eig: float = 200.0
    algebra: float = 1e-10
    commute: float = 1e-9
    kappa_max: float = 1e12
    minor_floor: float = 1e-6
    regular_floor: float = 1e-6
    blowup_factor: float = 1e6
    resolution: float = 0.05
    boundary_margin: int = 2
    scale: float = 1.0
    overrides: Mapping[str, float] = field(
        default_factory=lambda: MappingProxyType({})
    )

    def resolve(self, name: str, h2: float, local_scale: float = 1.0) -> float:
        """Return the absolute tolerance for check family ``name``."""
        local_scale = max(1.0, float(local_scale))
        if name in self.overrides:
            return float(self.overrides[name]) * self.scale
        if name in _H2_FACTORS:
            factor = getattr(self, _H2_FACTORS[name])
            return factor * float(h2) * local_scale * self.scale
        if name in _ABSOLUTE:
            return getattr(self, _ABSOLUTE[name]) * local_scale * self.scale
        raise KeyError(f"Unknown tolerance: {name}")

    def scaled(self, factor: float) -> "Tolerances":
        return replace(self, scale=self.scale * float(factor))


DEFAULT_TOLERANCES = Tolerances()


def tolerances_from_mapping(
    values: Mapping[str, Any], *, base: Tolerances = DEFAULT_TOLERANCES
) -> Tolerances:
    """
    Build tolerances from a config block.

    Keys naming a field of :class:`Tolerances` set that field; keys of the
    form ``tol_*`` become absolute overrides. Every value must be positive.
    """
    updates: dict[str, Any] = {}
    overrides = dict(base.overrides)
    known = set(Tolerances.__dataclass_fields__) - {"overrides"}
    for key, value in values.items():
        location = f"tolerances.{key}"
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError("Tolerance must be a number", location=location)
        if value <= 0:
            raise ConfigError("Tolerance must be positive", location=location)
        if key in known:
            updates[key] = int(value) if key == "boundary_margin" else float(value)
        elif key in _H2_FACTORS or key in _ABSOLUTE:
            overrides[key] = float(value)
        else:
            raise ConfigError("Unknown tolerance", location=location)
    return replace(base, overrides=MappingProxyType(overrides), **updates)


@dataclass(frozen=True)
class DomainSpec:
    """Box and resolution of the parameter grid."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]
    res: tuple[int, ...]

    def grid(self):
        from ribaucour.calculus.field import Grid

        return Grid(lo=self.lo, hi=self.hi, res=self.res)


@dataclass(frozen=True)
class RunConfig:
    """A validated run configuration."""

    command: str
    domain: DomainSpec
    payload: Mapping[str, Any]
    tolerances: Tolerances = DEFAULT_TOLERANCES
    base_node: tuple[int, ...] | None = None
    output: Path = Path("ribaucour-out")
    seed: int = 0
    source_path: Path | None = None
    config_hash: str = ""

    def resolve_path(self, value: str) -> Path:
        """Resolve a file reference relative to the config file's directory."""
        path = Path(value)
        if not path.is_absolute() and self.source_path is not None:
            path = self.source_path.parent / path
        return path


def detect_and_decode(content: bytes) -> str:
    """
    Decode raw config bytes.

    Uses charset_normalizer to detect the encoding. Falls back to UTF-8 with
    replacement characters when detection yields nothing.
    """
    if not content:
        return ""
    best_match = from_bytes(content).best()
    if best_match is not None:
        logger.debug("Detected config encoding: %s", best_match.encoding)
        return str(best_match)
    logger.debug("Encoding detection failed, falling back to UTF-8")
    return content.decode("utf-8", errors="replace")


def read_json_document(path: Path) -> Any:
    """Read and parse a JSON file, mapping every failure to ConfigError."""
    if not path.is_file():
        raise ConfigError(f"File not found: {path}", location=str(path))
    text = detect_and_decode(path.read_bytes())
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"Malformed JSON in {path.name}: {exc.msg}",
            location=f"line {exc.lineno}, column {exc.colno}",
            cause=exc,
        ) from exc


def config_hash(document: Any) -> str:
    canonical = json.dumps(
        document, sort_keys=True, separators=(",", ":"), ensure_ascii=True
    )
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _float_tuple(value: Any, location: str) -> tuple[float, ...]:
    if not isinstance(value, list) or not value:
        raise ConfigError("Expected a non-empty list of numbers", location=location)
    for item in value:
        if isinstance(item, bool) or not isinstance(item, (int, float)):
            raise ConfigError("Expected a number", location=location)
    return tuple(float(item) for item in value)


def _int_tuple(value: Any, location: str) -> tuple[int, ...]:
    if not isinstance(value, list) or not value:
        raise ConfigError("Expected a non-empty list of integers", location=location)
    for item in value:
        if isinstance(item, bool) or not isinstance(item, int):
            raise ConfigError("Expected an integer", location=location)
    return tuple(item for item in value)


def parse_domain(block: Any, location: str = "domain") -> DomainSpec:
    if not isinstance(block, dict):
        raise ConfigError("Expected an object", location=location)
    for key in ("lo", "hi", "res"):
        if key not in block:
            raise ConfigError("Missing key", location=f"{location}.{key}")
    lo = _float_tuple(block["lo"], f"{location}.lo")
    hi = _float_tuple(block["hi"], f"{location}.hi")
    res = _int_tuple(block["res"], f"{location}.res")
    if not len(lo) == len(hi) == len(res):
        raise ConfigError("lo, hi and res must have equal length", location=location)
    for axis, (a, b, r) in enumerate(zip(lo, hi, res)):
        if not a < b:
            raise ConfigError("Empty interval", location=f"{location}.lo[{axis}]")
        if r < 3:
            raise ConfigError(
                "Resolution must be at least 3", location=f"{location}.res[{axis}]"
            )
    return DomainSpec(lo=lo, hi=hi, res=res)


def parse_run_config(
    document: Any,
    *,
    source_path: Path | None = None,
    tol_scale: float | None = None,
    seed: int | None = None,
    output: Path | None = None,
) -> RunConfig:
    """Validate a decoded config document and build a :class:`RunConfig`."""
    if not isinstance(document, dict):
        raise ConfigError("Config must be a JSON object", location="$")
    command = document.get("command")
    if command not in COMMANDS:
        raise ConfigError(
            f"Unknown command {command!r}; expected one of {', '.join(COMMANDS)}",
            location="command",
        )
    domain = parse_domain(document.get("domain"))

    tolerances = tolerances_from_mapping(document.get("tolerances") or {})
    if tol_scale is not None:
        if tol_scale <= 0:
            raise ConfigError("--tol-scale must be positive", location="tol_scale")
        tolerances = tolerances.scaled(tol_scale)

    base_node = None
    if document.get("base_node") is not None:
        base_node = _int_tuple(document["base_node"], "base_node")
        if len(base_node) != len(domain.res) or any(
            not 0 <= i < r for i, r in zip(base_node, domain.res)
        ):
            raise ConfigError("Base node outside the grid", location="base_node")

    payload = document.get("payload", {})
    if not isinstance(payload, dict):
        raise ConfigError("Expected an object", location="payload")

    run_seed = document.get("seed", 0) if seed is None else seed
    if isinstance(run_seed, bool) or not isinstance(run_seed, int):
        raise ConfigError("Seed must be an integer", location="seed")

    if output is None:
        out_value = document.get("output")
        if out_value is not None and not isinstance(out_value, str):
            raise ConfigError("Expected a path string", location="output")
        output = Path(out_value) if out_value else Path("ribaucour-out") / command
        if not output.is_absolute() and source_path is not None and out_value:
            output = source_path.parent / output

    config = RunConfig(
        command=command,
        domain=domain,
        payload=MappingProxyType(payload),
        tolerances=tolerances,
        base_node=base_node,
        output=output,
        seed=run_seed,
        source_path=source_path,
        config_hash=config_hash(document),
    )
    _check_file_references(config)
    return config


def _check_file_references(config: RunConfig) -> None:
    for key, value in config.payload.items():
        if key.endswith("_file"):
            if not isinstance(value, str):
                raise ConfigError("Expected a path string", location=f"payload.{key}")
            if not config.resolve_path(value).is_file():
                raise ConfigError(
                    f"Referenced file does not exist: {value}",
                    location=f"payload.{key}",
                )


def load_run_config(
    path: Path | str,
    *,
    tol_scale: float | None = None,
    seed: int | None = None,
    output: Path | None = None,
) -> RunConfig:
    """Load, decode and validate a run configuration file."""
    source = Path(path)
    document = read_json_document(source)
    logger.debug("Loaded config %s", source)
    return parse_run_config(
        document,
        source_path=source.resolve(),
        tol_scale=tol_scale,
        seed=seed,
        output=output,
    )
