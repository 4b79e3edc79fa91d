"""
Command dispatch and artifact emission.

Runners are looked up in :data:`_COMMAND_REGISTRY` and imported lazily, so a
``verify`` run never imports the Lamé or Dupin machinery.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Callable

from ribaucour.config import RunConfig
from ribaucour.exceptions import ConfigError, RibaucourError, RunFailedError
from ribaucour.geometry.mesh import write_obj, write_vtk
from ribaucour.reports import Report
from ribaucour.runners.common import RunOutcome
from ribaucour.serialization import atomic_write_text, dumps_canonical, write_field

logger = logging.getLogger(__name__)

# Mapping from command names to their runner module paths and function names
# Format: command -> (module_path, function_name)
_COMMAND_REGISTRY: dict[str, tuple[str, str]] = {
    # Constructions
    "construct-flat": (
        "ribaucour.runners.construct_runner",
        "run_construct_flat",
    ),
    "construct-subbundle": (
        "ribaucour.runners.construct_runner",
        "run_construct_subbundle",
    ),
    "spherical": ("ribaucour.runners.construct_runner", "run_spherical"),
    "ferapontov": ("ribaucour.runners.lame_runner", "run_ferapontov"),
    "dupin": ("ribaucour.runners.dupin_runner", "run_dupin"),
    # Transforms and permutability
    "transform": ("ribaucour.runners.transform_runner", "run_transform"),
    "compose": ("ribaucour.runners.transform_runner", "run_compose"),
    "cube": ("ribaucour.runners.transform_runner", "run_cube"),
    # Expression level
    "verify": ("ribaucour.runners.verify_runner", "run_verify"),
}

REPORT_NAME = "report.json"


def get_runner(command: str) -> Callable[[RunConfig], RunOutcome]:
    """
    Return the runner for a command using lazy import.

    Raises:
        ConfigError: If no runner exists for the command.
    """
    if command not in _COMMAND_REGISTRY:
        raise ConfigError(f"No runner for command: {command}", location="command")

    module_path, function_name = _COMMAND_REGISTRY[command]

    import importlib

    module = importlib.import_module(module_path)
    return getattr(module, function_name)


def provenance(config: RunConfig) -> dict:
    from ribaucour import __version__

    domain = config.domain
    return {
        "command": config.command,
        "config_hash": config.config_hash,
        "grid": {"lo": list(domain.lo), "hi": list(domain.hi), "res": list(domain.res)},
        "base_node": None if config.base_node is None else list(config.base_node),
        "seed": config.seed,
        "version": __version__,
    }


def execute(config: RunConfig) -> RunOutcome:
    """
    Run the command of ``config`` and attach provenance to its report.

    Raises:
        ConfigError: The payload does not fit the command.
        RibaucourError: A numerical abort.
        RunFailedError: Any other failure (with `__cause__` set).
    """
    runner = get_runner(config.command)
    logger.info("Starting %s", config.command)
    try:
        outcome = runner(config)
    except RibaucourError:
        raise
    except Exception as exc:
        raise RunFailedError(
            f"{config.command} failed: {exc}", command=config.command, cause=exc
        ) from exc
    outcome.report.command = config.command
    outcome.report.provenance = provenance(config)
    failed = len(outcome.report.failed_checks())
    logger.info(
        "Finished %s: %d checks, %d failed",
        config.command,
        len(outcome.report.checks),
        failed,
    )
    return outcome


def write_artifacts(outcome: RunOutcome, output: Path) -> list[Path]:
    """
    Write the report, field caches and meshes below ``output``.

    OBJ meshes are written for two-parameter maps, VTK for at most three.
    """
    written = [atomic_write_text(output / REPORT_NAME, dumps_canonical(outcome.report))]
    for name, f in sorted(outcome.fields.items()):
        written.append(write_field(output / "fields" / f"{name}.json", f))
    for name, mesh in sorted(outcome.meshes.items()):
        n = mesh.field.grid.n
        if n > 3:
            logger.debug("Skipping mesh %s of a %d-dim grid", name, n)
            continue
        written.append(
            write_vtk(
                output / "meshes" / f"{name}.vtk",
                mesh.field,
                mesh.mask,
                mesh.point_data,
            )
        )
        if n == 2:
            written.append(
                write_obj(output / "meshes" / f"{name}.obj", mesh.field, mesh.mask)
            )
    for path in written:
        logger.debug("Wrote %s", path)
    logger.info("Artifacts written to %s", output)
    return written


def run(config: RunConfig) -> Report:
    """Execute ``config`` and write every artifact to ``config.output``."""
    outcome = execute(config)
    write_artifacts(outcome, config.output)
    return outcome.report
