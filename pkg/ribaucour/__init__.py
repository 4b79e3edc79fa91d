"""
vectorial-ribaucour: numerical engine for vectorial Ribaucour transforms.

Samples submanifolds with flat normal bundle on rectangular grids, applies
vectorial Ribaucour transforms and checks every identity the theory
predicts (relations of the transformed normal geometry, inverse transforms,
permutability and Bianchi cubes, Lamé-system nets, Dupin families) with
residuals measured against grid-aware tolerances.
"""

import logging
import re
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path
from typing import TYPE_CHECKING

from ribaucour.config import DEFAULT_TOLERANCES, RunConfig, Tolerances, load_run_config
from ribaucour.reports import CheckResult, Report

if TYPE_CHECKING:  # pragma: no cover
    from ribaucour.constructions.construct import (
        FlatBundleSpec,
        FlatResult,
        SphericalResult,
        SubbundleResult,
        SubbundleSpec,
    )
    from ribaucour.constructions.dupin import DupinResult, DupinSpec
    from ribaucour.constructions.lame import LameInitialData, LameResult
    from ribaucour.calculus.field import Grid

logger = logging.getLogger(__name__)

_PRERELEASE_NORMALIZE_RE = re.compile(r"(?<=\d)\.(a|b|rc)(0|[1-9]\d*)\b", re.IGNORECASE)


def _normalize_version(value: str) -> str:
    def repl(match: re.Match[str]) -> str:
        tag = match.group(1).lower()
        number = str(int(match.group(2)))
        return f"{tag}{number}"

    return _PRERELEASE_NORMALIZE_RE.sub(repl, value)


def _version_from_pyproject() -> str | None:
    here = Path(__file__).resolve()
    for parent in list(here.parents)[:5]:
        pyproject = parent / "pyproject.toml"
        if not pyproject.is_file():
            continue
        text = pyproject.read_text(encoding="utf-8", errors="ignore")
        match = re.search(
            r'(?ms)^\[project\]\s.*?^version\s*=\s*["\']([^"\']+)["\']\s*$',
            text,
        )
        return match.group(1) if match else None
    return None


try:
    raw_version = _version_from_pyproject() or version("vectorial-ribaucour")
    __version__ = _normalize_version(raw_version)
except PackageNotFoundError:  # pragma: no cover
    __version__ = "unknown"


#################
# Constructions
#################
def construct_flat(
    spec: "FlatBundleSpec", tolerances: Tolerances = DEFAULT_TOLERANCES
) -> "FlatResult":
    """Submanifold with flat normal bundle from commuting potentials."""
    from ribaucour.constructions.construct import construct_flat as _construct_flat

    logger.debug("Flat construction on grid %s", spec.grid.res)
    return _construct_flat(spec, tolerances=tolerances)


def construct_subbundle(
    spec: "SubbundleSpec", tolerances: Tolerances = DEFAULT_TOLERANCES
) -> "SubbundleResult":
    """Submanifold with a flat parallel normal subbundle."""
    from ribaucour.constructions.construct import (
        construct_subbundle as _construct_subbundle,
    )

    logger.debug("Subbundle construction with m=%d", len(spec.potentials))
    return _construct_subbundle(spec, tolerances=tolerances)


def construct_spherical(
    spec: "FlatBundleSpec", tolerances: Tolerances = DEFAULT_TOLERANCES
) -> "SphericalResult":
    """Spherical frame ``W`` of a flat construction."""
    from ribaucour.constructions.construct import (
        construct_spherical as _construct_spherical,
    )

    logger.debug("Spherical construction on grid %s", spec.grid.res)
    return _construct_spherical(spec, tolerances=tolerances)


def construct_ferapontov(
    initial: "LameInitialData",
    grid: "Grid",
    base_node: tuple[int, ...] | None = None,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> "LameResult":
    """Integrate the Lamé pipeline from Goursat data and assemble ``W``."""
    from ribaucour.constructions.lame import assemble, solve_system

    logger.debug("Lamé pipeline on grid %s", grid.res)
    system, _ = solve_system(initial, grid, base_node=base_node, tolerances=tolerances)
    return assemble(system, tolerances=tolerances)


def construct_dupin(
    spec: "DupinSpec", tolerances: Tolerances = DEFAULT_TOLERANCES
) -> "DupinResult":
    """Family of transforms whose leaves are round spheres."""
    from ribaucour.constructions.dupin import construct_dupin as _construct_dupin

    logger.debug("Dupin family with leaves of dimension %d", spec.m)
    return _construct_dupin(spec, tolerances=tolerances)


#############
# Runs
#############
def run_file(
    path: str | Path,
    *,
    tol_scale: float | None = None,
    seed: int | None = None,
    output: Path | None = None,
    write: bool = True,
) -> Report:
    """
    Load a run configuration and execute it.

    Args:
        path: Path to the JSON run configuration.
        tol_scale: Global tolerance multiplier.
        seed: Overrides the config's seed.
        output: Overrides the config's output directory.
        write: Write the report, field caches and meshes to the output
            directory. With ``False`` only the report is returned.

    Returns:
        The report with provenance. Failed checks do not raise.

    Raises:
        ribaucour.exceptions.ConfigError:
            If the config (or a file it references) is invalid.
        ribaucour.exceptions.RunFailedError:
            If the run fails for an unexpected reason (with `__cause__` set).
        ribaucour.exceptions.RibaucourError:
            For numerical aborts (singular Ω, blow-up, incompatible data).

    Example:
        >>> import ribaucour
        >>> path = "ribaucour/gallery/paraboloid.json"
        >>> report = ribaucour.run_file(path, write=False)
        >>> report.passed
        True
    """
    from ribaucour.router import execute, write_artifacts

    config = load_run_config(path, tol_scale=tol_scale, seed=seed, output=output)
    logger.info("Running %s from %s", config.command, path)
    outcome = execute(config)
    if write:
        write_artifacts(outcome, config.output)
    return outcome.report


__all__ = [
    # Version
    "__version__",
    # Main functions
    "run_file",
    "load_run_config",
    # constructions
    "construct_flat",
    "construct_subbundle",
    "construct_spherical",
    "construct_ferapontov",
    "construct_dupin",
    # types
    "CheckResult",
    "Report",
    "RunConfig",
    "Tolerances",
    "DEFAULT_TOLERANCES",
]
