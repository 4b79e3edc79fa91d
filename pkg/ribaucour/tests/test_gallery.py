"""
Runs every bundled demo config through the CLI.

Residuals are compared against ``resources/gallery_residuals.json`` next to
this module. A fresh checkout records the fixture on its first test run;
commit it, and delete it to re-record after an intentional numerical change.
"""

import json
import logging
import unittest
from pathlib import Path

import pytest

from ribaucour.cli import EXIT_OK, main
from ribaucour.constructions.construct import (
    FLAT_CHECKS,
    SPHERICAL_CHECKS,
    SUBBUNDLE_CHECKS,
)
from ribaucour.constructions.dupin import DUPIN_CHECKS
from ribaucour.constructions.lame import (
    ASSEMBLE_CHECKS,
    COEFFICIENT_CHECKS,
    FRAME_CHECKS,
    ROTATION_CHECKS,
)
from ribaucour.gallery import demo_gallery
from ribaucour.runners.verify_runner import VERIFY_CHECKS
from ribaucour.serialization import deserialize_value
from ribaucour.transforms.permute import (
    CHAIN_CHECKS,
    COMBINE_CHECKS,
    COMPOSE_CHECKS,
    CUBE_CHECKS,
    SPLIT_CHECKS,
)
from ribaucour.transforms.ribaucour import (
    DATA_CHECKS,
    INVERSE_CHECKS,
    RELATION_CHECKS,
    TRANSFORM_CHECKS,
)

logger = logging.getLogger(__name__)

tc = unittest.TestCase()
tc.maxDiff = None

FIXTURE = Path(__file__).resolve().parent / "resources" / "gallery_residuals.json"

# recorded residuals at or below this are treated as exact
_EXACT_FLOOR = 1e-13

DECLARED_CHECKS = set().union(
    FLAT_CHECKS,
    SUBBUNDLE_CHECKS,
    SPHERICAL_CHECKS,
    DUPIN_CHECKS,
    ROTATION_CHECKS,
    COEFFICIENT_CHECKS,
    FRAME_CHECKS,
    ASSEMBLE_CHECKS,
    VERIFY_CHECKS,
    DATA_CHECKS,
    TRANSFORM_CHECKS,
    RELATION_CHECKS,
    INVERSE_CHECKS,
    SPLIT_CHECKS,
    COMBINE_CHECKS,
    COMPOSE_CHECKS,
    CUBE_CHECKS,
    CHAIN_CHECKS,
)


def _base_name(name: str) -> str:
    """Strip report prefixes and column suffixes: ``x.y.name:2`` -> ``name``."""
    return name.rsplit(".", 1)[-1].split(":", 1)[0]


@pytest.fixture(scope="module")
def gallery_runs(tmp_path_factory) -> dict:
    """Exit code and report of every gallery entry."""
    runs = {}
    for name, path in sorted(demo_gallery().items()):
        command = json.loads(path.read_text(encoding="utf-8"))["command"]
        out = tmp_path_factory.mktemp(name)
        code = main([command, "--config", str(path), "--out", str(out)])
        report_path = out / "report.json"
        report = None
        if report_path.is_file():
            report = deserialize_value(
                json.loads(report_path.read_text(encoding="utf-8"))
            )
        logger.info("Gallery %s exited with %d", name, code)
        runs[name] = (code, report)
    return runs


def test_gallery_is_populated() -> None:
    gallery = demo_gallery()
    assert len(gallery) >= 6
    for expected in ("oracle_n1", "paraboloid", "reflection_cube", "lame_trivial_net"):
        tc.assertIn(expected, gallery)


def test_every_entry_passes(gallery_runs) -> None:
    failures = {}
    for name, (code, report) in gallery_runs.items():
        if code != EXIT_OK:
            failed = [] if report is None else [c.name for c in report.failed_checks()]
            failures[name] = (code, failed)
    tc.assertEqual({}, failures)


def test_emitted_checks_are_declared(gallery_runs) -> None:
    emitted = set()
    undeclared = set()
    for _, report in gallery_runs.values():
        if report is None:
            continue
        emitted |= {_base_name(c.name) for c in report.checks}
        undeclared |= {
            c.name for c in report.checks if _base_name(c.name) not in DECLARED_CHECKS
        }
    tc.assertEqual(set(), undeclared)
    # every declared check is reachable from some gallery command
    tc.assertEqual(set(), DECLARED_CHECKS - emitted)


def residual_regressions(recorded: dict, current: dict) -> list[tuple]:
    """Entries whose residual grew beyond 10x the recorded value."""
    regressions = []
    for name, checks in recorded.items():
        tc.assertIn(name, current)
        tc.assertEqual(set(checks), set(current[name]), name)
        for check, value in checks.items():
            limit = 10.0 * max(value, _EXACT_FLOOR)
            if not current[name][check] <= limit:
                regressions.append((name, check, value, current[name][check]))
    return regressions


def test_residual_regressions_flag_growth_beyond_ten_times() -> None:
    recorded = {"demo": {"a": 1e-6, "b": 0.0, "c": 2e-4}}
    current = {"demo": {"a": 9e-6, "b": 5e-14, "c": 3e-3}}
    tc.assertEqual(
        [("demo", "c", 2e-4, 3e-3)], residual_regressions(recorded, current)
    )
    with pytest.raises(AssertionError):
        residual_regressions(recorded, {"demo": {"a": 1e-6}})
    with pytest.raises(AssertionError):
        residual_regressions(recorded, {})


def test_fixture_lives_next_to_the_tests() -> None:
    tc.assertEqual(Path(__file__).resolve().parent / "resources", FIXTURE.parent)


def test_residuals_match_the_recorded_fixture(gallery_runs) -> None:
    current = {
        name: {c.name: c.residual for c in report.checks}
        for name, (_, report) in gallery_runs.items()
        if report is not None
    }
    if not FIXTURE.is_file():
        FIXTURE.parent.mkdir(parents=True, exist_ok=True)
        FIXTURE.write_text(
            json.dumps(current, indent=1, sort_keys=True) + "\n", encoding="utf-8"
        )
        logger.warning("Recorded gallery residuals to %s", FIXTURE)

    recorded = json.loads(FIXTURE.read_text(encoding="utf-8"))
    tc.assertEqual(set(current), set(recorded))
    tc.assertEqual([], residual_regressions(recorded, current))
