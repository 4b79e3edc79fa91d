import json
import logging
import unittest
from pathlib import Path

import pytest

from ribaucour.config import (
    DEFAULT_TOLERANCES,
    config_hash,
    load_run_config,
    parse_run_config,
    tolerances_from_mapping,
)
from ribaucour.exceptions import ConfigError

logger = logging.getLogger(__name__)

tc = unittest.TestCase()
tc.maxDiff = None

DOMAIN = {"lo": [-1.0, -1.0], "hi": [1.0, 1.0], "res": [9, 9]}


def _document(**overrides) -> dict:
    document = {
        "command": "verify",
        "domain": dict(DOMAIN),
        "payload": {"potentials": ["u1^2/2"]},
    }
    document.update(overrides)
    return document


def _write(path: Path, document, encoding: str = "utf-8") -> Path:
    path.write_bytes(json.dumps(document, ensure_ascii=False).encode(encoding))
    return path


def test_load_gallery_config() -> None:
    config = load_run_config("ribaucour/gallery/paraboloid.json")
    tc.assertEqual("construct-flat", config.command)
    tc.assertEqual((33, 33), config.domain.res)
    tc.assertEqual(Path("ribaucour-out") / "construct-flat", config.output)
    tc.assertEqual(1.0, config.tolerances.scale)
    tc.assertEqual(64, len(config.config_hash))
    tc.assertEqual(0, config.seed)


def test_cli_overrides(tmp_path) -> None:
    path = _write(tmp_path / "run.json", _document(seed=3, output="out"))
    config = load_run_config(path)
    tc.assertEqual(3, config.seed)
    tc.assertEqual(tmp_path.resolve() / "out", config.output)

    config = load_run_config(path, tol_scale=2.0, seed=7, output=tmp_path / "x")
    tc.assertEqual(2.0, config.tolerances.scale)
    tc.assertEqual(7, config.seed)
    tc.assertEqual(tmp_path / "x", config.output)
    tc.assertAlmostEqual(
        2.0 * DEFAULT_TOLERANCES.resolve("tol_flat", 0.01),
        config.tolerances.resolve("tol_flat", 0.01),
    )


def test_tolerance_block() -> None:
    tolerances = tolerances_from_mapping(
        {"frame": 10, "boundary_margin": 3, "tol_flat": 1e-3}
    )
    tc.assertEqual(10.0, tolerances.frame)
    tc.assertEqual(3, tolerances.boundary_margin)
    tc.assertEqual(1e-3, tolerances.resolve("tol_flat", 0.5, 100.0))
    tc.assertEqual(10.0 * 0.01, tolerances.resolve("tol_sym", 0.01))
    # local scales below one never tighten a tolerance
    tc.assertEqual(
        tolerances.resolve("tol_alg", 0.0, 0.25), tolerances.resolve("tol_alg", 0.0)
    )
    with pytest.raises(KeyError):
        tolerances.resolve("tol_unknown", 0.1)


def test_config_hash_ignores_key_order() -> None:
    a = {"command": "verify", "domain": DOMAIN, "payload": {"x": 1, "y": 2}}
    b = {"payload": {"y": 2, "x": 1}, "domain": DOMAIN, "command": "verify"}
    tc.assertEqual(config_hash(a), config_hash(b))
    tc.assertNotEqual(config_hash(a), config_hash({**a, "seed": 1}))


def test_legacy_encoded_config_loads(tmp_path) -> None:
    document = _document(comment="surface de révolution, déformée")
    config = load_run_config(_write(tmp_path / "latin.json", document, "latin-1"))
    tc.assertEqual("verify", config.command)


def test_malformed_json_reports_position(tmp_path) -> None:
    path = tmp_path / "broken.json"
    path.write_text('{"command": "verify",\n  "domain": }\n', encoding="utf-8")
    with pytest.raises(ConfigError) as info:
        load_run_config(path)
    tc.assertTrue(info.value.location.startswith("line 2, column"))


def test_missing_config_file(tmp_path) -> None:
    with pytest.raises(ConfigError):
        load_run_config(tmp_path / "absent.json")


def test_file_references_resolve_against_the_config(tmp_path) -> None:
    (tmp_path / "data").mkdir()
    (tmp_path / "data" / "init.json").write_text("{}", encoding="utf-8")
    document = _document(
        command="ferapontov", payload={"initial_file": "data/init.json"}
    )
    config = load_run_config(_write(tmp_path / "run.json", document))
    tc.assertEqual(
        tmp_path.resolve() / "data" / "init.json",
        config.resolve_path(config.payload["initial_file"]),
    )
    document["payload"]["initial_file"] = "data/missing.json"
    with pytest.raises(ConfigError) as info:
        load_run_config(_write(tmp_path / "run.json", document))
    tc.assertEqual("payload.initial_file", info.value.location)


@pytest.mark.parametrize(
    "overrides, location",
    [
        ({"command": "explode"}, "command"),
        ({"domain": None}, "domain"),
        ({"domain": {"lo": [0.0], "hi": [1.0]}}, "domain.res"),
        ({"domain": {"lo": [0.0], "hi": [1.0], "res": [2]}}, "domain.res[0]"),
        ({"domain": {"lo": [1.0], "hi": [0.0], "res": [5]}}, "domain.lo[0]"),
        ({"domain": {"lo": [0.0, 0.0], "hi": [1.0], "res": [5]}}, "domain"),
        ({"domain": {"lo": [0.0], "hi": [1.0], "res": [5.5]}}, "domain.res"),
        ({"tolerances": {"frame": -1.0}}, "tolerances.frame"),
        ({"tolerances": {"frame": True}}, "tolerances.frame"),
        ({"tolerances": {"fudge": 1.0}}, "tolerances.fudge"),
        ({"base_node": [9, 0]}, "base_node"),
        ({"base_node": [1]}, "base_node"),
        ({"payload": []}, "payload"),
        ({"seed": "one"}, "seed"),
        ({"output": 3}, "output"),
    ],
)
def test_invalid_documents(overrides, location) -> None:
    with pytest.raises(ConfigError) as info:
        parse_run_config(_document(**overrides))
    tc.assertEqual(location, info.value.location)


def test_negative_tol_scale() -> None:
    with pytest.raises(ConfigError):
        parse_run_config(_document(), tol_scale=0.0)
