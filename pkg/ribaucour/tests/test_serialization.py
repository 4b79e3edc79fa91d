import json
import logging
import math
import unittest

import numpy as np
import pytest

from ribaucour.calculus.field import FieldK, Grid
from ribaucour.exceptions import ConfigError
from ribaucour.reports import Report
from ribaucour.serialization import (
    atomic_write_text,
    deserialize_value,
    dumps_canonical,
    field_from_json,
    field_to_json,
    write_field,
)

logger = logging.getLogger(__name__)

tc = unittest.TestCase()
tc.maxDiff = None


def _report() -> Report:
    report = Report(command="transform")
    report.add_check("isometry", 1e-14, 1e-10)
    report.add_check("round_trip", math.inf, 1e-6, "diverged")
    report.add_mask("working", np.array([[True, False], [True, True]]))
    report.metrics["minors"] = {"{1}": 0.5}
    report.metrics["omega"] = np.eye(2)
    return report


def test_report_json_is_canonical() -> None:
    text = dumps_canonical(_report())
    tc.assertEqual(text, dumps_canonical(_report()))
    document = json.loads(text)
    tc.assertEqual("Report", document["_type"])
    tc.assertEqual({"_float": "inf"}, document["checks"][1]["residual"])
    tc.assertEqual(3, document["masks"]["working"])


def test_report_rebuilds_from_json() -> None:
    rebuilt = deserialize_value(json.loads(dumps_canonical(_report())))
    tc.assertIsInstance(rebuilt, Report)
    tc.assertFalse(rebuilt.passed)
    tc.assertEqual(["round_trip"], [c.name for c in rebuilt.failed_checks()])
    tc.assertEqual("diverged", rebuilt.check("round_trip").detail)
    np.testing.assert_array_equal(np.eye(2), rebuilt.metrics["omega"])


def test_unknown_serialized_type() -> None:
    with pytest.raises(KeyError):
        deserialize_value({"_type": "Nope"})


def test_report_rejects_duplicate_checks() -> None:
    report = Report()
    report.add_check("isometry", 0.0, 1.0)
    with pytest.raises(ValueError):
        report.add_check("isometry", 0.0, 1.0)
    with pytest.raises(KeyError):
        report.check("missing")
    tc.assertIn("isometry", report)


def test_nan_residual_fails() -> None:
    report = Report()
    tc.assertFalse(report.add_check("nan", math.nan, 1.0).passed)


def test_merge_prefixes_everything() -> None:
    merged = Report().merge(_report(), "inner.")
    tc.assertEqual(["inner.isometry", "inner.round_trip"], [c.name for c in merged])
    tc.assertEqual({"inner.working": 3}, merged.masks)
    tc.assertIn("inner.minors", merged.metrics)


def test_field_cache_layout(tmp_path) -> None:
    grid = Grid(lo=(0.0, 0.0), hi=(1.0, 2.0), res=(3, 4))
    values = np.arange(grid.size * 2, dtype=float).reshape(grid.res + (2,))
    f = FieldK(grid, values)
    document = field_to_json(f)
    tc.assertEqual([3, 4], document["grid"]["res"])
    tc.assertEqual([2], document["value_shape"])
    path = write_field(tmp_path / "fields" / "f.json", f)
    rebuilt = field_from_json(json.loads(path.read_text(encoding="utf-8")))
    tc.assertEqual(grid, rebuilt.grid)
    np.testing.assert_array_equal(values, rebuilt.values)


@pytest.mark.parametrize(
    "document",
    [
        [],
        {"grid": {"lo": [0], "hi": [1], "res": [3]}, "value_shape": []},
        {"grid": {"lo": [0], "hi": [1], "res": [3]}, "value_shape": [], "data": [1]},
        {"grid": {"lo": [1], "hi": [0], "res": [3]}, "value_shape": [], "data": []},
        {"grid": {"lo": [0]}, "value_shape": [], "data": [1, 2, 3]},
    ],
)
def test_malformed_field_caches(document) -> None:
    with pytest.raises(ConfigError):
        field_from_json(document)


def test_atomic_write_leaves_no_temporaries(tmp_path) -> None:
    target = atomic_write_text(tmp_path / "nested" / "report.json", "{}\n")
    atomic_write_text(target, "[]\n")
    tc.assertEqual("[]\n", target.read_text(encoding="utf-8"))
    tc.assertEqual(["report.json"], [p.name for p in target.parent.iterdir()])
