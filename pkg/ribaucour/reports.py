"""
Check reports.

Every numerical identity the engine verifies ends up as a
:class:`CheckResult` (name, residual, tolerance, pass flag) inside a
:class:`Report`. Reports also carry node counts of the masks the checks were
restricted to, free-form metrics (minor values, incidence lists, closure
errors) and provenance.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Iterator

import numpy as np

logger = logging.getLogger(__name__)


@dataclass
class CheckResult:
    name: str
    residual: float
    tolerance: float
    passed: bool
    detail: str | None = None


@dataclass
class Report:
    """Ordered collection of checks plus masks, metrics and provenance."""

    command: str = ""
    checks: list[CheckResult] = field(default_factory=list)
    masks: dict[str, int] = field(default_factory=dict)
    metrics: dict[str, Any] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)
    provenance: dict[str, Any] = field(default_factory=dict)

    def add_check(
        self,
        name: str,
        residual: float,
        tolerance: float,
        detail: str | None = None,
    ) -> CheckResult:
        """Record a check; names are unique within a report."""
        if any(check.name == name for check in self.checks):
            raise ValueError(f"Check '{name}' recorded twice")
        residual = float(residual)
        passed = math.isfinite(residual) and residual <= tolerance
        result = CheckResult(name, residual, float(tolerance), passed, detail)
        self.checks.append(result)
        if not passed:
            logger.info(
                "Check %s failed: residual %.3e > tolerance %.3e",
                name,
                residual,
                tolerance,
            )
        else:
            logger.debug("Check %s: %.3e <= %.3e", name, residual, tolerance)
        return result

    def add_mask(self, name: str, mask: np.ndarray) -> int:
        count = int(np.count_nonzero(mask))
        self.masks[name] = count
        return count

    def merge(self, other: "Report", prefix: str = "") -> "Report":
        """Copy checks, masks and metrics of ``other`` under ``prefix``."""
        for check in other.checks:
            self.add_check(
                prefix + check.name, check.residual, check.tolerance, check.detail
            )
        for name, count in other.masks.items():
            self.masks[prefix + name] = count
        for name, value in other.metrics.items():
            self.metrics[prefix + name] = value
        self.notes.extend(other.notes)
        return self

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def failed_checks(self) -> list[CheckResult]:
        return [check for check in self.checks if not check.passed]

    def check(self, name: str) -> CheckResult:
        for item in self.checks:
            if item.name == name:
                return item
        raise KeyError(name)

    def __iter__(self) -> Iterator[CheckResult]:
        return iter(self.checks)

    def __contains__(self, name: object) -> bool:
        return any(check.name == name for check in self.checks)
