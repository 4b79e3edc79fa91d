"""Bundled demo configurations."""

from __future__ import annotations

from importlib.resources import files
from pathlib import Path


def demo_gallery() -> dict[str, Path]:
    """Map gallery entry names to their config files."""
    root = files(__name__)
    return {
        entry.name[: -len(".json")]: Path(str(entry))
        for entry in root.iterdir()
        if entry.name.endswith(".json") and not entry.name.startswith("_")
    }
