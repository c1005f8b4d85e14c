"""Reference ensembles shipped with the package.

These are published degree-distribution tables (4-decimal coefficients,
renormalized on load); they double as regression fixtures for the test
suite and as ready-made inputs for the CLI.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from .ensemble import Ensemble, parse_ensemble

__all__ = ["FIXTURE_NAMES", "fixture_path", "load_fixture"]

FIXTURE_NAMES = (
    "example1",
    "example2",
    "example3",
    "example4_proposed",
    "heavy_tail_poisson",
    "regular_3_6",
)


def fixture_path(name: str) -> Path:
    if name not in FIXTURE_NAMES:
        raise KeyError(f"unknown fixture {name!r}; available: {FIXTURE_NAMES}")
    return Path(str(resources.files("fastldpc").joinpath("data", f"{name}.json")))


def load_fixture(name: str) -> Ensemble:
    return parse_ensemble(fixture_path(name).read_text(encoding="utf-8"))
