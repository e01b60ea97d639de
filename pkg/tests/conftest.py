from __future__ import annotations

import pathlib

import pytest

REPO = pathlib.Path(__file__).resolve().parent.parent
FIXTURES = REPO / "src" / "abmlink" / "fixtures"
GOLDEN = REPO / "golden"
SCRIPTS = FIXTURES / "scripts"


@pytest.fixture
def fixtures_dir() -> pathlib.Path:
    return FIXTURES


@pytest.fixture
def golden_dir() -> pathlib.Path:
    return GOLDEN


@pytest.fixture
def district_manifest_path() -> pathlib.Path:
    return FIXTURES / "district_traffic.manifest.json"


@pytest.fixture
def village_manifest_path() -> pathlib.Path:
    return FIXTURES / "village_indicators.manifest.json"


@pytest.fixture
def two_route_path() -> pathlib.Path:
    return FIXTURES / "two_route.features.json"
