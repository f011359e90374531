from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from sepsis_pathways.textproc import TextResources

settings.register_profile("repo", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")

ROOT = Path(__file__).resolve().parents[1]


@pytest.fixture(scope="session")
def res():
    return TextResources.default()


@pytest.fixture(scope="session")
def reference_text():
    """Reference document shipped in the repository root."""
    return (ROOT / "paper.md").read_text("utf-8")
