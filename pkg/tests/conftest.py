"""Shared test fixtures: briefs, states, gateways, and seeded work dirs."""

from __future__ import annotations

import shutil
from pathlib import Path

import pytest

from c4gen.domain import (
    Artifact,
    ArtifactKind,
    Level,
    SystemBrief,
    append_artifact,
    new_initial_state,
)
from c4gen.gateway import Gateway, MockBackend, ScriptedBackend
from c4gen.resources import bundled_brief_path, bundled_mock_dir

LIBRARY_MOCK = bundled_mock_dir()


@pytest.fixture
def brief() -> SystemBrief:
    return SystemBrief(
        title="Library Management System",
        description="A system for managing the catalog and lending workflows.",
        domain="Education/Public Services",
        constraints=("Must integrate with the email gateway",),
        functional_requirements=(
            "Members can search the catalog",
            "Overdue loans trigger email notifications",
        ),
        non_functional_requirements=("99.9% availability",),
    )


@pytest.fixture
def library_brief_text() -> str:
    return bundled_brief_path().read_text(encoding="utf-8")


def read_fixture(relative: str) -> str:
    return (LIBRARY_MOCK / relative).read_text(encoding="utf-8")


def mock_gateway(delay_s: float = 0.0) -> Gateway:
    return Gateway(MockBackend(LIBRARY_MOCK, delay_s=delay_s))


def scripted_gateway(responses: list[str]) -> tuple[Gateway, ScriptedBackend]:
    backend = ScriptedBackend(responses)
    return Gateway(backend), backend


def state_with_artifacts(brief: SystemBrief, *artifacts: Artifact):
    state = new_initial_state(brief)
    for artifact in artifacts:
        state = append_artifact(state, artifact)
    return state


def make_artifact(
    kind: ArtifactKind,
    level: Level,
    focus: str | None = None,
    content: str = "content",
) -> Artifact:
    return Artifact(kind=kind, level=level, focus_container=focus, content=content)


@pytest.fixture
def seeded_workdir(tmp_path: Path) -> Path:
    """A working directory with the bundled fixture set and mock config."""
    from c4gen.resources import seed_fixtures

    return seed_fixtures(tmp_path / "work")


def corrupt_fixture_copy(tmp_path: Path, relative: str, garbage: str) -> Path:
    """Copy the bundled mock tree and overwrite one fixture file."""
    target = tmp_path / "mock"
    if not target.exists():
        shutil.copytree(LIBRARY_MOCK, target)
    (target / relative).write_text(garbage, encoding="utf-8")
    return target
