"""Access to bundled fixture data and working-directory seeding."""

from __future__ import annotations

import shutil
from pathlib import Path


def bundled_library_dir() -> Path:
    """Root of the bundled Library Management System fixture set."""
    return Path(__file__).parent / "fixtures" / "library"


def bundled_brief_path() -> Path:
    return bundled_library_dir() / "brief.yaml"


def bundled_mock_dir() -> Path:
    return bundled_library_dir() / "mock"


_SEED_CONFIG = """\
# Offline run against the bundled Library Management System fixtures.
mode: collaborative
rounds: 3
parallel_l3: false
# The bundled L2 view declares 4 containers + 1 data store; including the
# data store yields the full 5-instance component level.
l3_skip_datastores: false
fixtures_dir: ./mock
generation:
  backend: mock
  model_id: mock-architect
judge:
  backend: mock
  model_id: mock-judge
compilation:
  mode: internal
weights:
  severity:
    low: 1
    medium: 3
    high: 5
    critical: 8
"""


def seed_fixtures(dest: Path | str) -> Path:
    """Copy the bundled fixture set into ``dest`` with a ready-to-run config.

    Writes ``brief.yaml``, ``config.yaml`` and the ``mock/`` fixture tree;
    existing files are left untouched.
    """
    dest = Path(dest)
    dest.mkdir(parents=True, exist_ok=True)
    brief_target = dest / "brief.yaml"
    if not brief_target.exists():
        shutil.copyfile(bundled_brief_path(), brief_target)
    mock_target = dest / "mock"
    if not mock_target.exists():
        shutil.copytree(bundled_mock_dir(), mock_target)
    config_target = dest / "config.yaml"
    if not config_target.exists():
        config_target.write_text(_SEED_CONFIG, encoding="utf-8")
    return dest
