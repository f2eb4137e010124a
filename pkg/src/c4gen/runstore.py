"""Run directory persistence: artifacts on disk plus a JSON manifest.

Layout: ``runs/<run-id>/<level>[_<container>]/{transcript.md,
analysis_report.md, view.yaml, diagram.puml}`` with ``manifest.json`` at the
run root recording config, brief hash, statuses and token usage.
"""

from __future__ import annotations

import hashlib
import json
import re
import time
import uuid
from dataclasses import dataclass
from pathlib import Path

from .domain import Artifact, ArtifactKind, Level, PipelineError, SystemBrief, TokenUsage
from .orchestrator import InstanceStatus, LevelInstance, RunResult

MANIFEST_SCHEMA_VERSION = "1.0"

ARTIFACT_FILENAMES = {
    ArtifactKind.TRANSCRIPT: "transcript.md",
    ArtifactKind.ANALYSIS_REPORT: "analysis_report.md",
    ArtifactKind.VIEW_YAML: "view.yaml",
    ArtifactKind.PLANTUML_DIAGRAM: "diagram.puml",
}


class RunStoreError(PipelineError):
    """A run directory is missing or its manifest is unreadable."""


def brief_sha256(brief: SystemBrief) -> str:
    canonical = json.dumps(brief.to_dict(), sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def new_run_id(brief: SystemBrief) -> str:
    slug = re.sub(r"[^a-z0-9]+", "-", brief.title.lower()).strip("-")[:40] or "run"
    stamp = time.strftime("%Y%m%d-%H%M%S")
    return f"{slug}-{stamp}-{uuid.uuid4().hex[:6]}"


def _usage_dict(usage: TokenUsage) -> dict:
    return {
        "input_tokens": usage.input_tokens,
        "output_tokens": usage.output_tokens,
        "estimated": usage.estimated,
    }


def save_run(
    out_dir: Path | str,
    brief: SystemBrief,
    result: RunResult,
    config_echo: dict,
    model_id: str,
    configuration: str,
    run_id: str | None = None,
) -> Path:
    """Persist a run result; returns the run directory."""
    run_id = run_id or new_run_id(brief)
    run_dir = Path(out_dir) / run_id
    run_dir.mkdir(parents=True, exist_ok=False)

    artifact_index = []
    for artifact in result.final_state.artifacts:
        instance_dir = run_dir / artifact.level.dirname(artifact.focus_container)
        instance_dir.mkdir(parents=True, exist_ok=True)
        filename = ARTIFACT_FILENAMES[artifact.kind]
        (instance_dir / filename).write_text(artifact.content, encoding="utf-8")
        artifact_index.append(
            {
                "kind": artifact.kind.value,
                "level": artifact.level.canonical_name,
                "focus": artifact.focus_container,
                "sequence": artifact.sequence_number,
                "path": f"{artifact.level.dirname(artifact.focus_container)}/{filename}",
                "usage": _usage_dict(artifact.token_usage),
            }
        )

    statuses = {}
    for instance, status in result.per_instance_status.items():
        statuses[instance.dirname] = {
            "level": instance.level.canonical_name,
            "focus": instance.focus_container,
            "complete": status.complete,
            "reason": status.reason,
        }

    (run_dir / "brief.json").write_text(
        json.dumps(brief.to_dict(), indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )

    manifest = {
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "run_id": run_id,
        "created_at": time.strftime("%Y-%m-%dT%H:%M:%S"),
        "model_id": model_id,
        "configuration": configuration,
        "brief_title": brief.title,
        "brief_sha256": brief_sha256(brief),
        "config": config_echo,
        "statuses": statuses,
        "component_queue": list(result.final_state.component_queue),
        "usage": _usage_dict(result.usage_total),
        "wall_time_ms": result.wall_time_ms,
        "artifacts": artifact_index,
    }
    (run_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
    )
    return run_dir


@dataclass
class LoadedRun:
    run_dir: Path
    manifest: dict
    instances: list[LevelInstance]
    statuses: dict[LevelInstance, InstanceStatus]

    def artifact_path(self, instance: LevelInstance, kind: ArtifactKind) -> Path:
        return self.run_dir / instance.dirname / ARTIFACT_FILENAMES[kind]

    def artifact_text(self, instance: LevelInstance, kind: ArtifactKind) -> str | None:
        path = self.artifact_path(instance, kind)
        if not path.is_file():
            return None
        return path.read_text(encoding="utf-8")

    def artifacts(self) -> list[Artifact]:
        """Reconstruct artifact values (content + sequence) from the index."""
        loaded = []
        for entry in self.manifest.get("artifacts", []):
            path = self.run_dir / entry["path"]
            if not path.is_file():
                continue
            usage = entry.get("usage", {})
            loaded.append(
                Artifact(
                    kind=ArtifactKind(entry["kind"]),
                    level=Level.parse(entry["level"]),
                    focus_container=entry.get("focus"),
                    content=path.read_text(encoding="utf-8"),
                    sequence_number=int(entry.get("sequence", 0)),
                    token_usage=TokenUsage(
                        input_tokens=int(usage.get("input_tokens", 0)),
                        output_tokens=int(usage.get("output_tokens", 0)),
                        estimated=bool(usage.get("estimated", False)),
                    ),
                )
            )
        return loaded


def load_run(run_dir: Path | str) -> LoadedRun:
    run_dir = Path(run_dir)
    manifest_path = run_dir / "manifest.json"
    if not manifest_path.is_file():
        raise RunStoreError(f"no manifest.json in {run_dir}")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise RunStoreError(f"unreadable manifest in {run_dir}: {exc}") from exc

    instances: list[LevelInstance] = []
    statuses: dict[LevelInstance, InstanceStatus] = {}
    for entry in manifest.get("statuses", {}).values():
        try:
            instance = LevelInstance(
                level=Level.parse(entry["level"]), focus_container=entry.get("focus")
            )
        except (KeyError, ValueError) as exc:
            raise RunStoreError(f"invalid status entry in manifest: {exc}") from exc
        instances.append(instance)
        statuses[instance] = InstanceStatus(
            complete=bool(entry.get("complete")), reason=entry.get("reason")
        )
    return LoadedRun(
        run_dir=run_dir, manifest=manifest, instances=instances, statuses=statuses
    )
