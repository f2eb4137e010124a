"""Prompt assembly: persona library, task instructions, and context selection.

Prompts are composed from editable template files (personas, task
instructions, output schema guides) plus a deterministic serialization of the
run state. Assembly is a pure function: identical inputs always produce
byte-identical prompt text.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path

from .domain import (
    Artifact,
    ArtifactKind,
    Level,
    Message,
    PipelineError,
    PipelineState,
    SystemBrief,
)


class MissingPrerequisite(PipelineError):
    """A context rule requires an artifact that the state does not contain."""

    def __init__(self, key: str):
        super().__init__(f"missing prerequisite artifact {key}")
        self.key = key


class TemplateError(PipelineError):
    """A required template file is absent or empty."""


class TaskKind(str, enum.Enum):
    ANALYZE = "analyze"
    SYNTHESIZE = "synthesize"
    STRUCTURE_YAML = "structure_yaml"
    GENERATE_PLANTUML = "generate_plantuml"


#: Tasks whose prompts carry an output schema guide.
SCHEMA_GUIDED_TASKS = frozenset({TaskKind.STRUCTURE_YAML, TaskKind.GENERATE_PLANTUML})

#: Round-robin team composition per level, in speaking order.
TEAM_IDS_BY_LEVEL = {
    Level.L1_CONTEXT: ("product_owner", "business_analyst", "lead_software_architect"),
    Level.L2_CONTAINER: (
        "software_architect",
        "lead_developer",
        "devops_specialist",
        "security_specialist",
    ),
    Level.L3_COMPONENT: (
        "lead_developer",
        "senior_developer",
        "database_administrator",
        "security_specialist",
    ),
}

#: Fixed specialist persona per processing task.
PROCESSING_PERSONA_IDS = {
    TaskKind.SYNTHESIZE: "technical_writer",
    TaskKind.STRUCTURE_YAML: "software_architect",
    TaskKind.GENERATE_PLANTUML: "plantuml_diagram_specialist",
}

SINGLE_AGENT_PERSONA_ID = "software_architect"

_DISPLAY_OVERRIDES = {
    "plantuml_diagram_specialist": "PlantUML Diagram Specialist",
    "devops_specialist": "DevOps Specialist",
}


@dataclass(frozen=True)
class Persona:
    id: str
    display_name: str
    narrative: str

    def __post_init__(self) -> None:
        if not self.narrative.strip():
            raise ValueError(f"persona {self.id!r} has an empty narrative")


@dataclass(frozen=True)
class ContextSelection:
    """Everything the prompt embeds besides persona and task instructions."""

    brief: SystemBrief
    level: Level
    focus_container: str | None
    primary_input: Artifact | None
    supporting_artifacts: tuple[Artifact, ...]
    live_messages: tuple[Message, ...]


@dataclass(frozen=True)
class AssembledPrompt:
    system_text: str
    user_text: str
    schema_guide: str | None = None


def _display_name(persona_id: str) -> str:
    return _DISPLAY_OVERRIDES.get(
        persona_id, persona_id.replace("_", " ").title()
    )


def default_templates_dir() -> Path:
    return Path(__file__).parent / "templates"


class PromptLibrary:
    """Loads persona narratives, task instructions and schema guides at startup.

    Layout: ``personas/<id>.txt``, ``tasks/<task>.txt``,
    ``schemas/<task>_guide.txt``. Files are plain UTF-8 text with
    ``{{placeholder}}`` slots.
    """

    def __init__(self, templates_dir: Path | str | None = None):
        self.root = Path(templates_dir) if templates_dir else default_templates_dir()
        if not self.root.is_dir():
            raise TemplateError(f"templates directory not found: {self.root}")
        self._personas: dict[str, Persona] = {}
        for path in sorted((self.root / "personas").glob("*.txt")):
            narrative = path.read_text(encoding="utf-8").strip()
            if not narrative:
                raise TemplateError(f"empty persona template: {path}")
            pid = path.stem
            self._personas[pid] = Persona(pid, _display_name(pid), narrative)
        self._tasks: dict[TaskKind, str] = {}
        self._guides: dict[TaskKind, str] = {}
        for task in TaskKind:
            task_path = self.root / "tasks" / f"{task.value}.txt"
            if not task_path.is_file():
                raise TemplateError(f"missing task template: {task_path}")
            self._tasks[task] = task_path.read_text(encoding="utf-8").strip()
            if task in SCHEMA_GUIDED_TASKS:
                guide_path = self.root / "schemas" / f"{task.value}_guide.txt"
                if not guide_path.is_file():
                    raise TemplateError(f"missing schema guide: {guide_path}")
                self._guides[task] = guide_path.read_text(encoding="utf-8").strip()

    def persona(self, persona_id: str) -> Persona:
        if persona_id not in self._personas:
            raise TemplateError(f"unknown persona id {persona_id!r}")
        return self._personas[persona_id]

    def team_for_level(self, level: Level) -> list[Persona]:
        return [self.persona(pid) for pid in TEAM_IDS_BY_LEVEL[level]]

    def task_template(self, task: TaskKind) -> str:
        return self._tasks[task]

    def schema_guide(self, task: TaskKind) -> str | None:
        return self._guides.get(task)


_DEFAULT_LIBRARY: PromptLibrary | None = None


def default_library() -> PromptLibrary:
    global _DEFAULT_LIBRARY
    if _DEFAULT_LIBRARY is None:
        _DEFAULT_LIBRARY = PromptLibrary()
    return _DEFAULT_LIBRARY


def team_for_level(level: Level, library: PromptLibrary | None = None) -> list[Persona]:
    """The round-robin team for a level, in fixed speaking order."""
    return (library or default_library()).team_for_level(level)


def render_brief(brief: SystemBrief) -> str:
    def bullet_block(items: tuple[str, ...]) -> str:
        return "\n".join(f"- {item}" for item in items) if items else "- (none)"

    return (
        f"Title: {brief.title}\n"
        f"Domain: {brief.domain or '(unspecified)'}\n"
        f"Description:\n{brief.description}\n"
        f"Constraints:\n{bullet_block(brief.constraints)}\n"
        f"Functional requirements:\n{bullet_block(brief.functional_requirements)}\n"
        f"Non-functional requirements:\n{bullet_block(brief.non_functional_requirements)}"
    )


def serialize_messages(messages: tuple[Message, ...]) -> str:
    if not messages:
        return "(no messages yet)"
    return "\n\n".join(f"[{m.author_persona}]: {m.content}" for m in messages)


def _artifact_header(a: Artifact) -> str:
    focus = f", container {a.focus_container}" if a.focus_container else ""
    return f"--- {a.kind.value} ({a.level.short} {a.level.label}{focus}) ---"


def _serialize_artifacts(artifacts: tuple[Artifact, ...]) -> str:
    if not artifacts:
        return "(none)"
    return "\n\n".join(f"{_artifact_header(a)}\n{a.content}" for a in artifacts)


def _lower_level_views(
    state: PipelineState, level: Level, require: bool
) -> list[Artifact]:
    views = []
    for lower in Level:
        if lower >= level:
            break
        art = state.find_artifact(ArtifactKind.VIEW_YAML, lower)
        if art is None:
            if require:
                raise MissingPrerequisite(f"VIEW_YAML:{lower.short}")
            continue
        views.append(art)
    return views


def _require(state: PipelineState, kind: ArtifactKind, level: Level, focus: str | None) -> Artifact:
    art = state.find_artifact(kind, level, focus)
    if art is None:
        key = f"{kind.value}:{level.short}" + (f":{focus}" if focus else "")
        raise MissingPrerequisite(key)
    return art


def build_context(
    state: PipelineState,
    level: Level,
    task: TaskKind,
    focus: str | None = None,
) -> ContextSelection:
    """Select the prompt context for a (task, level) pair.

    Rule table: ANALYZE takes the brief, all lower-level views and the live
    session messages; SYNTHESIZE takes the instance transcript;
    STRUCTURE_YAML takes the instance analysis report plus lower-level views;
    GENERATE_PLANTUML takes the instance view. Component-level (L3) tasks
    always receive the L1 and L2 views as supporting context.
    """
    at_l3 = level is Level.L3_COMPONENT
    primary: Artifact | None = None
    live: tuple[Message, ...] = ()

    if task is TaskKind.ANALYZE:
        supporting = _lower_level_views(state, level, require=True)
        live = state.messages
    elif task is TaskKind.SYNTHESIZE:
        primary = _require(state, ArtifactKind.TRANSCRIPT, level, focus)
        supporting = _lower_level_views(state, level, require=True) if at_l3 else []
    elif task is TaskKind.STRUCTURE_YAML:
        primary = _require(state, ArtifactKind.ANALYSIS_REPORT, level, focus)
        supporting = _lower_level_views(state, level, require=True)
    else:  # GENERATE_PLANTUML
        primary = _require(state, ArtifactKind.VIEW_YAML, level, focus)
        supporting = _lower_level_views(state, level, require=True) if at_l3 else []

    return ContextSelection(
        brief=state.brief,
        level=level,
        focus_container=focus,
        primary_input=primary,
        supporting_artifacts=tuple(supporting),
        live_messages=live,
    )


def _render(template: str, slots: dict[str, str]) -> str:
    text = template
    for key, value in slots.items():
        text = text.replace("{{" + key + "}}", value)
    return text


def assemble_prompt(
    persona: Persona,
    task: TaskKind,
    ctx: ContextSelection,
    library: PromptLibrary | None = None,
) -> AssembledPrompt:
    """Combine persona narrative, task instructions and serialized context.

    Context artifacts are embedded in a fixed order: brief first, supporting
    artifacts ascending by level, primary input last.
    """
    lib = library or default_library()
    primary = ctx.primary_input
    slots = {
        "persona_name": persona.display_name,
        "title": ctx.brief.title,
        "level": ctx.level.short,
        "level_label": ctx.level.label,
        "focus": ctx.focus_container or "the whole system",
        "brief": render_brief(ctx.brief),
        "context": _serialize_artifacts(ctx.supporting_artifacts),
        "discussion": serialize_messages(ctx.live_messages),
        "primary_kind": primary.kind.value if primary else "(none)",
        "primary": primary.content if primary else "(none)",
    }
    user_text = _render(lib.task_template(task), slots)
    guide = lib.schema_guide(task)
    schema_guide = _render(guide, slots) if guide is not None else None
    return AssembledPrompt(
        system_text=_render(persona.narrative, slots),
        user_text=user_text,
        schema_guide=schema_guide,
    )
