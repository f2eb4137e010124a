"""Core pipeline state: briefs, messages, artifacts, and append-only transitions.

The generation run is modelled as a sequence of immutable states. Every
transition returns a new ``PipelineState`` whose message and artifact lists
extend the previous ones, so the append-only property is directly testable.
"""

from __future__ import annotations

import enum
import json
import warnings
from dataclasses import dataclass, field, replace


class PipelineError(Exception):
    """Base class for all errors raised by this package."""


class InvalidBrief(PipelineError):
    """A system brief is missing required content."""


class ParseError(PipelineError):
    """A brief file could not be parsed in its declared format."""


class TurnIndexGap(PipelineError):
    """A message's turn index does not continue the current session."""


class DuplicateArtifact(PipelineError):
    """An artifact with the same (kind, level, focus) already exists."""


class Level(enum.IntEnum):
    """The three C4 abstraction levels handled by the pipeline (L1 < L2 < L3)."""

    L1_CONTEXT = 1
    L2_CONTAINER = 2
    L3_COMPONENT = 3

    @property
    def short(self) -> str:
        return f"L{int(self)}"

    @property
    def label(self) -> str:
        return {1: "Context", 2: "Container", 3: "Component"}[int(self)]

    @property
    def canonical_name(self) -> str:
        return {1: "L1_Context", 2: "L2_Container", 3: "L3_Component"}[int(self)]

    def dirname(self, focus: str | None = None) -> str:
        base = self.short.lower()
        return f"{base}_{focus}" if focus else base

    @classmethod
    def parse(cls, text: str) -> "Level":
        """Accept canonical names (L2_Container), short forms (L2) and labels."""
        key = str(text).strip().lower()
        aliases = {
            "l1": cls.L1_CONTEXT, "l1_context": cls.L1_CONTEXT, "context": cls.L1_CONTEXT,
            "l2": cls.L2_CONTAINER, "l2_container": cls.L2_CONTAINER, "container": cls.L2_CONTAINER,
            "l3": cls.L3_COMPONENT, "l3_component": cls.L3_COMPONENT, "component": cls.L3_COMPONENT,
        }
        if key not in aliases:
            raise ValueError(f"unknown level {text!r}")
        return aliases[key]


class ArtifactKind(str, enum.Enum):
    TRANSCRIPT = "TRANSCRIPT"
    ANALYSIS_REPORT = "ANALYSIS_REPORT"
    VIEW_YAML = "VIEW_YAML"
    PLANTUML_DIAGRAM = "PLANTUML_DIAGRAM"


@dataclass(frozen=True)
class TokenUsage:
    """Input/output token counts for one or more gateway calls."""

    input_tokens: int = 0
    output_tokens: int = 0
    estimated: bool = False

    def __post_init__(self) -> None:
        if self.input_tokens < 0 or self.output_tokens < 0:
            raise ValueError("token counts must be non-negative")

    def __add__(self, other: "TokenUsage") -> "TokenUsage":
        return TokenUsage(
            self.input_tokens + other.input_tokens,
            self.output_tokens + other.output_tokens,
            self.estimated or other.estimated,
        )

    @property
    def total(self) -> int:
        return self.input_tokens + self.output_tokens


@dataclass(frozen=True)
class SystemBrief:
    """The natural-language input describing the target system."""

    title: str
    description: str
    domain: str = ""
    constraints: tuple[str, ...] = ()
    functional_requirements: tuple[str, ...] = ()
    non_functional_requirements: tuple[str, ...] = ()

    def validate(self) -> None:
        if not self.title.strip():
            raise InvalidBrief("brief field 'title' must be non-empty")
        if not self.description.strip():
            raise InvalidBrief("brief field 'description' must be non-empty")
        if not self.functional_requirements:
            raise InvalidBrief("brief field 'functional_requirements' must be non-empty")

    def to_dict(self) -> dict:
        return {
            "title": self.title,
            "description": self.description,
            "domain": self.domain,
            "constraints": list(self.constraints),
            "functional_requirements": list(self.functional_requirements),
            "non_functional_requirements": list(self.non_functional_requirements),
        }


@dataclass(frozen=True)
class Message:
    """One turn of a collaborative session."""

    author_persona: str
    turn_index: int
    content: str
    token_usage: TokenUsage = field(default_factory=TokenUsage)


@dataclass(frozen=True)
class Artifact:
    """Typed, append-only output unit of the pipeline.

    ``focus_container`` is present exactly for component-level (L3) artifacts.
    ``sequence_number`` is assigned by :func:`append_artifact`.
    """

    kind: ArtifactKind
    level: Level
    focus_container: str | None
    content: str
    sequence_number: int = 0
    token_usage: TokenUsage = field(default_factory=TokenUsage)

    def __post_init__(self) -> None:
        if self.level is Level.L3_COMPONENT:
            if not self.focus_container:
                raise ValueError("L3 artifacts require a focus_container")
        elif self.focus_container is not None:
            raise ValueError("focus_container is only valid for L3 artifacts")

    @property
    def key(self) -> tuple[ArtifactKind, Level, str | None]:
        return (self.kind, self.level, self.focus_container)


@dataclass(frozen=True)
class PipelineState:
    """The 4-tuple of message history, brief, artifact set and component queue."""

    brief: SystemBrief
    messages: tuple[Message, ...] = ()
    artifacts: tuple[Artifact, ...] = ()
    component_queue: tuple[str, ...] = ()

    def find_artifact(
        self, kind: ArtifactKind, level: Level, focus: str | None = None
    ) -> Artifact | None:
        for a in self.artifacts:
            if a.key == (kind, level, focus):
                return a
        return None


def new_initial_state(brief: SystemBrief) -> PipelineState:
    """Build the initial state: empty history, empty artifact set, empty queue."""
    brief.validate()
    return PipelineState(brief=brief)


def append_message(state: PipelineState, m: Message) -> PipelineState:
    """Extend the current session history by one message.

    Turn indices must be consecutive from 0 within the session.
    """
    expected = len(state.messages)
    if m.turn_index != expected:
        raise TurnIndexGap(
            f"turn_index {m.turn_index} does not match session message count {expected}"
        )
    return replace(state, messages=state.messages + (m,))


def append_artifact(state: PipelineState, a: Artifact) -> PipelineState:
    """Append an artifact, assigning the next sequence number.

    The input artifact's own sequence number is ignored; identity is the
    (kind, level, focus_container) key and collisions are rejected.
    """
    if state.find_artifact(a.kind, a.level, a.focus_container) is not None:
        raise DuplicateArtifact(
            f"artifact {a.kind.value}/{a.level.short}"
            f"{'/' + a.focus_container if a.focus_container else ''} already exists"
        )
    previous_max = max((x.sequence_number for x in state.artifacts), default=-1)
    stamped = replace(a, sequence_number=previous_max + 1)
    return replace(state, artifacts=state.artifacts + (stamped,))


def reset_messages(state: PipelineState) -> PipelineState:
    """Clear the session history (a completed session was frozen into a transcript)."""
    return replace(state, messages=())


def with_component_queue(state: PipelineState, aliases: list[str]) -> PipelineState:
    return replace(state, component_queue=tuple(aliases))


class BriefFormat(str, enum.Enum):
    YAML = "yaml"
    JSON = "json"


BRIEF_KEYS = (
    "title",
    "description",
    "domain",
    "constraints",
    "functional_requirements",
    "non_functional_requirements",
)

_LIST_KEYS = ("constraints", "functional_requirements", "non_functional_requirements")


def _clean_list(value: object, key: str) -> tuple[str, ...]:
    if value is None:
        return ()
    if not isinstance(value, list):
        raise InvalidBrief(f"brief field '{key}' must be a list of strings")
    items = []
    for entry in value:
        if not isinstance(entry, str):
            raise InvalidBrief(f"brief field '{key}' must be a list of strings")
        entry = entry.strip()
        if entry:
            items.append(entry)
    return tuple(items)


def validate_brief(raw: str, format: BriefFormat = BriefFormat.YAML) -> SystemBrief:
    """Parse and normalize a brief document (YAML or JSON).

    Unknown keys are dropped with a warning listing them; missing required
    fields raise :class:`InvalidBrief`.
    """
    if format is BriefFormat.YAML:
        import yaml

        try:
            data = yaml.safe_load(raw)
        except yaml.YAMLError as exc:
            raise ParseError(f"malformed YAML brief: {exc}") from exc
    else:
        try:
            data = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ParseError(f"malformed JSON brief: {exc}") from exc

    if not isinstance(data, dict):
        raise ParseError("brief document must be a mapping")

    unknown = sorted(k for k in data if k not in BRIEF_KEYS)
    if unknown:
        warnings.warn(f"brief contains unknown keys, ignored: {', '.join(unknown)}")

    def _text(key: str) -> str:
        value = data.get(key)
        if value is None:
            return ""
        if not isinstance(value, str):
            raise InvalidBrief(f"brief field '{key}' must be text")
        return value.strip()

    for required in ("title", "description"):
        if required not in data or not _text(required):
            raise InvalidBrief(f"brief field '{required}' is missing or empty")

    brief = SystemBrief(
        title=_text("title"),
        description=_text("description"),
        domain=_text("domain"),
        constraints=_clean_list(data.get("constraints"), "constraints"),
        functional_requirements=_clean_list(
            data.get("functional_requirements"), "functional_requirements"
        ),
        non_functional_requirements=_clean_list(
            data.get("non_functional_requirements"), "non_functional_requirements"
        ),
    )
    brief.validate()
    return brief
