"""LLM-as-a-judge layer: semantic consistency, architect critique, red team.

Judge calls go through the same gateway abstraction as generation, against a
separately configured backend. Every judge output must be structured JSON;
responses that fail validation are retried and, on exhaustion, surface as
:class:`JudgeUnavailable` so the metric is reported as null with a reason,
never silently defaulted to a number.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass

from .domain import Artifact, ArtifactKind, PipelineError, SystemBrief
from .gateway import Gateway, GatewayError, GenerationParams
from .prompting import AssembledPrompt, render_brief
from .views import DiagramModel, ViewModel

JUDGE_DISCLAIMER = (
    "Judge scores are heuristic indicators produced by a language model; they "
    "may reflect model bias, hallucination, or domain miscalibration and are "
    "not calibrated against human expert ratings."
)

#: Fixture ids used by the mock backend, one per judge metric.
FIXTURE_ENTITY_EXTRACTION = "judge/entity_extraction.json"
FIXTURE_ENTITY_VERIFICATION = "judge/entity_verification.json"
FIXTURE_ARCHITECT_CRITIQUE = "judge/architect_critique.json"
FIXTURE_SECURITY_RED_TEAM = "judge/security_red_team.json"

DEFAULT_SEVERITY_WEIGHTS = {"low": 1.0, "medium": 3.0, "high": 5.0, "critical": 8.0}


class JudgeUnavailable(PipelineError):
    """A judge metric could not be computed; carries machine-readable reasons."""

    def __init__(self, reason: str, diagnostics: list[str] | None = None):
        super().__init__(reason)
        self.reason = reason
        self.diagnostics = list(diagnostics or [])


class EntityRole(str, enum.Enum):
    ACTOR = "actor"
    EXTERNAL_SYSTEM = "external_system"
    CORE_SYSTEM = "core_system"


@dataclass(frozen=True)
class Entity:
    name: str
    role: EntityRole


@dataclass(frozen=True)
class EntityList:
    entities: tuple[Entity, ...]

    @classmethod
    def from_entries(cls, entries: list[Entity]) -> "EntityList":
        # Deduplicate case-insensitively, first occurrence wins.
        seen: set[str] = set()
        kept = []
        for entity in entries:
            key = entity.name.casefold()
            if key not in seen:
                seen.add(key)
                kept.append(entity)
        return cls(entities=tuple(kept))


@dataclass(frozen=True)
class SemanticConsistencyScore:
    present: tuple[str, ...]
    total: int
    score_percent: float


@dataclass(frozen=True)
class Critique:
    clarity: int
    feasibility: int
    key_risks: tuple[str, ...]
    recommendation: str


class Severity(str, enum.Enum):
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"
    CRITICAL = "critical"


@dataclass(frozen=True)
class VulnerabilityFinding:
    title: str
    severity: Severity
    affected_elements: tuple[str, ...]
    rationale: str


@dataclass(frozen=True)
class RiskScore:
    points: float
    findings: tuple[VulnerabilityFinding, ...]
    weights_used: tuple[tuple[str, float], ...]


def extract_json_object(text: str) -> dict:
    """Pull the first JSON object out of a judge completion.

    Accepts raw JSON, fenced ```json blocks, or JSON embedded in prose.
    """
    candidate = text.strip()
    if candidate.startswith("```"):
        candidate = candidate.strip("`")
        if candidate.startswith("json"):
            candidate = candidate[4:]
        candidate = candidate.strip()
    try:
        obj = json.loads(candidate)
        if isinstance(obj, dict):
            return obj
    except json.JSONDecodeError:
        pass
    start = text.find("{")
    end = text.rfind("}")
    if start != -1 and end > start:
        obj = json.loads(text[start : end + 1])
        if isinstance(obj, dict):
            return obj
    raise ValueError("no JSON object found in judge output")


_EXTRACTION_SYSTEM = (
    "You are an exacting requirements analyst. You identify the entities a "
    "software architecture must account for, directly from the source text, "
    "without inventing anything."
)

_EXTRACTION_GUIDE = (
    "Return ONLY a JSON object of the form:\n"
    '{"entities": [{"name": "...", "role": "actor|external_system|core_system"}]}'
)

_VERIFICATION_SYSTEM = (
    "You are a meticulous reviewer of C4 context diagrams. You decide, entity "
    "by entity, whether a diagram represents it, judging by meaning rather "
    "than exact spelling."
)

_VERIFICATION_GUIDE = (
    "Return ONLY a JSON object of the form:\n"
    '{"results": [{"name": "...", "present": true|false}]}\n'
    "Include every entity from the list exactly once."
)

_ARCHITECT_SYSTEM = (
    "You are a Principal Architect performing a comprehensive critique of a "
    "generated software architecture, judging clarity and feasibility the way "
    "a seasoned reviewer would in a design review."
)

_ARCHITECT_GUIDE = (
    "Return ONLY a JSON object of the form:\n"
    '{"clarity": 1-5, "feasibility": 1-5, "key_risks": ["..."], '
    '"recommendation": "..."}\n'
    "Clarity and feasibility are integers where 5 is excellent."
)

_SECURITY_SYSTEM = (
    "You are a Cybersecurity Expert red-teaming a container architecture. You "
    "identify concrete, plausible vulnerabilities in the design as given."
)

_SECURITY_GUIDE = (
    "Return ONLY a JSON object of the form:\n"
    '{"findings": [{"title": "...", "severity": "low|medium|high|critical", '
    '"affected_elements": ["alias"], "rationale": "..."}]}\n'
    "Report an empty findings list if the design shows no notable weaknesses."
)


def _render_view_inventory(view: ViewModel) -> str:
    lines = []
    for e in view.elements:
        extra = f" [{e.technology}]" if e.technology else ""
        lines.append(f"- {e.alias}: {e.name} ({e.kind.value}){extra}")
    return "\n".join(lines)


def _parse_entities(text: str) -> EntityList:
    data = extract_json_object(text)
    raw = data.get("entities")
    if not isinstance(raw, list):
        raise ValueError("judge output lacks an 'entities' list")
    entries = []
    for item in raw:
        if not isinstance(item, dict) or "name" not in item or "role" not in item:
            raise ValueError(f"malformed entity entry: {item!r}")
        name = str(item["name"]).strip()
        if not name:
            raise ValueError("entity with empty name")
        try:
            role = EntityRole(str(item["role"]).strip().lower())
        except ValueError as exc:
            raise ValueError(f"unknown entity role {item['role']!r}") from exc
        entries.append(Entity(name=name, role=role))
    return EntityList.from_entries(entries)


def extract_ground_truth_entities(
    brief: SystemBrief,
    gateway: Gateway,
    params: GenerationParams,
    max_attempts: int = 3,
) -> EntityList:
    """Stage one of the semantic chain: entities the brief demands."""
    prompt = AssembledPrompt(
        system_text=_EXTRACTION_SYSTEM,
        user_text=(
            "Extract the key entities this system must account for from the "
            "brief below: human actors, external systems, and the core system "
            "itself.\n\nSystem brief:\n" + render_brief(brief)
        ),
        schema_guide=_EXTRACTION_GUIDE,
    )
    try:
        completion = gateway.complete_validated(
            prompt,
            params,
            validator=_parse_entities,
            max_attempts=max_attempts,
            fixture=FIXTURE_ENTITY_EXTRACTION,
        )
    except GatewayError as exc:
        raise JudgeUnavailable(
            "entity extraction failed", diagnostics=_diagnostics_of(exc)
        ) from exc
    return _parse_entities(completion.text)


def _parse_verification(text: str) -> dict[str, bool]:
    data = extract_json_object(text)
    raw = data.get("results")
    if not isinstance(raw, list):
        raise ValueError("judge output lacks a 'results' list")
    results: dict[str, bool] = {}
    for item in raw:
        if not isinstance(item, dict) or "name" not in item or "present" not in item:
            raise ValueError(f"malformed verification entry: {item!r}")
        if not isinstance(item["present"], bool):
            raise ValueError("'present' must be a boolean")
        results[str(item["name"]).casefold()] = item["present"]
    return results


def verify_entities(
    entities: EntityList,
    l1_view: ViewModel,
    l1_diagram: DiagramModel,
    gateway: Gateway,
    params: GenerationParams,
    max_attempts: int = 3,
) -> SemanticConsistencyScore:
    """Stage two: which ground-truth entities does the L1 view represent."""
    if not entities.entities:
        raise JudgeUnavailable("empty ground truth")
    listing = "\n".join(
        f"- {e.name} ({e.role.value})" for e in entities.entities
    )
    prompt = AssembledPrompt(
        system_text=_VERIFICATION_SYSTEM,
        user_text=(
            "Decide for each entity below whether the context view represents "
            "it.\n\nEntities:\n" + listing + "\n\nContext view elements:\n"
            + _render_view_inventory(l1_view)
            + "\n\nContext diagram source:\n" + l1_diagram.raw_text
        ),
        schema_guide=_VERIFICATION_GUIDE,
    )
    try:
        completion = gateway.complete_validated(
            prompt,
            params,
            validator=_parse_verification,
            max_attempts=max_attempts,
            fixture=FIXTURE_ENTITY_VERIFICATION,
        )
    except GatewayError as exc:
        raise JudgeUnavailable(
            "entity verification failed", diagnostics=_diagnostics_of(exc)
        ) from exc
    results = _parse_verification(completion.text)
    present = tuple(
        e.name for e in entities.entities if results.get(e.name.casefold(), False)
    )
    total = len(entities.entities)
    return SemanticConsistencyScore(
        present=present,
        total=total,
        score_percent=100.0 * len(present) / total,
    )


def _parse_critique_raw(text: str) -> dict:
    data = extract_json_object(text)
    for key in ("clarity", "feasibility", "key_risks", "recommendation"):
        if key not in data:
            raise ValueError(f"critique output lacks '{key}'")
    for key in ("clarity", "feasibility"):
        if not isinstance(data[key], (int, float)) or isinstance(data[key], bool):
            raise ValueError(f"'{key}' must be a number")
    if not isinstance(data["key_risks"], list):
        raise ValueError("'key_risks' must be a list")
    return data


def architect_critique(
    artifacts: list[Artifact],
    gateway: Gateway,
    params: GenerationParams,
    max_attempts: int = 3,
    max_context_chars: int = 60000,
) -> tuple[Critique, tuple[str, ...]]:
    """Principal-architect critique over analysis reports and diagrams.

    Returns the parsed critique plus any clamp warnings. When the combined
    artifact text exceeds the budget, the oldest artifacts are dropped first.
    """
    relevant = [
        a
        for a in sorted(artifacts, key=lambda a: a.sequence_number)
        if a.kind in (ArtifactKind.ANALYSIS_REPORT, ArtifactKind.PLANTUML_DIAGRAM)
    ]
    if not relevant:
        raise JudgeUnavailable("no analysis reports or diagrams to critique")
    while len(relevant) > 1 and sum(len(a.content) for a in relevant) > max_context_chars:
        relevant.pop(0)

    blocks = []
    for a in relevant:
        focus = f", container {a.focus_container}" if a.focus_container else ""
        blocks.append(f"--- {a.kind.value} ({a.level.short}{focus}) ---\n{a.content}")
    prompt = AssembledPrompt(
        system_text=_ARCHITECT_SYSTEM,
        user_text=(
            "Critique the architecture documented by the artifacts below. "
            "Rate clarity and feasibility on a 1-5 scale (5 is excellent), "
            "identify the key risks, and give one concrete recommendation for "
            "improvement.\n\n" + "\n\n".join(blocks)
        ),
        schema_guide=_ARCHITECT_GUIDE,
    )
    try:
        completion = gateway.complete_validated(
            prompt,
            params,
            validator=_parse_critique_raw,
            max_attempts=max_attempts,
            fixture=FIXTURE_ARCHITECT_CRITIQUE,
        )
    except GatewayError as exc:
        raise JudgeUnavailable(
            "architect critique failed", diagnostics=_diagnostics_of(exc)
        ) from exc

    data = _parse_critique_raw(completion.text)
    warnings: list[str] = []

    def clamp(key: str) -> int:
        value = int(round(data[key]))
        if value < 1 or value > 5:
            clamped = min(5, max(1, value))
            warnings.append(f"{key} rating {value} out of range, clamped to {clamped}")
            return clamped
        return value

    critique = Critique(
        clarity=clamp("clarity"),
        feasibility=clamp("feasibility"),
        key_risks=tuple(str(r) for r in data["key_risks"]),
        recommendation=str(data["recommendation"]),
    )
    return critique, tuple(warnings)


def _parse_findings(text: str) -> list[VulnerabilityFinding]:
    data = extract_json_object(text)
    raw = data.get("findings")
    if not isinstance(raw, list):
        raise ValueError("judge output lacks a 'findings' list")
    findings = []
    for item in raw:
        if not isinstance(item, dict) or "title" not in item or "severity" not in item:
            raise ValueError(f"malformed finding: {item!r}")
        try:
            severity = Severity(str(item["severity"]).strip().lower())
        except ValueError as exc:
            raise ValueError(f"unknown severity {item['severity']!r}") from exc
        affected = item.get("affected_elements", [])
        if not isinstance(affected, list):
            raise ValueError("'affected_elements' must be a list")
        findings.append(
            VulnerabilityFinding(
                title=str(item["title"]),
                severity=severity,
                affected_elements=tuple(str(a) for a in affected),
                rationale=str(item.get("rationale", "")),
            )
        )
    return findings


def security_red_team(
    l2_view: ViewModel,
    l2_diagram: DiagramModel,
    gateway: Gateway,
    params: GenerationParams,
    weights: dict[str, float] | None = None,
    max_attempts: int = 3,
) -> RiskScore:
    """Red-team the container view; points are the severity-weighted sum.

    Lower is better. The weights used are echoed in the result so scores are
    self-describing.
    """
    table = dict(DEFAULT_SEVERITY_WEIGHTS)
    if weights:
        table.update({str(k).lower(): float(v) for k, v in weights.items()})
    prompt = AssembledPrompt(
        system_text=_SECURITY_SYSTEM,
        user_text=(
            "Assess the container architecture below for security "
            "vulnerabilities: trust boundaries, data exposure, missing "
            "controls.\n\nContainer view elements:\n"
            + _render_view_inventory(l2_view)
            + "\n\nContainer diagram source:\n" + l2_diagram.raw_text
        ),
        schema_guide=_SECURITY_GUIDE,
    )
    try:
        completion = gateway.complete_validated(
            prompt,
            params,
            validator=_parse_findings,
            max_attempts=max_attempts,
            fixture=FIXTURE_SECURITY_RED_TEAM,
        )
    except GatewayError as exc:
        raise JudgeUnavailable(
            "security red team failed", diagnostics=_diagnostics_of(exc)
        ) from exc
    findings = _parse_findings(completion.text)
    points = sum(table[f.severity.value] for f in findings)
    return RiskScore(
        points=points,
        findings=tuple(findings),
        weights_used=tuple(sorted(table.items())),
    )


def _diagnostics_of(exc: GatewayError) -> list[str]:
    diagnostics = getattr(exc, "diagnostics", None)
    return list(diagnostics) if diagnostics else [str(exc)]
