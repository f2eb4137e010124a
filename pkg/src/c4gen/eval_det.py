"""Deterministic evaluation: structural integrity and C4 rule adherence.

All scores are passed/checked ratios scaled to [0, 100], computed at the
finest granularity (per artifact or per element) and averaged upstream.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass

from .domain import Artifact, ArtifactKind
from .orchestrator import LevelInstance
from .views import Boundary, BoundaryKind, DiagramModel, Element, ElementKind, Level, ViewModel

#: Artifact kinds counted by the completeness check (transcripts excluded).
COMPLETENESS_KINDS = (
    ArtifactKind.ANALYSIS_REPORT,
    ArtifactKind.VIEW_YAML,
    ArtifactKind.PLANTUML_DIAGRAM,
)


def _pct(passed: int, checked: int) -> float:
    return 100.0 * passed / checked if checked else 100.0


@dataclass(frozen=True)
class CompletenessResult:
    expected: tuple[tuple[LevelInstance, ArtifactKind], ...]
    present_non_empty: tuple[tuple[LevelInstance, ArtifactKind], ...]
    score_percent: float


def check_completeness(
    artifacts: list[Artifact], instances: list[LevelInstance]
) -> CompletenessResult:
    """Fraction of expected artifacts that exist with non-empty content."""
    by_key = {a.key: a for a in artifacts}
    expected = [
        (instance, kind) for instance in instances for kind in COMPLETENESS_KINDS
    ]
    present = [
        (instance, kind)
        for instance, kind in expected
        if (kind, instance.level, instance.focus_container) in by_key
        and by_key[(kind, instance.level, instance.focus_container)].content.strip()
    ]
    return CompletenessResult(
        expected=tuple(expected),
        present_non_empty=tuple(present),
        score_percent=_pct(len(present), len(expected)),
    )


@dataclass(frozen=True)
class RuleResult:
    rule_id: str
    passed: bool
    detail: str = ""


@dataclass(frozen=True)
class RuleReport:
    rules: tuple[RuleResult, ...]
    score_percent: float


def _container_like(d: DiagramModel) -> list[Element]:
    return [
        e
        for e in d.declarations
        if e.kind in (ElementKind.CONTAINER, ElementKind.DATA_STORE)
    ]


def _components(d: DiagramModel) -> list[Element]:
    return [e for e in d.declarations if e.kind is ElementKind.COMPONENT]


def _boundaries(d: DiagramModel, kind: BoundaryKind) -> list[Boundary]:
    return [b for b in d.boundaries if b.kind is kind]


def check_abstraction_adherence(diagram: DiagramModel, level: Level) -> RuleReport:
    """Evaluate the per-level rule table against a parsed diagram.

    L1: no container or component constructs, at least one person or external
    system. L2: no components, a System_Boundary present. L3: a
    Container_Boundary present.
    """
    rules: list[RuleResult] = []

    def add(rule_id: str, passed: bool, detail: str = "") -> None:
        rules.append(RuleResult(rule_id, passed, detail))

    if level is Level.L1_CONTEXT:
        offenders = [e.alias for e in _container_like(diagram)]
        offenders += [b.alias for b in _boundaries(diagram, BoundaryKind.CONTAINER)]
        add("l1-no-container", not offenders, ", ".join(offenders))
        comps = [e.alias for e in _components(diagram)]
        add("l1-no-component", not comps, ", ".join(comps))
        anchors = [
            e.alias
            for e in diagram.declarations
            if e.kind in (ElementKind.PERSON, ElementKind.EXTERNAL_SYSTEM)
        ]
        add(
            "l1-person-or-external",
            bool(anchors),
            "" if anchors else "no Person or external system declared",
        )
    elif level is Level.L2_CONTAINER:
        comps = [e.alias for e in _components(diagram)]
        add("l2-no-component", not comps, ", ".join(comps))
        add(
            "l2-system-boundary",
            bool(_boundaries(diagram, BoundaryKind.SYSTEM)),
            "" if _boundaries(diagram, BoundaryKind.SYSTEM) else "no System_Boundary",
        )
    else:
        add(
            "l3-container-boundary",
            bool(_boundaries(diagram, BoundaryKind.CONTAINER)),
            "" if _boundaries(diagram, BoundaryKind.CONTAINER) else "no Container_Boundary",
        )

    passed = sum(1 for r in rules if r.passed)
    return RuleReport(rules=tuple(rules), score_percent=_pct(passed, len(rules)))


class NamingConvention(str, enum.Enum):
    PASCAL = "PascalCase"
    CAMEL = "camelCase"
    SNAKE = "snake_case"
    KEBAB = "kebab-case"
    UNCLASSIFIED = "Unclassified"


#: Fixed tie-break order for the dominant convention.
_CONVENTION_ORDER = (
    NamingConvention.PASCAL,
    NamingConvention.CAMEL,
    NamingConvention.SNAKE,
    NamingConvention.KEBAB,
)

_NAMING_PATTERNS = (
    (NamingConvention.PASCAL, re.compile(r"^[A-Z][a-z0-9]+(?:[A-Z][a-z0-9]+)*$")),
    (NamingConvention.CAMEL, re.compile(r"^[a-z][a-z0-9]+(?:[A-Z][a-z0-9]+)+$")),
    (NamingConvention.SNAKE, re.compile(r"^[a-z0-9]+(?:_[a-z0-9]+)+$")),
    (NamingConvention.KEBAB, re.compile(r"^[a-z0-9]+(?:-[a-z0-9]+)+$")),
)


def classify_alias(alias: str) -> NamingConvention:
    for convention, pattern in _NAMING_PATTERNS:
        if pattern.match(alias):
            return convention
    return NamingConvention.UNCLASSIFIED


@dataclass(frozen=True)
class NamingReport:
    classified: tuple[tuple[str, NamingConvention], ...]
    dominant: NamingConvention | None
    outliers: tuple[str, ...]
    score_percent: float


def check_naming_consistency(views: list[ViewModel]) -> NamingReport:
    """Dominant naming convention over element aliases across the given views.

    Aliases are deduplicated in first-seen order. Only classifiable aliases
    count toward the score; with none, the score is vacuously 100.
    """
    aliases: list[str] = []
    seen: set[str] = set()
    for view in views:
        for element in view.elements:
            if element.alias not in seen:
                seen.add(element.alias)
                aliases.append(element.alias)

    classified = tuple((alias, classify_alias(alias)) for alias in aliases)
    counts = {convention: 0 for convention in _CONVENTION_ORDER}
    for _, convention in classified:
        if convention is not NamingConvention.UNCLASSIFIED:
            counts[convention] += 1
    classifiable = sum(counts.values())
    if classifiable == 0:
        return NamingReport(classified=classified, dominant=None, outliers=(), score_percent=100.0)

    best = max(counts.values())
    dominant = next(c for c in _CONVENTION_ORDER if counts[c] == best)
    outliers = tuple(
        alias
        for alias, convention in classified
        if convention is not NamingConvention.UNCLASSIFIED and convention is not dominant
    )
    return NamingReport(
        classified=classified,
        dominant=dominant,
        outliers=outliers,
        score_percent=_pct(counts[dominant], classifiable),
    )


@dataclass(frozen=True)
class MatchReport:
    missing_in_diagram: frozenset[str]
    extra_in_diagram: frozenset[str]
    score_percent: float


def check_definitional_consistency(view: ViewModel, diagram: DiagramModel) -> MatchReport:
    """Every view element must appear in the diagram (one-directional).

    Matching is case-sensitive on normalized aliases; extra diagram aliases
    do not lower the score and are reported for information only.
    """
    view_aliases = view.alias_set()
    diagram_aliases = diagram.alias_set()
    missing = frozenset(view_aliases - diagram_aliases)
    return MatchReport(
        missing_in_diagram=missing,
        extra_in_diagram=frozenset(diagram_aliases - view_aliases),
        score_percent=_pct(len(view_aliases) - len(missing), len(view_aliases)),
    )


@dataclass(frozen=True)
class ExternalsCheck:
    passed: bool
    missing_in_l2: frozenset[str]
    extra_in_l2: frozenset[str]


@dataclass(frozen=True)
class CrossLevelReport:
    l1_l2_externals: ExternalsCheck
    l3_reference_violations: tuple[tuple[str, str, str], ...]

    @property
    def passed(self) -> bool:
        return self.l1_l2_externals.passed and not self.l3_reference_violations


def check_cross_level(
    l1: ViewModel,
    l2: ViewModel,
    l3s: list[tuple[str, ViewModel]],
) -> CrossLevelReport:
    """Externals at L2 must exactly match L1's; L3 views may reference only
    L2-declared elements (besides their own components).

    Aliases are compared case-folded so capitalization drift between
    artifacts does not mask a semantic match.
    """
    l1_ext = {a.casefold() for a in l1.externals()}
    l2_ext = {a.casefold() for a in l2.externals()}
    externals = ExternalsCheck(
        passed=l1_ext == l2_ext,
        missing_in_l2=frozenset(l1_ext - l2_ext),
        extra_in_l2=frozenset(l2_ext - l1_ext),
    )

    l2_aliases = {a.casefold() for a in l2.alias_set()}
    violations: list[tuple[str, str, str]] = []
    for container, view in l3s:
        for element in view.elements:
            if element.kind is ElementKind.COMPONENT:
                continue
            if element.alias.casefold() not in l2_aliases:
                violations.append((container, element.alias, "undeclared at L2"))

    return CrossLevelReport(
        l1_l2_externals=externals,
        l3_reference_violations=tuple(violations),
    )


def count_l2_containers(l2: ViewModel) -> int:
    """Containers identified at L2; data stores count as containers."""
    return sum(
        1
        for e in l2.elements
        if e.kind in (ElementKind.CONTAINER, ElementKind.DATA_STORE)
    )


@dataclass(frozen=True)
class CountStats:
    mean: float
    min: int
    max: int


def aggregate_counts(counts: list[int]) -> CountStats:
    if not counts:
        raise ValueError("aggregate_counts requires at least one count")
    return CountStats(mean=sum(counts) / len(counts), min=min(counts), max=max(counts))
