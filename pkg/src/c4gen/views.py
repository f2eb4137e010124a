"""View-YAML schema and the C4-PlantUML subset: parsing, validation, emission.

Two artifact grammars live here. The view schema is a small YAML document
(``level``, ``elements``, ``relationships``) that carries everything the
diagram renderer and the rule checkers need. The PlantUML side recognizes the
C4 macro subset (Person/System/Container/Component declarations, the two
boundary constructs, Rel/Rel_Back) and maps each construct back onto the view
element kinds, so views and diagrams can be compared alias-for-alias.
"""

from __future__ import annotations

import enum
import re
import shutil
import subprocess
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .domain import Level, PipelineError


class ViewError(PipelineError):
    """Base class for view/diagram parse and validation errors."""


class YamlSyntaxError(ViewError):
    """The view document is not well-formed YAML."""


class SchemaError(ViewError):
    """The view document violates the schema; carries the offending key path."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class DanglingReference(ViewError):
    def __init__(self, alias: str, where: str = ""):
        super().__init__(f"relationship references undeclared alias '{alias}'"
                         + (f" ({where})" if where else ""))
        self.alias = alias


class DuplicateAlias(ViewError):
    def __init__(self, alias: str):
        super().__init__(f"duplicate element alias '{alias}'")
        self.alias = alias


class PumlSyntaxError(ViewError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class UnbalancedBoundary(ViewError):
    """A boundary block was opened but never closed (or closed too often)."""


class MissingStartTag(ViewError):
    """The diagram text lacks the @startuml opening tag."""


class RunnerNotFound(ViewError):
    """The official PlantUML runner executable is not available."""


class ElementKind(str, enum.Enum):
    PERSON = "Person"
    SOFTWARE_SYSTEM = "SoftwareSystem"
    EXTERNAL_SYSTEM = "ExternalSystem"
    CONTAINER = "Container"
    DATA_STORE = "DataStore"
    COMPONENT = "Component"


#: Kinds an element may carry at each level. Component-level views may
#: reference any higher-level element (containers, people, stores, externals).
ALLOWED_KINDS = {
    Level.L1_CONTEXT: frozenset(
        {ElementKind.PERSON, ElementKind.SOFTWARE_SYSTEM, ElementKind.EXTERNAL_SYSTEM}
    ),
    Level.L2_CONTAINER: frozenset(
        {
            ElementKind.PERSON,
            ElementKind.SOFTWARE_SYSTEM,
            ElementKind.EXTERNAL_SYSTEM,
            ElementKind.CONTAINER,
            ElementKind.DATA_STORE,
        }
    ),
    Level.L3_COMPONENT: frozenset(ElementKind),
}

_ALIAS_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_-]*$")


@dataclass(frozen=True)
class Element:
    alias: str
    name: str
    kind: ElementKind
    technology: str = ""
    description: str = ""
    external: bool = False

    def __post_init__(self) -> None:
        # ExternalSystem is external by definition; keep the flag consistent.
        if self.kind is ElementKind.EXTERNAL_SYSTEM and not self.external:
            object.__setattr__(self, "external", True)


@dataclass(frozen=True)
class Relationship:
    source: str
    destination: str
    description: str = ""
    technology: str = ""


@dataclass(frozen=True)
class ViewModel:
    level: Level
    elements: tuple[Element, ...] = ()
    relationships: tuple[Relationship, ...] = ()

    def alias_set(self) -> set[str]:
        return {e.alias for e in self.elements}

    def kind_counts(self) -> dict[ElementKind, int]:
        counts: dict[ElementKind, int] = {}
        for e in self.elements:
            counts[e.kind] = counts.get(e.kind, 0) + 1
        return counts

    def externals(self) -> set[str]:
        return {e.alias for e in self.elements if e.external}


_ELEMENT_KEYS = ("alias", "name", "kind", "technology", "description", "external")
_RELATIONSHIP_KEYS = ("source", "destination", "description", "technology")


def _parse_kind(value: object, path: str) -> ElementKind:
    if not isinstance(value, str):
        raise SchemaError(path, "kind must be text")
    wanted = value.strip().lower()
    for kind in ElementKind:
        if kind.value.lower() == wanted:
            return kind
    raise SchemaError(path, f"unknown element kind {value!r}")


def _normalize_alias(value: object, path: str) -> str:
    if not isinstance(value, str):
        raise SchemaError(path, "alias must be text")
    alias = value.strip()
    if not alias:
        raise SchemaError(path, "alias must be non-empty")
    if not _ALIAS_RE.match(alias):
        raise SchemaError(path, f"alias {alias!r} must be an identifier without whitespace")
    return alias


def _opt_text(mapping: dict, key: str, path: str) -> str:
    value = mapping.get(key)
    if value is None:
        return ""
    if not isinstance(value, str):
        raise SchemaError(f"{path}.{key}", "must be text")
    return value.strip()


def parse_view_yaml(
    text: str, level: Level, allow_self_loops: bool = False
) -> ViewModel:
    """Parse and validate a view document for the given level.

    Unknown keys are rejected; element aliases are trimmed and must contain no
    whitespace; every relationship endpoint must name a declared alias.
    """
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise YamlSyntaxError(f"invalid YAML{where}: {exc}") from exc

    if not isinstance(data, dict):
        raise SchemaError("$", "view document must be a mapping")

    unknown = sorted(k for k in data if k not in ("level", "elements", "relationships"))
    if unknown:
        raise SchemaError("$", f"unknown keys: {', '.join(unknown)}")

    if "level" in data:
        try:
            declared = Level.parse(data["level"])
        except ValueError as exc:
            raise SchemaError("level", str(exc)) from exc
        if declared is not level:
            raise SchemaError(
                "level", f"document declares {declared.canonical_name}, expected {level.canonical_name}"
            )

    if "elements" not in data:
        raise SchemaError("$", "missing required key 'elements'")
    raw_elements = data["elements"]
    if raw_elements is None:
        raw_elements = []
    if not isinstance(raw_elements, list):
        raise SchemaError("elements", "must be a list")

    elements: list[Element] = []
    seen: set[str] = set()
    for i, entry in enumerate(raw_elements):
        path = f"elements[{i}]"
        if not isinstance(entry, dict):
            raise SchemaError(path, "element must be a mapping")
        bad = sorted(k for k in entry if k not in _ELEMENT_KEYS)
        if bad:
            raise SchemaError(path, f"unknown keys: {', '.join(bad)}")
        for required in ("alias", "name", "kind"):
            if required not in entry:
                raise SchemaError(f"{path}.{required}", "missing required key")
        alias = _normalize_alias(entry["alias"], f"{path}.alias")
        if alias in seen:
            raise DuplicateAlias(alias)
        seen.add(alias)
        name = _opt_text(entry, "name", path)
        if not name:
            raise SchemaError(f"{path}.name", "must be non-empty")
        kind = _parse_kind(entry["kind"], f"{path}.kind")
        if kind not in ALLOWED_KINDS[level]:
            raise SchemaError(
                f"{path}.kind",
                f"kind {kind.value} is not allowed at {level.canonical_name}",
            )
        external = entry.get("external", kind is ElementKind.EXTERNAL_SYSTEM)
        if not isinstance(external, bool):
            raise SchemaError(f"{path}.external", "must be a boolean")
        if external and kind not in (ElementKind.EXTERNAL_SYSTEM, ElementKind.CONTAINER):
            raise SchemaError(
                f"{path}.external",
                f"external flag is not supported for kind {kind.value}; use ExternalSystem",
            )
        elements.append(
            Element(
                alias=alias,
                name=name,
                kind=kind,
                technology=_opt_text(entry, "technology", path),
                description=_opt_text(entry, "description", path),
                external=external,
            )
        )

    raw_rels = data.get("relationships") or []
    if not isinstance(raw_rels, list):
        raise SchemaError("relationships", "must be a list")
    relationships: list[Relationship] = []
    for i, entry in enumerate(raw_rels):
        path = f"relationships[{i}]"
        if not isinstance(entry, dict):
            raise SchemaError(path, "relationship must be a mapping")
        bad = sorted(k for k in entry if k not in _RELATIONSHIP_KEYS)
        if bad:
            raise SchemaError(path, f"unknown keys: {', '.join(bad)}")
        for required in ("source", "destination"):
            if required not in entry:
                raise SchemaError(f"{path}.{required}", "missing required key")
        source = _normalize_alias(entry["source"], f"{path}.source")
        destination = _normalize_alias(entry["destination"], f"{path}.destination")
        for endpoint in (source, destination):
            if endpoint not in seen:
                raise DanglingReference(endpoint, where=path)
        if source == destination and not allow_self_loops:
            raise SchemaError(path, f"self-loop on '{source}' is not allowed")
        relationships.append(
            Relationship(
                source=source,
                destination=destination,
                description=_opt_text(entry, "description", path),
                technology=_opt_text(entry, "technology", path),
            )
        )

    return ViewModel(level=level, elements=tuple(elements), relationships=tuple(relationships))


class BoundaryKind(str, enum.Enum):
    SYSTEM = "System_Boundary"
    CONTAINER = "Container_Boundary"


@dataclass(frozen=True)
class Boundary:
    kind: BoundaryKind
    alias: str
    name: str
    members: tuple[str, ...] = ()


@dataclass(frozen=True)
class DiagramModel:
    """Parsed representation of a C4-PlantUML diagram."""

    level: Level
    includes: tuple[str, ...]
    declarations: tuple[Element, ...]
    boundaries: tuple[Boundary, ...]
    relations: tuple[Relationship, ...]
    raw_text: str

    def alias_set(self) -> set[str]:
        aliases = {d.alias for d in self.declarations}
        aliases.update(b.alias for b in self.boundaries)
        return aliases

    def relation_pairs(self) -> list[tuple[str, str]]:
        return [(r.source, r.destination) for r in self.relations]


# macro -> (kind, external flag, takes a technology argument)
_ELEMENT_MACROS = {
    "Person": (ElementKind.PERSON, False, False),
    "System_Ext": (ElementKind.EXTERNAL_SYSTEM, True, False),
    "System": (ElementKind.SOFTWARE_SYSTEM, False, False),
    "Container_Ext": (ElementKind.CONTAINER, True, True),
    "ContainerDb": (ElementKind.DATA_STORE, False, True),
    "Container": (ElementKind.CONTAINER, False, True),
    "ComponentDb": (ElementKind.COMPONENT, False, True),
    "Component": (ElementKind.COMPONENT, False, True),
}

_MACRO_LINE_RE = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)\s*\((.*)\)\s*(\{)?\s*$")

#: Directives tolerated (and ignored) by the subset parser.
_IGNORED_PREFIXES = (
    "LAYOUT_",
    "SHOW_",
    "HIDE_",
    "AddElementTag",
    "AddRelTag",
    "UpdateElementStyle",
    "UpdateRelStyle",
    "SetDefaultLegend",
)
_IGNORED_LINES = (
    "left to right direction",
    "top to bottom direction",
)
_IGNORED_LINE_PREFIXES = ("title ", "caption ", "skinparam ", "scale ", "!define ", "!theme ")

_INCLUDE_LEVELS = (
    ("C4_Component", Level.L3_COMPONENT),
    ("C4_Container", Level.L2_CONTAINER),
    ("C4_Context", Level.L1_CONTEXT),
)


def _split_args(raw: str, line_no: int) -> list[str]:
    """Split macro arguments on commas, honoring double-quoted strings."""
    args: list[str] = []
    current: list[str] = []
    in_quotes = False
    for ch in raw:
        if ch == '"':
            in_quotes = not in_quotes
            current.append(ch)
        elif ch == "," and not in_quotes:
            args.append("".join(current).strip())
            current = []
        else:
            current.append(ch)
    if in_quotes:
        raise PumlSyntaxError(line_no, "unterminated quoted string")
    if current or args:
        args.append("".join(current).strip())
    return [a for a in args]


def _unquote(value: str) -> str:
    value = value.strip()
    if len(value) >= 2 and value[0] == '"' and value[-1] == '"':
        return value[1:-1]
    return value


def _is_ignorable(line: str) -> bool:
    if line.startswith(_IGNORED_PREFIXES):
        return True
    if line in _IGNORED_LINES:
        return True
    return line.startswith(_IGNORED_LINE_PREFIXES)


def parse_plantuml(text: str) -> DiagramModel:
    """Parse the C4-PlantUML subset into a :class:`DiagramModel`.

    The parser is total over arbitrary text in the sense that every failure is
    a structured error carrying the offending line; it never raises anything
    outside the :class:`ViewError` family.
    """
    includes: list[str] = []
    declarations: list[Element] = []
    boundaries: list[Boundary] = []
    relations: list[Relationship] = []
    stack: list[tuple[BoundaryKind, str, str, list[str]]] = []
    seen_start = False
    seen_end = False
    declared: set[str] = set()

    for line_no, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.strip()
        if not line or line.startswith("'"):
            continue
        if seen_end:
            continue
        if line.startswith("@startuml"):
            seen_start = True
            continue
        if line.startswith("@enduml"):
            if not seen_start:
                raise MissingStartTag("@enduml found before @startuml")
            if stack:
                raise UnbalancedBoundary(
                    f"boundary '{stack[-1][1]}' is still open at @enduml"
                )
            seen_end = True
            continue
        if not seen_start:
            raise MissingStartTag("diagram text must begin with @startuml")
        if line.startswith("!include"):
            includes.append(line)
            continue
        if line == "}":
            if not stack:
                raise UnbalancedBoundary(f"stray '}}' at line {line_no}")
            kind, alias, name, members = stack.pop()
            boundaries.append(Boundary(kind, alias, name, tuple(members)))
            continue
        if _is_ignorable(line):
            continue

        match = _MACRO_LINE_RE.match(line)
        if not match:
            raise PumlSyntaxError(line_no, f"unrecognized line: {line!r}")
        macro, raw_args, brace = match.group(1), match.group(2), match.group(3)

        if macro in ("System_Boundary", "Container_Boundary"):
            if not brace:
                raise PumlSyntaxError(line_no, f"{macro} must open a '{{' block")
            args = _split_args(raw_args, line_no)
            if len(args) < 2:
                raise PumlSyntaxError(line_no, f"{macro} expects (alias, \"name\")")
            kind = (
                BoundaryKind.SYSTEM
                if macro == "System_Boundary"
                else BoundaryKind.CONTAINER
            )
            stack.append((kind, _unquote(args[0]), _unquote(args[1]), []))
            continue
        if brace:
            raise PumlSyntaxError(line_no, f"unexpected '{{' after {macro}")

        if macro in ("Rel", "Rel_Back"):
            args = _split_args(raw_args, line_no)
            if len(args) < 2:
                raise PumlSyntaxError(line_no, f"{macro} expects at least (from, to)")
            source, destination = _unquote(args[0]), _unquote(args[1])
            if macro == "Rel_Back":
                source, destination = destination, source
            relations.append(
                Relationship(
                    source=source,
                    destination=destination,
                    description=_unquote(args[2]) if len(args) > 2 else "",
                    technology=_unquote(args[3]) if len(args) > 3 else "",
                )
            )
            continue

        if macro in _ELEMENT_MACROS:
            kind, external, has_tech = _ELEMENT_MACROS[macro]
            args = _split_args(raw_args, line_no)
            if len(args) < 2:
                raise PumlSyntaxError(line_no, f"{macro} expects (alias, \"label\", ...)")
            alias = _unquote(args[0])
            if alias in declared:
                raise DuplicateAlias(alias)
            declared.add(alias)
            name = _unquote(args[1])
            if has_tech:
                technology = _unquote(args[2]) if len(args) > 2 else ""
                description = _unquote(args[3]) if len(args) > 3 else ""
            else:
                technology = ""
                description = _unquote(args[2]) if len(args) > 2 else ""
            declarations.append(
                Element(
                    alias=alias,
                    name=name,
                    kind=kind,
                    technology=technology,
                    description=description,
                    external=external,
                )
            )
            if stack:
                stack[-1][3].append(alias)
            continue

        raise PumlSyntaxError(line_no, f"unknown macro '{macro}'")

    if not seen_start:
        raise MissingStartTag("diagram text must begin with @startuml")
    if stack:
        raise UnbalancedBoundary(f"boundary '{stack[-1][1]}' is never closed")
    if not seen_end:
        raise PumlSyntaxError(len(text.splitlines()) or 1, "missing @enduml")

    level = _infer_level(includes, declarations, boundaries)
    return DiagramModel(
        level=level,
        includes=tuple(includes),
        declarations=tuple(declarations),
        boundaries=tuple(boundaries),
        relations=tuple(relations),
        raw_text=text,
    )


def _infer_level(
    includes: list[str], declarations: list[Element], boundaries: list[Boundary]
) -> Level:
    for marker, level in _INCLUDE_LEVELS:
        if any(marker in inc for inc in includes):
            return level
    kinds = {d.kind for d in declarations}
    boundary_kinds = {b.kind for b in boundaries}
    if ElementKind.COMPONENT in kinds or BoundaryKind.CONTAINER in boundary_kinds:
        return Level.L3_COMPONENT
    if (
        kinds & {ElementKind.CONTAINER, ElementKind.DATA_STORE}
        or BoundaryKind.SYSTEM in boundary_kinds
    ):
        return Level.L2_CONTAINER
    return Level.L1_CONTEXT


_INCLUDE_BASE = "https://raw.githubusercontent.com/plantuml-stdlib/C4-PlantUML/master"

_INCLUDE_BY_LEVEL = {
    Level.L1_CONTEXT: f"!include {_INCLUDE_BASE}/C4_Context.puml",
    Level.L2_CONTAINER: f"!include {_INCLUDE_BASE}/C4_Container.puml",
    Level.L3_COMPONENT: f"!include {_INCLUDE_BASE}/C4_Component.puml",
}


def _q(value: str) -> str:
    return '"' + value.replace('"', "'").replace("\n", " ") + '"'


def _element_line(e: Element, level: Level) -> str:
    if e.kind is ElementKind.PERSON:
        macro, args = "Person", [e.alias, _q(e.name)]
        if e.description:
            args.append(_q(e.description))
    elif e.kind is ElementKind.SOFTWARE_SYSTEM:
        macro, args = "System", [e.alias, _q(e.name)]
        if e.description:
            args.append(_q(e.description))
    elif e.kind is ElementKind.EXTERNAL_SYSTEM:
        macro, args = "System_Ext", [e.alias, _q(e.name)]
        if e.description:
            args.append(_q(e.description))
    else:
        if e.kind is ElementKind.DATA_STORE:
            macro = "ContainerDb"
        elif e.kind is ElementKind.COMPONENT:
            macro = "Component"
        else:
            macro = "Container_Ext" if e.external else "Container"
        args = [e.alias, _q(e.name)]
        if e.technology or e.description:
            args.append(_q(e.technology))
        if e.description:
            args.append(_q(e.description))
    return f"{macro}({', '.join(args)})"


def emit_plantuml(view: ViewModel, focus: str | None = None) -> str:
    """Render a view as canonical C4-PlantUML text.

    At L2 the first SoftwareSystem element becomes the System_Boundary holding
    all Container/DataStore elements; at L3 the focus container (explicit
    argument, else the first Container element) becomes the Container_Boundary
    holding the Component elements. Relations are emitted last.
    """
    lines = ["@startuml", _INCLUDE_BY_LEVEL[view.level], ""]

    boundary_owner: Element | None = None
    inside_kinds: frozenset[ElementKind] = frozenset()
    boundary_macro = ""
    if view.level is Level.L2_CONTAINER:
        boundary_owner = next(
            (e for e in view.elements if e.kind is ElementKind.SOFTWARE_SYSTEM), None
        )
        inside_kinds = frozenset({ElementKind.CONTAINER, ElementKind.DATA_STORE})
        boundary_macro = "System_Boundary"
    elif view.level is Level.L3_COMPONENT:
        if focus is not None:
            boundary_owner = next((e for e in view.elements if e.alias == focus), None)
        else:
            boundary_owner = next(
                (e for e in view.elements if e.kind is ElementKind.CONTAINER), None
            )
        inside_kinds = frozenset({ElementKind.COMPONENT})
        boundary_macro = "Container_Boundary"

    outside = [
        e
        for e in view.elements
        if e is not boundary_owner and (boundary_owner is None or e.kind not in inside_kinds)
    ]
    inside = (
        [e for e in view.elements if e is not boundary_owner and e.kind in inside_kinds]
        if boundary_owner is not None
        else []
    )

    for e in outside:
        lines.append(_element_line(e, view.level))
    if boundary_owner is not None:
        lines.append(f"{boundary_macro}({boundary_owner.alias}, {_q(boundary_owner.name)}) {{")
        for e in inside:
            lines.append(f"    {_element_line(e, view.level)}")
        lines.append("}")

    if view.relationships:
        lines.append("")
    for r in view.relationships:
        args = [r.source, r.destination, _q(r.description)]
        if r.technology:
            args.append(_q(r.technology))
        lines.append(f"Rel({', '.join(args)})")

    lines.append("@enduml")
    return "\n".join(lines) + "\n"


def diagram_to_view(model: DiagramModel) -> ViewModel:
    """Reconstruct a view from a parsed diagram (boundaries become elements).

    Boundary owners are placed first so that re-emitting the result chooses
    the same boundary; technology/description of owners is not recoverable
    from boundary syntax and stays empty.
    """
    member_aliases = {alias for b in model.boundaries for alias in b.members}
    owners = [
        Element(
            alias=b.alias,
            name=b.name,
            kind=ElementKind.SOFTWARE_SYSTEM
            if b.kind is BoundaryKind.SYSTEM
            else ElementKind.CONTAINER,
        )
        for b in model.boundaries
    ]
    outside = [d for d in model.declarations if d.alias not in member_aliases]
    inside = [d for d in model.declarations if d.alias in member_aliases]
    return ViewModel(
        level=model.level,
        elements=tuple(owners + outside + inside),
        relationships=model.relations,
    )


class CompileMode(str, enum.Enum):
    INTERNAL = "internal"
    OFFICIAL = "official"


@dataclass(frozen=True)
class CompileResult:
    ok: bool
    diagnostics: tuple[str, ...]
    mode: CompileMode


def check_compilation(
    diagram_text: str,
    mode: CompileMode = CompileMode.INTERNAL,
    runner_path: str | None = None,
) -> CompileResult:
    """Check a diagram compiles: subset parser (internal) or the official runner."""
    if mode is CompileMode.INTERNAL:
        try:
            parse_plantuml(diagram_text)
        except ViewError as exc:
            return CompileResult(ok=False, diagnostics=(str(exc),), mode=mode)
        return CompileResult(ok=True, diagnostics=(), mode=mode)

    if not runner_path:
        raise RunnerNotFound("official runner requested but no runner path configured")
    resolved = shutil.which(runner_path) or (
        runner_path if Path(runner_path).exists() else None
    )
    if resolved is None:
        raise RunnerNotFound(f"runner executable not found: {runner_path}")
    with tempfile.NamedTemporaryFile("w", suffix=".puml", delete=False) as handle:
        handle.write(diagram_text)
        temp_path = handle.name
    try:
        proc = subprocess.run(
            [resolved, "-syntax", temp_path],
            capture_output=True,
            text=True,
            timeout=60,
        )
    finally:
        Path(temp_path).unlink(missing_ok=True)
    diagnostics = tuple(
        line for line in (proc.stdout + proc.stderr).splitlines() if line.strip()
    )
    return CompileResult(ok=proc.returncode == 0, diagnostics=diagnostics, mode=mode)
