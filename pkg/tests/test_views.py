"""View schema and PlantUML subset parser/emitter tests."""

from __future__ import annotations

import os
import stat

import pytest

from c4gen.domain import Level
from c4gen.views import (
    BoundaryKind,
    CompileMode,
    DanglingReference,
    DuplicateAlias,
    ElementKind,
    MissingStartTag,
    PumlSyntaxError,
    RunnerNotFound,
    SchemaError,
    UnbalancedBoundary,
    YamlSyntaxError,
    check_compilation,
    diagram_to_view,
    emit_plantuml,
    parse_plantuml,
    parse_view_yaml,
)
from conftest import read_fixture

MINIMAL_L1 = """
level: L1_Context
elements:
  - alias: member
    name: Member
    kind: Person
  - alias: library
    name: Library System
    kind: SoftwareSystem
relationships:
  - source: member
    destination: library
    description: Uses
"""


class TestParseViewYaml:
    def test_minimal_l1(self):
        view = parse_view_yaml(MINIMAL_L1, Level.L1_CONTEXT)
        assert len(view.elements) == 2
        assert len(view.relationships) == 1
        assert view.alias_set() == {"member", "library"}

    def test_dangling_reference(self):
        text = MINIMAL_L1 + "  - source: member\n    destination: mailer\n"
        with pytest.raises(DanglingReference, match="mailer"):
            parse_view_yaml(text, Level.L1_CONTEXT)

    def test_duplicate_alias(self):
        text = MINIMAL_L1.replace("alias: library", "alias: member")
        with pytest.raises(DuplicateAlias):
            parse_view_yaml(text, Level.L1_CONTEXT)

    def test_unknown_top_level_key(self):
        with pytest.raises(SchemaError, match="notes"):
            parse_view_yaml(MINIMAL_L1 + "notes: hi\n", Level.L1_CONTEXT)

    def test_unknown_element_key_path(self):
        text = MINIMAL_L1.replace("kind: Person", "kind: Person\n    color: red")
        with pytest.raises(SchemaError, match=r"elements\[0\]"):
            parse_view_yaml(text, Level.L1_CONTEXT)

    def test_level_mismatch(self):
        with pytest.raises(SchemaError, match="level"):
            parse_view_yaml(MINIMAL_L1, Level.L2_CONTAINER)

    def test_component_not_allowed_at_l1(self):
        text = MINIMAL_L1.replace("kind: SoftwareSystem", "kind: Component")
        with pytest.raises(SchemaError, match="not allowed"):
            parse_view_yaml(text, Level.L1_CONTEXT)

    def test_yaml_syntax_error_carries_position(self):
        with pytest.raises(YamlSyntaxError, match="line"):
            parse_view_yaml("elements:\n  - alias: [::\n", Level.L1_CONTEXT)

    def test_alias_with_whitespace_rejected(self):
        text = MINIMAL_L1.replace("alias: member", "alias: the member")
        with pytest.raises(SchemaError, match="whitespace"):
            parse_view_yaml(text, Level.L1_CONTEXT)

    def test_self_loop_rejected_by_default(self):
        text = MINIMAL_L1.replace("destination: library", "destination: member")
        with pytest.raises(SchemaError, match="self-loop"):
            parse_view_yaml(text, Level.L1_CONTEXT)
        view = parse_view_yaml(text, Level.L1_CONTEXT, allow_self_loops=True)
        assert view.relationships[0].destination == "member"

    def test_library_l2_fixture_kind_counts(self):
        # Hand count of the bundled fixture: 2 people, 1 system,
        # 4 containers, 1 data store, 2 externals.
        view = parse_view_yaml(read_fixture("l2/structure_yaml.yaml"), Level.L2_CONTAINER)
        counts = view.kind_counts()
        assert counts[ElementKind.CONTAINER] == 4
        assert counts[ElementKind.DATA_STORE] == 1
        assert counts[ElementKind.EXTERNAL_SYSTEM] == 2
        assert counts[ElementKind.PERSON] == 2
        assert counts[ElementKind.SOFTWARE_SYSTEM] == 1

    def test_external_flag_forced_for_external_system(self):
        view = parse_view_yaml(read_fixture("l1/structure_yaml.yaml"), Level.L1_CONTEXT)
        assert view.externals() == {"email_gateway", "identity_provider"}


class TestParsePlantuml:
    def test_golden_l2_fixture(self):
        model = parse_plantuml(read_fixture("l2/generate_plantuml.puml"))
        assert model.level is Level.L2_CONTAINER
        declared = {d.alias for d in model.declarations}
        assert declared == {
            "member", "librarian", "email_gateway", "identity_provider",
            "web_app", "api_app", "loan_service", "notification_service", "book_db",
        }
        assert len(model.boundaries) == 1
        boundary = model.boundaries[0]
        assert boundary.kind is BoundaryKind.SYSTEM
        assert boundary.alias == "library_system"
        assert set(boundary.members) == {
            "web_app", "api_app", "loan_service", "notification_service", "book_db",
        }
        assert ("member", "web_app") in model.relation_pairs()
        assert len(model.relations) == 9

    def test_missing_start_tag(self):
        with pytest.raises(MissingStartTag):
            parse_plantuml('Person(a, "A")\n@enduml\n')

    def test_unclosed_boundary(self):
        text = '@startuml\nSystem_Boundary(s, "S") {\nContainer(c, "C")\n@enduml\n'
        with pytest.raises(UnbalancedBoundary):
            parse_plantuml(text)

    def test_stray_close(self):
        with pytest.raises(UnbalancedBoundary):
            parse_plantuml("@startuml\n}\n@enduml\n")

    def test_unknown_macro_reports_line(self):
        text = '@startuml\nPerson(a, "A")\nWidget(x, "X")\n@enduml\n'
        with pytest.raises(PumlSyntaxError, match="line 3"):
            parse_plantuml(text)

    def test_missing_enduml(self):
        with pytest.raises(PumlSyntaxError, match="@enduml"):
            parse_plantuml('@startuml\nPerson(a, "A")\n')

    def test_rel_back_swaps_endpoints(self):
        text = (
            "@startuml\n"
            'Person(a, "A")\nSystem(b, "B")\n'
            'Rel_Back(a, b, "pushes to")\n'
            "@enduml\n"
        )
        model = parse_plantuml(text)
        assert model.relation_pairs() == [("b", "a")]

    def test_layout_directives_ignored(self):
        text = (
            "@startuml\n"
            "!include C4_Context.puml\n"
            "LAYOUT_WITH_LEGEND()\n"
            "title Context view\n"
            "' a comment\n"
            'Person(a, "A")\n'
            "@enduml\n"
        )
        model = parse_plantuml(text)
        assert [d.alias for d in model.declarations] == ["a"]
        assert model.includes == ("!include C4_Context.puml",)

    def test_level_inferred_from_content_without_include(self):
        text = '@startuml\nComponent(c, "C", "py")\n@enduml\n'
        assert parse_plantuml(text).level is Level.L3_COMPONENT

    def test_duplicate_declaration_rejected(self):
        text = '@startuml\nPerson(a, "A")\nPerson(a, "A2")\n@enduml\n'
        with pytest.raises(DuplicateAlias):
            parse_plantuml(text)


class TestEmitPlantuml:
    def test_datastore_emits_containerdb(self):
        view = parse_view_yaml(read_fixture("l2/structure_yaml.yaml"), Level.L2_CONTAINER)
        text = emit_plantuml(view)
        assert 'ContainerDb(book_db, "Library Database", "PostgreSQL"' in text

    def test_no_relationship_view_has_no_rel_lines(self):
        view = parse_view_yaml(
            "level: L1_Context\nelements:\n  - {alias: a, name: A, kind: Person}\n",
            Level.L1_CONTEXT,
        )
        text = emit_plantuml(view)
        assert "Rel(" not in text

    def test_emit_is_deterministic(self):
        view = parse_view_yaml(read_fixture("l2/structure_yaml.yaml"), Level.L2_CONTAINER)
        assert emit_plantuml(view) == emit_plantuml(view)

    def test_emit_idempotent_via_parse(self):
        for relative, level in [
            ("l1/structure_yaml.yaml", Level.L1_CONTEXT),
            ("l2/structure_yaml.yaml", Level.L2_CONTAINER),
            ("l3_api_app/structure_yaml.yaml", Level.L3_COMPONENT),
        ]:
            view = parse_view_yaml(read_fixture(relative), level)
            first = emit_plantuml(view)
            second = emit_plantuml(diagram_to_view(parse_plantuml(first)))
            assert first == second, relative

    def test_round_trip_aliases(self):
        view = parse_view_yaml(read_fixture("l3_loan_service/structure_yaml.yaml"), Level.L3_COMPONENT)
        model = parse_plantuml(emit_plantuml(view, focus="loan_service"))
        assert model.alias_set() == view.alias_set()
        assert sorted(model.relation_pairs()) == sorted(
            (r.source, r.destination) for r in view.relationships
        )

    def test_quotes_in_names_sanitized(self):
        view = parse_view_yaml(
            'level: L1_Context\nelements:\n  - {alias: a, name: \'The "Big" One\', kind: Person}\n',
            Level.L1_CONTEXT,
        )
        text = emit_plantuml(view)
        model = parse_plantuml(text)
        assert model.declarations[0].name == "The 'Big' One"


class TestCheckCompilation:
    def test_internal_ok(self):
        result = check_compilation(read_fixture("l1/generate_plantuml.puml"))
        assert result.ok and result.mode is CompileMode.INTERNAL

    def test_internal_unknown_macro_diagnostic(self):
        result = check_compilation('@startuml\nWidget(x, "X")\n@enduml\n')
        assert not result.ok
        assert "Widget" in result.diagnostics[0]

    def test_official_runner_success_and_failure(self, tmp_path):
        ok_runner = tmp_path / "plantuml-ok"
        ok_runner.write_text("#!/bin/sh\nexit 0\n")
        bad_runner = tmp_path / "plantuml-bad"
        bad_runner.write_text("#!/bin/sh\necho 'Syntax Error on line 2'\nexit 1\n")
        for runner in (ok_runner, bad_runner):
            os.chmod(runner, os.stat(runner).st_mode | stat.S_IEXEC)
        text = read_fixture("l1/generate_plantuml.puml")
        result = check_compilation(text, CompileMode.OFFICIAL, str(ok_runner))
        assert result.ok and result.mode is CompileMode.OFFICIAL
        result = check_compilation(text, CompileMode.OFFICIAL, str(bad_runner))
        assert not result.ok
        assert any("Syntax Error" in d for d in result.diagnostics)

    def test_runner_not_found(self):
        with pytest.raises(RunnerNotFound):
            check_compilation("@startuml\n@enduml\n", CompileMode.OFFICIAL, "/nope/plantuml")
        with pytest.raises(RunnerNotFound):
            check_compilation("@startuml\n@enduml\n", CompileMode.OFFICIAL, None)
