"""Persona teams, context selection rules, and prompt assembly tests."""

from __future__ import annotations

import pytest

from c4gen.domain import ArtifactKind, Level, Message, new_initial_state
from c4gen.prompting import (
    MissingPrerequisite,
    PromptLibrary,
    TaskKind,
    assemble_prompt,
    build_context,
    default_library,
    render_brief,
    team_for_level,
)
from conftest import make_artifact, state_with_artifacts


class TestTeams:
    def test_l1_team(self):
        team = team_for_level(Level.L1_CONTEXT)
        assert [p.id for p in team] == [
            "product_owner", "business_analyst", "lead_software_architect",
        ]
        assert team[0].display_name == "Product Owner"

    def test_l2_team(self):
        ids = [p.id for p in team_for_level(Level.L2_CONTAINER)]
        assert ids == [
            "software_architect", "lead_developer", "devops_specialist", "security_specialist",
        ]

    def test_l3_team(self):
        ids = [p.id for p in team_for_level(Level.L3_COMPONENT)]
        assert ids == [
            "lead_developer", "senior_developer", "database_administrator", "security_specialist",
        ]


def _state_through_l2(brief):
    return state_with_artifacts(
        brief,
        make_artifact(ArtifactKind.TRANSCRIPT, Level.L1_CONTEXT, content="l1 transcript"),
        make_artifact(ArtifactKind.ANALYSIS_REPORT, Level.L1_CONTEXT, content="l1 report"),
        make_artifact(ArtifactKind.VIEW_YAML, Level.L1_CONTEXT, content="l1 view body"),
        make_artifact(ArtifactKind.PLANTUML_DIAGRAM, Level.L1_CONTEXT, content="l1 puml"),
        make_artifact(ArtifactKind.TRANSCRIPT, Level.L2_CONTAINER, content="l2 transcript"),
        make_artifact(ArtifactKind.ANALYSIS_REPORT, Level.L2_CONTAINER, content="l2 report"),
        make_artifact(ArtifactKind.VIEW_YAML, Level.L2_CONTAINER, content="l2 view body"),
        make_artifact(ArtifactKind.PLANTUML_DIAGRAM, Level.L2_CONTAINER, content="l2 puml"),
    )


class TestBuildContext:
    def test_l2_analyze_includes_l1_view(self, brief):
        state = _state_through_l2(brief)
        ctx = build_context(state, Level.L2_CONTAINER, TaskKind.ANALYZE)
        assert [a.content for a in ctx.supporting_artifacts] == ["l1 view body"]
        assert ctx.primary_input is None

    def test_structure_yaml_without_report_raises(self, brief):
        state = new_initial_state(brief)
        with pytest.raises(MissingPrerequisite, match="ANALYSIS_REPORT:L1"):
            build_context(state, Level.L1_CONTEXT, TaskKind.STRUCTURE_YAML)

    def test_l3_generate_plantuml_primary_is_instance_view(self, brief):
        state = _state_through_l2(brief)
        state = state_with_artifacts(
            state.brief,
            *state.artifacts,
            make_artifact(ArtifactKind.VIEW_YAML, Level.L3_COMPONENT, "api_app", "api view"),
        )
        ctx = build_context(
            state, Level.L3_COMPONENT, TaskKind.GENERATE_PLANTUML, focus="api_app"
        )
        assert ctx.primary_input.content == "api view"
        # L3 tasks carry the L1 and L2 views as supporting context.
        assert [a.content for a in ctx.supporting_artifacts] == ["l1 view body", "l2 view body"]

    def test_analyze_mirrors_live_messages(self, brief):
        state = new_initial_state(brief)
        from c4gen.domain import append_message

        state = append_message(state, Message("po", 0, "first point"))
        ctx = build_context(state, Level.L1_CONTEXT, TaskKind.ANALYZE)
        assert ctx.live_messages[0].content == "first point"

    def test_rule_table_is_total(self, brief):
        state = _state_through_l2(brief)
        state = state_with_artifacts(
            state.brief,
            *state.artifacts,
            make_artifact(ArtifactKind.TRANSCRIPT, Level.L3_COMPONENT, "c1", "t"),
            make_artifact(ArtifactKind.ANALYSIS_REPORT, Level.L3_COMPONENT, "c1", "r"),
            make_artifact(ArtifactKind.VIEW_YAML, Level.L3_COMPONENT, "c1", "v"),
        )
        for level, focus in [
            (Level.L1_CONTEXT, None),
            (Level.L2_CONTAINER, None),
            (Level.L3_COMPONENT, "c1"),
        ]:
            for task in TaskKind:
                ctx = build_context(state, level, task, focus)
                assert ctx.level is level


class TestAssemblePrompt:
    def test_byte_identical_for_identical_inputs(self, brief):
        lib = default_library()
        state = _state_through_l2(brief)
        ctx = build_context(state, Level.L2_CONTAINER, TaskKind.ANALYZE)
        persona = lib.persona("software_architect")
        first = assemble_prompt(persona, TaskKind.ANALYZE, ctx, lib)
        second = assemble_prompt(persona, TaskKind.ANALYZE, ctx, lib)
        assert first == second
        assert first.system_text == second.system_text

    def test_l2_analyze_contains_brief_and_l1_view(self, brief):
        lib = default_library()
        state = _state_through_l2(brief)
        ctx = build_context(state, Level.L2_CONTAINER, TaskKind.ANALYZE)
        prompt = assemble_prompt(lib.persona("lead_developer"), TaskKind.ANALYZE, ctx, lib)
        assert brief.description in prompt.user_text
        assert "Title: Library Management System" in prompt.user_text
        assert "l1 view body" in prompt.user_text

    def test_structure_yaml_guide_lists_schema_keys(self, brief):
        lib = default_library()
        state = _state_through_l2(brief)
        ctx = build_context(state, Level.L2_CONTAINER, TaskKind.STRUCTURE_YAML)
        prompt = assemble_prompt(
            lib.persona("software_architect"), TaskKind.STRUCTURE_YAML, ctx, lib
        )
        assert prompt.schema_guide is not None
        for key in ("level", "elements", "relationships", "alias", "name", "kind",
                    "source", "destination"):
            assert key in prompt.schema_guide

    def test_analyze_contains_latest_message(self, brief):
        lib = default_library()
        state = new_initial_state(brief)
        from c4gen.domain import append_message

        state = append_message(state, Message("po", 0, "opening"))
        state = append_message(state, Message("ba", 1, "the latest insight"))
        ctx = build_context(state, Level.L1_CONTEXT, TaskKind.ANALYZE)
        prompt = assemble_prompt(lib.persona("product_owner"), TaskKind.ANALYZE, ctx, lib)
        assert "the latest insight" in prompt.user_text
        assert "[ba]:" in prompt.user_text

    def test_schema_guide_only_for_guided_tasks(self, brief):
        lib = default_library()
        state = _state_through_l2(brief)
        ctx = build_context(state, Level.L2_CONTAINER, TaskKind.SYNTHESIZE)
        prompt = assemble_prompt(lib.persona("technical_writer"), TaskKind.SYNTHESIZE, ctx, lib)
        assert prompt.schema_guide is None

    def test_custom_templates_dir(self, brief, tmp_path):
        root = tmp_path / "templates"
        (root / "personas").mkdir(parents=True)
        (root / "tasks").mkdir()
        (root / "schemas").mkdir()
        (root / "personas" / "software_architect.txt").write_text("Custom narrative.")
        for task in TaskKind:
            (root / "tasks" / f"{task.value}.txt").write_text("Do {{level}} for {{title}}.")
        (root / "schemas" / "structure_yaml_guide.txt").write_text("guide")
        (root / "schemas" / "generate_plantuml_guide.txt").write_text("guide")
        lib = PromptLibrary(root)
        state = new_initial_state(brief)
        ctx = build_context(state, Level.L1_CONTEXT, TaskKind.ANALYZE)
        prompt = assemble_prompt(lib.persona("software_architect"), TaskKind.ANALYZE, ctx, lib)
        assert prompt.system_text == "Custom narrative."
        assert prompt.user_text == "Do L1 for Library Management System."


def test_render_brief_block_structure(brief):
    text = render_brief(brief)
    assert text.startswith("Title: Library Management System")
    assert "Functional requirements:\n- Members can search the catalog" in text
