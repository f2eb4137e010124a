"""Judge layer tests: fixture-driven parsing, clamping, weighted risk."""

from __future__ import annotations

import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from c4gen.domain import Level
from c4gen.eval_judge import (
    DEFAULT_SEVERITY_WEIGHTS,
    EntityRole,
    JudgeUnavailable,
    architect_critique,
    extract_ground_truth_entities,
    extract_json_object,
    security_red_team,
    verify_entities,
)
from c4gen.gateway import Gateway, GenerationParams, ScriptedBackend
from c4gen.views import parse_plantuml, parse_view_yaml
from conftest import make_artifact, mock_gateway, read_fixture

PARAMS = GenerationParams(model_id="judge-model")

L1_VIEW = parse_view_yaml(read_fixture("l1/structure_yaml.yaml"), Level.L1_CONTEXT)
L1_DIAGRAM = parse_plantuml(read_fixture("l1/generate_plantuml.puml"))
L2_VIEW = parse_view_yaml(read_fixture("l2/structure_yaml.yaml"), Level.L2_CONTAINER)
L2_DIAGRAM = parse_plantuml(read_fixture("l2/generate_plantuml.puml"))


class TestJsonExtraction:
    def test_raw_json(self):
        assert extract_json_object('{"a": 1}') == {"a": 1}

    def test_fenced_block(self):
        assert extract_json_object('```json\n{"a": 1}\n```') == {"a": 1}

    def test_embedded_in_prose(self):
        text = 'Sure, here it is: {"a": 1} hope that helps!'
        assert extract_json_object(text) == {"a": 1}

    def test_no_object_raises(self):
        with pytest.raises(ValueError):
            extract_json_object("no json here")


class TestEntityExtraction:
    def test_fixture_parse_fidelity(self, brief):
        entities = extract_ground_truth_entities(brief, mock_gateway(), PARAMS)
        names = {e.name: e.role for e in entities.entities}
        assert names["Member"] is EntityRole.ACTOR
        assert names["Librarian"] is EntityRole.ACTOR
        assert names["Municipal Email Gateway"] is EntityRole.EXTERNAL_SYSTEM

    def test_case_insensitive_dedupe(self, brief):
        response = json.dumps(
            {"entities": [
                {"name": "Member", "role": "actor"},
                {"name": "MEMBER", "role": "actor"},
                {"name": "Email", "role": "external_system"},
            ]}
        )
        gateway = Gateway(ScriptedBackend([response]))
        entities = extract_ground_truth_entities(brief, gateway, PARAMS)
        assert [e.name for e in entities.entities] == ["Member", "Email"]

    def test_malformed_three_times_is_unavailable(self, brief):
        gateway = Gateway(ScriptedBackend(["nope", "still nope", "{bad json"]))
        with pytest.raises(JudgeUnavailable) as error:
            extract_ground_truth_entities(brief, gateway, PARAMS, max_attempts=3)
        assert len(error.value.diagnostics) == 3


class TestVerifyEntities:
    def _entities(self, n):
        response = json.dumps(
            {"entities": [{"name": f"Entity {i}", "role": "actor"} for i in range(n)]}
        )
        gateway = Gateway(ScriptedBackend([response]))
        from c4gen.domain import SystemBrief

        brief = SystemBrief(title="t", description="d", functional_requirements=("f",))
        return extract_ground_truth_entities(brief, gateway, PARAMS)

    def test_half_present_is_50(self):
        entities = self._entities(8)
        results = [
            {"name": f"Entity {i}", "present": i < 4} for i in range(8)
        ]
        gateway = Gateway(ScriptedBackend([json.dumps({"results": results})]))
        score = verify_entities(entities, L1_VIEW, L1_DIAGRAM, gateway, PARAMS)
        assert score.score_percent == 50.0
        assert score.total == 8

    def test_empty_ground_truth_is_null_metric(self):
        from c4gen.eval_judge import EntityList

        gateway = Gateway(ScriptedBackend([]))
        with pytest.raises(JudgeUnavailable, match="empty ground truth"):
            verify_entities(EntityList(entities=()), L1_VIEW, L1_DIAGRAM, gateway, PARAMS)

    def test_unmentioned_entity_counts_absent(self):
        entities = self._entities(3)
        results = [{"name": "Entity 0", "present": True}]
        gateway = Gateway(ScriptedBackend([json.dumps({"results": results})]))
        score = verify_entities(entities, L1_VIEW, L1_DIAGRAM, gateway, PARAMS)
        assert abs(score.score_percent - 100 / 3) < 1e-9

    @given(present=st.integers(0, 7))
    def test_monotone_in_present_count(self, present):
        entities = self._entities(8)
        def score_for(k):
            results = [{"name": f"Entity {i}", "present": i < k} for i in range(8)]
            gateway = Gateway(ScriptedBackend([json.dumps({"results": results})]))
            return verify_entities(entities, L1_VIEW, L1_DIAGRAM, gateway, PARAMS).score_percent
        assert score_for(present) <= score_for(present + 1)


def _report_artifacts():
    from c4gen.domain import ArtifactKind

    return [
        make_artifact(ArtifactKind.ANALYSIS_REPORT, Level.L1_CONTEXT, content="l1 report"),
        make_artifact(ArtifactKind.PLANTUML_DIAGRAM, Level.L1_CONTEXT, content="l1 puml"),
    ]


class TestArchitectCritique:
    def test_fixture_round_trip(self):
        critique, warnings = architect_critique(_report_artifacts(), mock_gateway(), PARAMS)
        assert critique.clarity == 4
        assert critique.feasibility == 4
        assert len(critique.key_risks) == 3
        assert warnings == ()

    def test_out_of_range_clamped_with_warning(self):
        response = json.dumps(
            {"clarity": 7, "feasibility": 0, "key_risks": [], "recommendation": "r"}
        )
        gateway = Gateway(ScriptedBackend([response]))
        critique, warnings = architect_critique(_report_artifacts(), gateway, PARAMS)
        assert critique.clarity == 5
        assert critique.feasibility == 1
        assert len(warnings) == 2

    def test_no_artifacts_is_unavailable(self):
        with pytest.raises(JudgeUnavailable):
            architect_critique([], mock_gateway(), PARAMS)

    def test_budget_drops_oldest_first(self):
        from c4gen.domain import ArtifactKind

        artifacts = [
            make_artifact(ArtifactKind.ANALYSIS_REPORT, Level.L1_CONTEXT, content="A" * 500),
            make_artifact(ArtifactKind.ANALYSIS_REPORT, Level.L2_CONTAINER, content="B" * 500),
        ]
        backend = ScriptedBackend(
            [json.dumps({"clarity": 3, "feasibility": 3, "key_risks": [], "recommendation": "r"})]
        )
        gateway = Gateway(backend)
        architect_critique(artifacts, gateway, PARAMS, max_context_chars=600)
        prompt = backend.calls[0][0]
        assert "B" * 500 in prompt.user_text
        assert "A" * 500 not in prompt.user_text


class TestSecurityRedTeam:
    def test_weighted_sum_from_fixture(self):
        risk = security_red_team(L2_VIEW, L2_DIAGRAM, mock_gateway(), PARAMS)
        # Fixture findings are [high, medium, medium] -> 5 + 3 + 3.
        severities = [f.severity.value for f in risk.findings]
        assert severities == ["high", "medium", "medium"]
        oracle = sum(DEFAULT_SEVERITY_WEIGHTS[s] for s in severities)
        assert risk.points == oracle == 11.0

    def test_no_findings_zero_points(self):
        gateway = Gateway(ScriptedBackend([json.dumps({"findings": []})]))
        risk = security_red_team(L2_VIEW, L2_DIAGRAM, gateway, PARAMS)
        assert risk.points == 0.0

    def test_custom_weights_echoed(self):
        response = json.dumps(
            {"findings": [{"title": "t", "severity": "critical", "affected_elements": []}]}
        )
        gateway = Gateway(ScriptedBackend([response]))
        risk = security_red_team(
            L2_VIEW, L2_DIAGRAM, gateway, PARAMS, weights={"critical": 13}
        )
        assert risk.points == 13.0
        assert dict(risk.weights_used)["critical"] == 13.0

    def test_points_recomputable_from_findings(self):
        risk = security_red_team(L2_VIEW, L2_DIAGRAM, mock_gateway(), PARAMS)
        table = dict(risk.weights_used)
        assert risk.points == sum(table[f.severity.value] for f in risk.findings)

    def test_unknown_severity_rejected_then_unavailable(self):
        bad = json.dumps({"findings": [{"title": "t", "severity": "apocalyptic"}]})
        gateway = Gateway(ScriptedBackend([bad, bad, bad]))
        with pytest.raises(JudgeUnavailable):
            security_red_team(L2_VIEW, L2_DIAGRAM, gateway, PARAMS)
