"""Evaluation driver: applies all three layers to a persisted run.

Deterministic layers always run. The judge layer runs only when a judge
backend is configured and not disabled; failed judge metrics are recorded as
null with a machine-readable reason, never as zero.
"""

from __future__ import annotations

import json
from pathlib import Path

from .config import AppConfig, build_gateway
from .domain import ArtifactKind, Level, SystemBrief
from .eval_det import (
    check_abstraction_adherence,
    check_completeness,
    check_cross_level,
    check_definitional_consistency,
    check_naming_consistency,
    count_l2_containers,
)
from .eval_judge import (
    JUDGE_DISCLAIMER,
    JudgeUnavailable,
    architect_critique,
    extract_ground_truth_entities,
    security_red_team,
    verify_entities,
)
from .orchestrator import LevelInstance
from .runstore import LoadedRun
from .views import CompileMode, ViewError, check_compilation, parse_plantuml, parse_view_yaml

EVALUATION_SCHEMA_VERSION = "1.0"


def _round(value: float | None) -> float | None:
    return None if value is None else round(value, 2)


def _mean(values: list[float]) -> float | None:
    return sum(values) / len(values) if values else None


def evaluate_run(run: LoadedRun, cfg: AppConfig, use_judge: bool = True) -> dict:
    """Produce the evaluation document for one run."""
    instances = run.instances
    artifacts = run.artifacts()

    views: dict[LevelInstance, object] = {}
    view_errors: dict[LevelInstance, str] = {}
    diagrams: dict[LevelInstance, object] = {}
    diagram_errors: dict[LevelInstance, str] = {}
    for instance in instances:
        view_text = run.artifact_text(instance, ArtifactKind.VIEW_YAML)
        if view_text is None:
            view_errors[instance] = "view.yaml missing"
        else:
            try:
                views[instance] = parse_view_yaml(view_text, instance.level)
            except ViewError as exc:
                view_errors[instance] = str(exc)
        diagram_text = run.artifact_text(instance, ArtifactKind.PLANTUML_DIAGRAM)
        if diagram_text is None:
            diagram_errors[instance] = "diagram.puml missing"
        else:
            try:
                diagrams[instance] = parse_plantuml(diagram_text)
            except ViewError as exc:
                diagram_errors[instance] = str(exc)

    # Layer 1: compilation + completeness
    compilation_entries = []
    for instance in instances:
        diagram_text = run.artifact_text(instance, ArtifactKind.PLANTUML_DIAGRAM)
        if diagram_text is None:
            continue
        result = check_compilation(
            diagram_text, mode=cfg.compilation_mode, runner_path=cfg.runner_path
        )
        compilation_entries.append(
            {
                "instance": instance.dirname,
                "ok": result.ok,
                "diagnostics": list(result.diagnostics),
            }
        )
    compilation_pct = _mean([100.0 if e["ok"] else 0.0 for e in compilation_entries])

    completeness = check_completeness(artifacts, instances)

    # Layer 2: abstraction, naming, definitional, cross-level, counts
    abstraction_entries = []
    include_warnings = []
    for instance in instances:
        if instance in diagrams:
            diagram = diagrams[instance]
            report = check_abstraction_adherence(diagram, instance.level)
            abstraction_entries.append(
                {
                    "instance": instance.dirname,
                    "score_percent": _round(report.score_percent),
                    "rules": [
                        {"rule": r.rule_id, "passed": r.passed, "detail": r.detail}
                        for r in report.rules
                    ],
                }
            )
            if diagram.includes and diagram.level is not instance.level:
                include_warnings.append(
                    f"{instance.dirname}: include suggests {diagram.level.short}, "
                    f"artifact level is {instance.level.short}"
                )
        elif instance in diagram_errors:
            abstraction_entries.append(
                {"instance": instance.dirname, "skipped": diagram_errors[instance]}
            )
    abstraction_pct = _mean(
        [e["score_percent"] for e in abstraction_entries if "score_percent" in e]
    )

    naming = check_naming_consistency(list(views.values()))

    definitional_entries = []
    for instance in instances:
        if instance in views and instance in diagrams:
            report = check_definitional_consistency(views[instance], diagrams[instance])
            definitional_entries.append(
                {
                    "instance": instance.dirname,
                    "score_percent": _round(report.score_percent),
                    "missing_in_diagram": sorted(report.missing_in_diagram),
                    "extra_in_diagram": sorted(report.extra_in_diagram),
                }
            )
        else:
            reason = view_errors.get(instance) or diagram_errors.get(instance) or "not evaluable"
            definitional_entries.append(
                {"instance": instance.dirname, "skipped": reason}
            )
    definitional_pct = _mean(
        [e["score_percent"] for e in definitional_entries if "score_percent" in e]
    )

    l1 = LevelInstance(Level.L1_CONTEXT)
    l2 = LevelInstance(Level.L2_CONTAINER)
    cross_level: dict = {}
    if l1 in views and l2 in views:
        l3_pairs = [
            (inst.focus_container, views[inst])
            for inst in instances
            if inst.level is Level.L3_COMPONENT and inst in views
        ]
        report = check_cross_level(views[l1], views[l2], l3_pairs)
        cross_level = {
            "passed": report.passed,
            "l1_l2_externals": {
                "passed": report.l1_l2_externals.passed,
                "missing_in_l2": sorted(report.l1_l2_externals.missing_in_l2),
                "extra_in_l2": sorted(report.l1_l2_externals.extra_in_l2),
            },
            "l3_reference_violations": [
                {"container": c, "alias": a, "reason": r}
                for c, a, r in report.l3_reference_violations
            ],
        }
    else:
        cross_level = {
            "skipped": view_errors.get(l1) or view_errors.get(l2) or "L1/L2 views unavailable"
        }

    component_count = count_l2_containers(views[l2]) if l2 in views else None

    document = {
        "schema_version": EVALUATION_SCHEMA_VERSION,
        "run_id": run.manifest.get("run_id"),
        "model_id": run.manifest.get("model_id"),
        "configuration": run.manifest.get("configuration"),
        "compilation": {
            "mode": cfg.compilation_mode.value,
            "success_pct": _round(compilation_pct),
            "per_diagram": compilation_entries,
        },
        "completeness": {
            "score_percent": _round(completeness.score_percent),
            "expected": len(completeness.expected),
            "present_non_empty": len(completeness.present_non_empty),
        },
        "abstraction": {
            "score_percent": _round(abstraction_pct),
            "per_diagram": abstraction_entries,
            "include_level_warnings": include_warnings,
        },
        "naming": {
            "score_percent": _round(naming.score_percent),
            "dominant": naming.dominant.value if naming.dominant else None,
            "outliers": list(naming.outliers),
            "classified": {alias: conv.value for alias, conv in naming.classified},
        },
        "definitional": {
            "score_percent": _round(definitional_pct),
            "per_instance": definitional_entries,
        },
        "cross_level": cross_level,
        "component_count": component_count,
        "usage": run.manifest.get("usage", {}),
        "judge": _judge_section(run, cfg, use_judge, views, diagrams),
    }
    return document


def _judge_section(run, cfg, use_judge, views, diagrams) -> dict:
    section: dict = {
        "disclaimer": JUDGE_DISCLAIMER,
        "semantic_consistency": None,
        "semantic_consistency_reason": None,
        "architect": None,
        "architect_reason": None,
        "security": None,
        "security_reason": None,
        "usage": None,
    }
    if not use_judge:
        reason = "judge layer skipped (--no-judge)"
        for key in ("semantic_consistency_reason", "architect_reason", "security_reason"):
            section[key] = reason
        return section
    if cfg.judge is None:
        reason = "no judge backend configured"
        for key in ("semantic_consistency_reason", "architect_reason", "security_reason"):
            section[key] = reason
        return section

    gateway = build_gateway(cfg.judge)
    params = cfg.judge.params()
    section["model_id"] = cfg.judge.model_id

    l1 = LevelInstance(Level.L1_CONTEXT)
    l2 = LevelInstance(Level.L2_CONTAINER)

    # Semantic consistency: two-stage chain over the brief and L1 artifacts.
    try:
        brief = _brief_from_manifest(run)
        if l1 not in views or l1 not in diagrams:
            raise JudgeUnavailable("L1 view or diagram unavailable")
        entities = extract_ground_truth_entities(brief, gateway, params)
        score = verify_entities(entities, views[l1], diagrams[l1], gateway, params)
        section["semantic_consistency"] = {
            "score_percent": _round(score.score_percent),
            "total_entities": score.total,
            "present": list(score.present),
            "entities": [
                {"name": e.name, "role": e.role.value} for e in entities.entities
            ],
        }
    except JudgeUnavailable as exc:
        section["semantic_consistency_reason"] = exc.reason
        section["semantic_consistency_diagnostics"] = exc.diagnostics

    try:
        critique, warnings = architect_critique(run.artifacts(), gateway, params)
        section["architect"] = {
            "clarity": critique.clarity,
            "feasibility": critique.feasibility,
            "risks": list(critique.key_risks),
            "recommendation": critique.recommendation,
            "warnings": list(warnings),
        }
    except JudgeUnavailable as exc:
        section["architect_reason"] = exc.reason
        section["architect_diagnostics"] = exc.diagnostics

    try:
        if l2 not in views or l2 not in diagrams:
            raise JudgeUnavailable("L2 view or diagram unavailable")
        risk = security_red_team(
            views[l2], diagrams[l2], gateway, params, weights=cfg.severity_weights
        )
        section["security"] = {
            "points": risk.points,
            "findings": [
                {
                    "title": f.title,
                    "severity": f.severity.value,
                    "affected_elements": list(f.affected_elements),
                    "rationale": f.rationale,
                }
                for f in risk.findings
            ],
            "weights_used": {k: v for k, v in risk.weights_used},
        }
    except JudgeUnavailable as exc:
        section["security_reason"] = exc.reason
        section["security_diagnostics"] = exc.diagnostics

    usage = gateway.ledger.total()
    section["usage"] = {
        "input_tokens": usage.input_tokens,
        "output_tokens": usage.output_tokens,
        "estimated": usage.estimated,
    }
    return section


def _brief_from_manifest(run) -> SystemBrief:
    # The manifest stores only the brief hash and title; the judge needs the
    # text, so runs keep a copy of the brief alongside the manifest.
    brief_path = run.run_dir / "brief.json"
    if not brief_path.is_file():
        raise JudgeUnavailable("brief.json missing from run directory")
    data = json.loads(brief_path.read_text(encoding="utf-8"))
    return SystemBrief(
        title=data.get("title", ""),
        description=data.get("description", ""),
        domain=data.get("domain", ""),
        constraints=tuple(data.get("constraints", [])),
        functional_requirements=tuple(data.get("functional_requirements", [])),
        non_functional_requirements=tuple(data.get("non_functional_requirements", [])),
    )


def write_evaluation(run_dir: Path, document: dict) -> Path:
    path = Path(run_dir) / "evaluation.json"
    path.write_text(
        json.dumps(document, indent=2, ensure_ascii=False, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    return path
