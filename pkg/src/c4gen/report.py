"""Aggregation of evaluation files into summary tables (text and CSV).

Rows are grouped by (model_id, configuration). Means are taken over per-run
values ignoring nulls; null counts are reported so averages are never
silently biased by failed judge metrics.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, fields
from pathlib import Path

from .domain import PipelineError

METRIC_FIELDS = (
    ("compilation_pct", ("compilation", "success_pct")),
    ("completeness_pct", ("completeness", "score_percent")),
    ("abstraction_pct", ("abstraction", "score_percent")),
    ("naming_pct", ("naming", "score_percent")),
    ("semantic_pct", ("judge", "semantic_consistency", "score_percent")),
    ("clarity_mean", ("judge", "architect", "clarity")),
    ("feasibility_mean", ("judge", "architect", "feasibility")),
    ("risk_points_mean", ("judge", "security", "points")),
)


class ReportError(PipelineError):
    """No usable evaluation documents were provided."""


@dataclass(frozen=True)
class MetricsRow:
    model_id: str
    configuration: str
    compilation_pct: float | None
    completeness_pct: float | None
    abstraction_pct: float | None
    naming_pct: float | None
    semantic_pct: float | None
    clarity_mean: float | None
    feasibility_mean: float | None
    risk_points_mean: float | None


@dataclass(frozen=True)
class ComponentStatsRow:
    model_id: str
    configuration: str
    mean: float
    min: int
    max: int


def _dig(document: dict, path: tuple[str, ...]):
    node = document
    for key in path:
        if not isinstance(node, dict) or node.get(key) is None:
            return None
        node = node[key]
    return node


def load_evaluation(run_dir: Path | str) -> dict:
    path = Path(run_dir) / "evaluation.json"
    if not path.is_file():
        raise ReportError(f"no evaluation.json in {run_dir}")
    try:
        document = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ReportError(f"unreadable evaluation.json in {run_dir}: {exc}") from exc
    version = str(document.get("schema_version", ""))
    major = version.split(".", 1)[0]
    if major != "1":
        raise ReportError(
            f"unsupported evaluation schema version {version!r} in {run_dir}"
        )
    return document


@dataclass
class ReportTables:
    metrics: list[MetricsRow]
    component_stats: list[ComponentStatsRow]
    null_counts: dict[tuple[str, str], dict[str, int]]
    token_totals: dict[tuple[str, str], int]


def aggregate(documents: list[dict]) -> ReportTables:
    if not documents:
        raise ReportError("no evaluation documents to aggregate")

    groups: dict[tuple[str, str], list[dict]] = {}
    for document in documents:
        key = (
            str(document.get("model_id") or "unknown"),
            str(document.get("configuration") or "unknown"),
        )
        groups.setdefault(key, []).append(document)

    metrics_rows: list[MetricsRow] = []
    stats_rows: list[ComponentStatsRow] = []
    null_counts: dict[tuple[str, str], dict[str, int]] = {}
    token_totals: dict[tuple[str, str], int] = {}

    for key in sorted(groups):
        docs = groups[key]
        values: dict[str, float | None] = {}
        nulls: dict[str, int] = {}
        for field_name, path in METRIC_FIELDS:
            collected = [
                float(v) for v in (_dig(d, path) for d in docs) if v is not None
            ]
            nulls[field_name] = len(docs) - len(collected)
            values[field_name] = (
                round(sum(collected) / len(collected), 2) if collected else None
            )
        metrics_rows.append(MetricsRow(model_id=key[0], configuration=key[1], **values))
        null_counts[key] = nulls

        counts = [
            int(d["component_count"]) for d in docs if d.get("component_count") is not None
        ]
        if counts:
            stats_rows.append(
                ComponentStatsRow(
                    model_id=key[0],
                    configuration=key[1],
                    mean=round(sum(counts) / len(counts), 2),
                    min=min(counts),
                    max=max(counts),
                )
            )

        total = 0
        for d in docs:
            usage = d.get("usage") or {}
            total += int(usage.get("input_tokens", 0)) + int(usage.get("output_tokens", 0))
        token_totals[key] = total

    return ReportTables(
        metrics=metrics_rows,
        component_stats=stats_rows,
        null_counts=null_counts,
        token_totals=token_totals,
    )


def _cell(value) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        return f"{value:.2f}"
    return str(value)


def render_text(tables: ReportTables) -> str:
    """Fixed-width summary tables; output is byte-stable for equal inputs."""
    out = io.StringIO()
    metric_headers = [f.name for f in fields(MetricsRow)]
    widths = [
        max(len(h), max((len(_cell(getattr(r, h))) for r in tables.metrics), default=0))
        for h in metric_headers
    ]

    out.write("Evaluation summary (means over runs; '-' = no data)\n")
    out.write(
        "  ".join(h.ljust(w) for h, w in zip(metric_headers, widths)).rstrip() + "\n"
    )
    out.write("  ".join("-" * w for w in widths) + "\n")
    for row in tables.metrics:
        out.write(
            "  ".join(
                _cell(getattr(row, h)).ljust(w) for h, w in zip(metric_headers, widths)
            ).rstrip()
            + "\n"
        )

    out.write("\nComponent counts at L2\n")
    out.write("model_id  configuration  mean  min  max\n")
    for row in tables.component_stats:
        out.write(
            f"{row.model_id}  {row.configuration}  {_cell(row.mean)}  {row.min}  {row.max}\n"
        )

    out.write("\nToken totals and judge-null counts per group\n")
    for key in sorted(tables.token_totals):
        nulls = tables.null_counts.get(key, {})
        null_note = ", ".join(
            f"{name}={count}" for name, count in sorted(nulls.items()) if count
        )
        out.write(
            f"{key[0]} / {key[1]}: {tables.token_totals[key]} tokens"
            + (f" (nulls: {null_note})" if null_note else "")
            + "\n"
        )
    return out.getvalue()


def write_csv(tables: ReportTables, out_dir: Path | str) -> list[Path]:
    """Write metrics.csv and component_stats.csv; columns follow field order."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    metrics_path = out_dir / "metrics.csv"
    with metrics_path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        header = [f.name for f in fields(MetricsRow)]
        writer.writerow(header)
        for row in tables.metrics:
            writer.writerow(
                ["" if getattr(row, h) is None else getattr(row, h) for h in header]
            )
    written.append(metrics_path)

    stats_path = out_dir / "component_stats.csv"
    with stats_path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        header = [f.name for f in fields(ComponentStatsRow)]
        writer.writerow(header)
        for row in tables.component_stats:
            writer.writerow([getattr(row, h) for h in header])
    written.append(stats_path)
    return written
