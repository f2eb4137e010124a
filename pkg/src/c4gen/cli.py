"""Command-line entry points: generate, evaluate, report.

Exit codes for ``generate``: 0 all instances complete, 2 partial failures,
3 fatal (the L1 or L2 instance failed and halted the descent), 4 bad inputs
or configuration. ``evaluate`` exits 0 once the evaluation is written, even
when checks fail; 4 on an unreadable run. ``report`` exits 4 when no valid
run is given.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import AppConfig, ConfigError, build_gateway, load_config
from .domain import BriefFormat, InvalidBrief, Level, ParseError, validate_brief
from .evaluation import evaluate_run, write_evaluation
from .orchestrator import run_workflow
from .prompting import PromptLibrary, TemplateError
from .report import ReportError, aggregate, load_evaluation, render_text, write_csv
from .resources import seed_fixtures
from .runstore import RunStoreError, load_run, save_run

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_PARTIAL = 2
EXIT_FATAL = 3
EXIT_CONFIG = 4


def _load_inputs(brief_path: str, config_path: str) -> tuple:
    brief_file = Path(brief_path)
    if not brief_file.is_file():
        raise ConfigError(f"brief file not found: {brief_file}")
    fmt = BriefFormat.JSON if brief_file.suffix.lower() == ".json" else BriefFormat.YAML
    brief = validate_brief(brief_file.read_text(encoding="utf-8"), fmt)
    cfg = load_config(config_path)
    return brief, cfg


def cmd_generate(
    brief_path: str,
    config_path: str,
    out_dir: str,
    seed_dir: str | None = None,
) -> tuple[int, Path | None]:
    """Run the workflow and persist the run; returns (exit code, run dir)."""
    try:
        if seed_dir:
            seed_fixtures(seed_dir)
        brief, cfg = _load_inputs(brief_path, config_path)
        library = PromptLibrary(cfg.templates_dir)
        gateway = build_gateway(cfg.generation)
    except (ConfigError, InvalidBrief, ParseError, TemplateError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG, None

    run_config = cfg.run_config()
    result = run_workflow(brief, run_config, gateway, library)
    run_dir = save_run(
        out_dir,
        brief,
        result,
        config_echo=cfg.echo(),
        model_id=cfg.generation.model_id,
        configuration=run_config.configuration_label,
    )

    print(f"run_id: {run_dir.name}")
    print(f"run_dir: {run_dir}")
    usage = result.usage_total
    print(
        f"tokens: input={usage.input_tokens} output={usage.output_tokens}"
        f"{' (estimated)' if usage.estimated else ''}"
    )
    for instance, status in result.per_instance_status.items():
        mark = "complete" if status.complete else f"FAILED ({status.reason})"
        print(f"  {instance.dirname}: {mark}")

    fatal_levels = (Level.L1_CONTEXT, Level.L2_CONTAINER)
    if any(
        not status.complete
        for instance, status in result.per_instance_status.items()
        if instance.level in fatal_levels
    ):
        return EXIT_FATAL, run_dir
    if not result.all_complete:
        return EXIT_PARTIAL, run_dir
    return EXIT_OK, run_dir


def cmd_evaluate(
    run_dir: str,
    config_path: str,
    no_judge: bool = False,
    seed_dir: str | None = None,
) -> tuple[int, Path | None]:
    """Evaluate a persisted run; returns (exit code, evaluation.json path)."""
    try:
        if seed_dir:
            seed_fixtures(seed_dir)
        cfg = load_config(config_path)
        run = load_run(run_dir)
    except (ConfigError, RunStoreError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG, None

    document = evaluate_run(run, cfg, use_judge=not no_judge)
    path = write_evaluation(run.run_dir, document)
    print(f"evaluation: {path}")
    for name, value in (
        ("compilation", document["compilation"]["success_pct"]),
        ("completeness", document["completeness"]["score_percent"]),
        ("abstraction", document["abstraction"]["score_percent"]),
        ("naming", document["naming"]["score_percent"]),
        ("definitional", document["definitional"]["score_percent"]),
    ):
        print(f"  {name}: {'-' if value is None else value}")
    cross = document["cross_level"]
    print(f"  cross_level: {cross.get('passed', 'skipped')}")
    return EXIT_OK, path


def cmd_report(run_dirs: list[str], out_dir: str | None = None) -> int:
    documents = []
    for run_dir in run_dirs:
        try:
            documents.append(load_evaluation(run_dir))
        except ReportError as exc:
            print(f"warning: skipping {run_dir}: {exc}", file=sys.stderr)
    if not documents:
        print("error: no valid evaluation files", file=sys.stderr)
        return EXIT_CONFIG
    tables = aggregate(documents)
    sys.stdout.write(render_text(tables))
    if out_dir:
        for path in write_csv(tables, out_dir):
            print(f"wrote {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="c4gen",
        description="Generate and evaluate three-level C4 architecture models "
        "from a system brief via simulated multi-agent dialogue.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="run the generation workflow")
    gen.add_argument("brief", help="path to the system brief (YAML or JSON)")
    gen.add_argument("--config", required=True, help="path to the config file")
    gen.add_argument("--out", default="runs", help="runs output directory")
    gen.add_argument(
        "--seed-fixtures",
        metavar="DIR",
        help="copy the bundled Library fixture set into DIR before running",
    )

    ev = sub.add_parser("evaluate", help="evaluate a persisted run")
    ev.add_argument("run_dir", help="run directory produced by generate")
    ev.add_argument("--config", required=True, help="path to the config file")
    ev.add_argument("--no-judge", action="store_true", help="skip the judge layer")
    ev.add_argument(
        "--seed-fixtures",
        metavar="DIR",
        help="copy the bundled Library fixture set into DIR before running",
    )

    rep = sub.add_parser("report", help="aggregate evaluations into tables")
    rep.add_argument("run_dirs", nargs="+", help="run directories with evaluation.json")
    rep.add_argument("--out", help="directory for CSV output")
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    if args.command == "generate":
        code, _ = cmd_generate(args.brief, args.config, args.out, args.seed_fixtures)
        return code
    if args.command == "evaluate":
        code, _ = cmd_evaluate(args.run_dir, args.config, args.no_judge, args.seed_fixtures)
        return code
    return cmd_report(args.run_dirs, args.out)


if __name__ == "__main__":
    raise SystemExit(main())
