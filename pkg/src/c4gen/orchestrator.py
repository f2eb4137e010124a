"""Workflow execution: collaborative sessions, processing chains, L1->L2->L3.

A run descends through the levels: one instance each for Context and
Container, then one instance per container queued from the L2 view. Each
instance runs an analysis session (round-robin team dialogue or a single
agent) followed by the fixed transformation chain transcript -> analysis
report -> view -> diagram. Container-level instances are independent and may
run in parallel; their artifacts are merged back in queue order.
"""

from __future__ import annotations

import enum
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

from .domain import (
    Artifact,
    ArtifactKind,
    Level,
    Message,
    PipelineError,
    PipelineState,
    SystemBrief,
    TokenUsage,
    append_artifact,
    append_message,
    new_initial_state,
    reset_messages,
    with_component_queue,
)
from .gateway import FixtureKey, Gateway, GatewayError, GenerationParams
from .prompting import (
    PROCESSING_PERSONA_IDS,
    SINGLE_AGENT_PERSONA_ID,
    MissingPrerequisite,
    Persona,
    PromptLibrary,
    TaskKind,
    assemble_prompt,
    build_context,
    default_library,
    serialize_messages,
)
from .views import ElementKind, ViewError, parse_plantuml, parse_view_yaml

logger = logging.getLogger(__name__)

#: Failures that abort one instance but not the whole run.
INSTANCE_ERRORS = (GatewayError, MissingPrerequisite, ViewError)


class RunMode(str, enum.Enum):
    SINGLE_AGENT = "single_agent"
    COLLABORATIVE = "collaborative"


@dataclass(frozen=True)
class RunConfig:
    mode: RunMode
    generation: GenerationParams
    rounds: int = 3
    parallel_l3: bool = False
    l3_skip_datastores: bool = True
    max_validation_attempts: int = 3

    def __post_init__(self) -> None:
        if self.rounds < 1:
            raise ValueError("rounds must be a positive integer")
        if self.max_validation_attempts < 1:
            raise ValueError("max_validation_attempts must be >= 1")

    @property
    def configuration_label(self) -> str:
        if self.mode is RunMode.SINGLE_AGENT:
            return "SingleAgent"
        return f"Collab{self.rounds}"


@dataclass(frozen=True)
class LevelInstance:
    level: Level
    focus_container: str | None = None

    def __post_init__(self) -> None:
        if self.level is Level.L3_COMPONENT:
            if not self.focus_container:
                raise ValueError("L3 instances require a focus_container")
        elif self.focus_container is not None:
            raise ValueError("focus_container is only valid for L3 instances")

    @property
    def dirname(self) -> str:
        return self.level.dirname(self.focus_container)

    @property
    def label(self) -> str:
        suffix = f" ({self.focus_container})" if self.focus_container else ""
        return f"{self.level.short} {self.level.label}{suffix}"


@dataclass(frozen=True)
class InstanceStatus:
    complete: bool
    reason: str | None = None


COMPLETE = InstanceStatus(complete=True)


def partial_failure(reason: str) -> InstanceStatus:
    return InstanceStatus(complete=False, reason=reason)


@dataclass
class RunResult:
    final_state: PipelineState
    per_instance_status: dict[LevelInstance, InstanceStatus]
    usage_total: TokenUsage
    wall_time_ms: int

    @property
    def all_complete(self) -> bool:
        return all(s.complete for s in self.per_instance_status.values())


class ProcessingChainError(PipelineError):
    """A chain step failed; carries the state with earlier artifacts retained."""

    def __init__(self, reason: str, state: PipelineState):
        super().__init__(reason)
        self.reason = reason
        self.state = state


def run_collaborative_session(
    state: PipelineState,
    instance: LevelInstance,
    cfg: RunConfig,
    gateway: Gateway,
    library: PromptLibrary | None = None,
    team: list[Persona] | None = None,
) -> PipelineState:
    """Run N rounds of round-robin dialogue and freeze the transcript.

    Global turn k is authored by team[k mod K]; the session produces exactly
    N*K messages, which become the instance's TRANSCRIPT artifact. The session
    message list is reset afterwards.
    """
    if cfg.mode is not RunMode.COLLABORATIVE:
        raise ValueError("run_collaborative_session requires collaborative mode")
    lib = library or default_library()
    members = team if team is not None else lib.team_for_level(instance.level)
    if not members:
        raise ValueError("collaborative session requires a non-empty team")
    size = len(members)

    for k in range(cfg.rounds * size):
        persona = members[k % size]
        ctx = build_context(state, instance.level, TaskKind.ANALYZE, instance.focus_container)
        prompt = assemble_prompt(persona, TaskKind.ANALYZE, ctx, lib)
        key = FixtureKey(TaskKind.ANALYZE, instance.level, instance.focus_container, turn=k)
        completion = gateway.complete(prompt, cfg.generation, fixture=key)
        state = append_message(
            state,
            Message(
                author_persona=persona.id,
                turn_index=k,
                content=completion.text,
                token_usage=completion.usage,
            ),
        )
    return _freeze_transcript(state, instance)


def run_single_agent_analysis(
    state: PipelineState,
    instance: LevelInstance,
    cfg: RunConfig,
    gateway: Gateway,
    library: PromptLibrary | None = None,
) -> PipelineState:
    """Baseline analysis: one completion by a generalist architect persona."""
    lib = library or default_library()
    persona = lib.persona(SINGLE_AGENT_PERSONA_ID)
    ctx = build_context(state, instance.level, TaskKind.ANALYZE, instance.focus_container)
    prompt = assemble_prompt(persona, TaskKind.ANALYZE, ctx, lib)
    key = FixtureKey(TaskKind.ANALYZE, instance.level, instance.focus_container, turn=0)
    completion = gateway.complete(prompt, cfg.generation, fixture=key)
    state = append_message(
        state,
        Message(
            author_persona=persona.id,
            turn_index=0,
            content=completion.text,
            token_usage=completion.usage,
        ),
    )
    return _freeze_transcript(state, instance)


def _freeze_transcript(state: PipelineState, instance: LevelInstance) -> PipelineState:
    usage = TokenUsage()
    for message in state.messages:
        usage = usage + message.token_usage
    transcript = Artifact(
        kind=ArtifactKind.TRANSCRIPT,
        level=instance.level,
        focus_container=instance.focus_container,
        content=serialize_messages(state.messages),
        token_usage=usage,
    )
    state = append_artifact(state, transcript)
    return reset_messages(state)


_CHAIN = (
    (TaskKind.SYNTHESIZE, ArtifactKind.ANALYSIS_REPORT),
    (TaskKind.STRUCTURE_YAML, ArtifactKind.VIEW_YAML),
    (TaskKind.GENERATE_PLANTUML, ArtifactKind.PLANTUML_DIAGRAM),
)


def run_processing_chain(
    state: PipelineState,
    instance: LevelInstance,
    cfg: RunConfig,
    gateway: Gateway,
    library: PromptLibrary | None = None,
) -> PipelineState:
    """Transform the instance transcript into report, view and diagram.

    Each step's primary input is the previous step's artifact. View and
    diagram outputs are validated by their parsers with retries; on
    exhaustion a :class:`ProcessingChainError` is raised carrying the state
    with all earlier artifacts retained.
    """
    lib = library or default_library()
    for task, kind in _CHAIN:
        persona = lib.persona(PROCESSING_PERSONA_IDS[task])
        try:
            ctx = build_context(state, instance.level, task, instance.focus_container)
            prompt = assemble_prompt(persona, task, ctx, lib)
            key = FixtureKey(task, instance.level, instance.focus_container)
            if task is TaskKind.STRUCTURE_YAML:
                completion = gateway.complete_validated(
                    prompt,
                    cfg.generation,
                    validator=lambda text: parse_view_yaml(text, instance.level),
                    max_attempts=cfg.max_validation_attempts,
                    fixture=key,
                )
            elif task is TaskKind.GENERATE_PLANTUML:
                completion = gateway.complete_validated(
                    prompt,
                    cfg.generation,
                    validator=parse_plantuml,
                    max_attempts=cfg.max_validation_attempts,
                    fixture=key,
                )
            else:
                completion = gateway.complete(prompt, cfg.generation, fixture=key)
        except INSTANCE_ERRORS as exc:
            raise ProcessingChainError(f"{task.value} failed: {exc}", state) from exc
        state = append_artifact(
            state,
            Artifact(
                kind=kind,
                level=instance.level,
                focus_container=instance.focus_container,
                content=completion.text,
                token_usage=completion.usage,
            ),
        )
    return state


def container_queue_from_view(view, skip_datastores: bool = True) -> list[str]:
    """Container aliases in declaration order; data stores are containers too
    unless excluded, and external containers are never decomposed."""
    aliases = []
    for element in view.elements:
        if element.external:
            continue
        if element.kind is ElementKind.CONTAINER:
            aliases.append(element.alias)
        elif element.kind is ElementKind.DATA_STORE and not skip_datastores:
            aliases.append(element.alias)
    return aliases


def populate_component_queue(
    state: PipelineState, skip_datastores: bool = True
) -> PipelineState:
    """Fill the component queue from the L2 view artifact."""
    artifact = state.find_artifact(ArtifactKind.VIEW_YAML, Level.L2_CONTAINER)
    if artifact is None:
        raise MissingPrerequisite("VIEW_YAML:L2")
    try:
        view = parse_view_yaml(artifact.content, Level.L2_CONTAINER)
    except ViewError as exc:
        raise MissingPrerequisite(f"VIEW_YAML:L2 (unparseable: {exc})") from exc
    queue = container_queue_from_view(view, skip_datastores=skip_datastores)
    if not queue:
        logger.warning("L2 view defines no containers; workflow ends after L2")
    return with_component_queue(state, queue)


def _execute_instance(
    state: PipelineState,
    instance: LevelInstance,
    cfg: RunConfig,
    gateway: Gateway,
    library: PromptLibrary | None,
) -> tuple[PipelineState, InstanceStatus]:
    try:
        if cfg.mode is RunMode.SINGLE_AGENT:
            state = run_single_agent_analysis(state, instance, cfg, gateway, library)
        else:
            state = run_collaborative_session(state, instance, cfg, gateway, library)
    except INSTANCE_ERRORS as exc:
        return state, partial_failure(f"analysis failed: {exc}")
    try:
        state = run_processing_chain(state, instance, cfg, gateway, library)
    except ProcessingChainError as exc:
        return exc.state, partial_failure(exc.reason)
    return state, COMPLETE


def run_workflow(
    brief: SystemBrief,
    cfg: RunConfig,
    gateway: Gateway,
    library: PromptLibrary | None = None,
) -> RunResult:
    """Execute the full top-down workflow for one brief.

    A failed L1 or L2 instance halts the descent and marks the remaining
    levels as prerequisite failures; L3 failures are isolated per container.
    """
    started = time.monotonic()
    lib = library or default_library()
    state = new_initial_state(brief)
    statuses: dict[LevelInstance, InstanceStatus] = {}

    l1 = LevelInstance(Level.L1_CONTEXT)
    l2 = LevelInstance(Level.L2_CONTAINER)

    state, statuses[l1] = _execute_instance(state, l1, cfg, gateway, lib)
    if not statuses[l1].complete:
        statuses[l2] = partial_failure("prerequisite missing")
        return _finish(state, statuses, gateway, started)

    state, statuses[l2] = _execute_instance(state, l2, cfg, gateway, lib)

    try:
        state = populate_component_queue(state, cfg.l3_skip_datastores)
    except MissingPrerequisite:
        state = with_component_queue(state, [])

    if not statuses[l2].complete:
        # Descent halts; containers already named by a parseable L2 view are
        # recorded as prerequisite failures.
        for alias in state.component_queue:
            statuses[LevelInstance(Level.L3_COMPONENT, alias)] = partial_failure(
                "prerequisite missing"
            )
        return _finish(state, statuses, gateway, started)

    instances = [LevelInstance(Level.L3_COMPONENT, alias) for alias in state.component_queue]
    if cfg.parallel_l3 and len(instances) > 1:
        snapshot = state
        with ThreadPoolExecutor(max_workers=min(len(instances), 8)) as pool:
            futures = [
                pool.submit(_execute_instance, snapshot, inst, cfg, gateway, lib)
                for inst in instances
            ]
            outcomes = [f.result() for f in futures]
        for instance, (fork_state, status) in zip(instances, outcomes):
            statuses[instance] = status
            for artifact in fork_state.artifacts[len(snapshot.artifacts):]:
                state = append_artifact(state, artifact)
    else:
        for instance in instances:
            state, statuses[instance] = _execute_instance(state, instance, cfg, gateway, lib)

    return _finish(state, statuses, gateway, started)


def _finish(
    state: PipelineState,
    statuses: dict[LevelInstance, InstanceStatus],
    gateway: Gateway,
    started: float,
) -> RunResult:
    return RunResult(
        final_state=state,
        per_instance_status=statuses,
        usage_total=gateway.ledger.total(),
        wall_time_ms=int((time.monotonic() - started) * 1000),
    )
