"""Run configuration: one YAML file holds every experimental knob."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .domain import PipelineError
from .gateway import Gateway, GenerationParams, HttpBackend, MockBackend
from .orchestrator import RunConfig, RunMode
from .views import CompileMode


class ConfigError(PipelineError):
    """The configuration file is missing, malformed, or inconsistent."""


@dataclass(frozen=True)
class BackendConfig:
    backend: str  # "http" | "mock"
    model_id: str
    base_url: str = ""
    api_key_env: str | None = None
    fixtures_dir: Path | None = None
    temperature: float = 0.0
    max_output_tokens: int = 4096

    def params(self) -> GenerationParams:
        return GenerationParams(
            model_id=self.model_id,
            temperature=self.temperature,
            max_output_tokens=self.max_output_tokens,
        )


@dataclass(frozen=True)
class AppConfig:
    generation: BackendConfig
    judge: BackendConfig | None
    mode: RunMode
    rounds: int
    parallel_l3: bool
    l3_skip_datastores: bool
    max_validation_attempts: int
    compilation_mode: CompileMode
    runner_path: str | None
    severity_weights: dict[str, float]
    templates_dir: Path | None
    fixtures_dir: Path | None

    def run_config(self) -> RunConfig:
        return RunConfig(
            mode=self.mode,
            generation=self.generation.params(),
            rounds=self.rounds,
            parallel_l3=self.parallel_l3,
            l3_skip_datastores=self.l3_skip_datastores,
            max_validation_attempts=self.max_validation_attempts,
        )

    def echo(self) -> dict:
        """Plain-dict snapshot stored in the run manifest."""
        return {
            "mode": self.mode.value,
            "rounds": self.rounds,
            "parallel_l3": self.parallel_l3,
            "l3_skip_datastores": self.l3_skip_datastores,
            "max_validation_attempts": self.max_validation_attempts,
            "generation": {
                "backend": self.generation.backend,
                "model_id": self.generation.model_id,
                "base_url": self.generation.base_url,
            },
            "judge": (
                {"backend": self.judge.backend, "model_id": self.judge.model_id}
                if self.judge
                else None
            ),
            "compilation": {
                "mode": self.compilation_mode.value,
                "runner_path": self.runner_path,
            },
            "weights": {"severity": dict(self.severity_weights)},
        }


def _backend_config(
    section: dict, base_dir: Path, default_fixtures: Path | None, where: str
) -> BackendConfig:
    if not isinstance(section, dict):
        raise ConfigError(f"{where} must be a mapping")
    backend = str(section.get("backend", "")).lower()
    if backend not in ("http", "mock"):
        raise ConfigError(f"{where}.backend must be 'http' or 'mock'")
    model_id = section.get("model_id")
    if not model_id:
        raise ConfigError(f"{where}.model_id is required")
    fixtures = section.get("fixtures_dir")
    fixtures_dir = _resolve(base_dir, fixtures) if fixtures else default_fixtures
    if backend == "mock" and fixtures_dir is None:
        raise ConfigError(f"{where}: mock backend requires fixtures_dir")
    if backend == "http" and not section.get("base_url"):
        raise ConfigError(f"{where}: http backend requires base_url")
    try:
        temperature = float(section.get("temperature", 0.0))
        max_tokens = int(section.get("max_output_tokens", 4096))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: invalid generation parameters: {exc}") from exc
    return BackendConfig(
        backend=backend,
        model_id=str(model_id),
        base_url=str(section.get("base_url", "")),
        api_key_env=section.get("api_key_env"),
        fixtures_dir=fixtures_dir,
        temperature=temperature,
        max_output_tokens=max_tokens,
    )


def _resolve(base_dir: Path, value) -> Path:
    path = Path(str(value))
    return path if path.is_absolute() else (base_dir / path).resolve()


def load_config(path: Path | str) -> AppConfig:
    """Load and validate the run configuration.

    Relative template/fixture paths are resolved against the config file's
    own directory so a seeded working directory is self-contained.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config document must be a mapping")
    base_dir = path.parent.resolve()

    mode_text = str(data.get("mode", "collaborative")).lower()
    try:
        mode = RunMode(mode_text)
    except ValueError as exc:
        raise ConfigError(f"unknown mode {mode_text!r}") from exc
    try:
        rounds = int(data.get("rounds", 3))
    except (TypeError, ValueError) as exc:
        raise ConfigError("rounds must be an integer") from exc
    if rounds < 1:
        raise ConfigError("rounds must be >= 1")

    fixtures = data.get("fixtures_dir")
    default_fixtures = _resolve(base_dir, fixtures) if fixtures else None
    templates = data.get("templates_dir")
    templates_dir = _resolve(base_dir, templates) if templates else None

    if "generation" not in data:
        raise ConfigError("missing 'generation' section")
    generation = _backend_config(data["generation"], base_dir, default_fixtures, "generation")
    judge = None
    if data.get("judge"):
        judge = _backend_config(data["judge"], base_dir, default_fixtures, "judge")

    compilation = data.get("compilation") or {}
    if not isinstance(compilation, dict):
        raise ConfigError("'compilation' must be a mapping")
    comp_mode_text = str(compilation.get("mode", "internal")).lower()
    try:
        compilation_mode = CompileMode(comp_mode_text)
    except ValueError as exc:
        raise ConfigError(f"unknown compilation mode {comp_mode_text!r}") from exc
    runner_path = compilation.get("runner_path")
    if compilation_mode is CompileMode.OFFICIAL and not runner_path:
        raise ConfigError("official compilation mode requires compilation.runner_path")

    weights_section = (data.get("weights") or {}).get("severity") or {}
    if not isinstance(weights_section, dict):
        raise ConfigError("weights.severity must be a mapping")
    try:
        severity_weights = {str(k).lower(): float(v) for k, v in weights_section.items()}
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid severity weights: {exc}") from exc

    try:
        max_attempts = int(data.get("max_validation_attempts", 3))
    except (TypeError, ValueError) as exc:
        raise ConfigError("max_validation_attempts must be an integer") from exc

    return AppConfig(
        generation=generation,
        judge=judge,
        mode=mode,
        rounds=rounds,
        parallel_l3=bool(data.get("parallel_l3", False)),
        l3_skip_datastores=bool(data.get("l3_skip_datastores", True)),
        max_validation_attempts=max_attempts,
        compilation_mode=compilation_mode,
        runner_path=str(runner_path) if runner_path else None,
        severity_weights=severity_weights,
        templates_dir=templates_dir,
        fixtures_dir=default_fixtures,
    )


def build_gateway(backend_cfg: BackendConfig, max_inflight: int = 4) -> Gateway:
    if backend_cfg.backend == "mock":
        backend = MockBackend(fixtures_dir=backend_cfg.fixtures_dir)
    else:
        backend = HttpBackend(
            base_url=backend_cfg.base_url,
            api_key_env=backend_cfg.api_key_env,
        )
    return Gateway(backend, max_inflight=max_inflight)
