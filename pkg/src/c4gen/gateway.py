"""LLM gateway: OpenAI-compatible HTTP backend, deterministic mock backends.

Every completion goes through a :class:`Gateway`, which enforces an in-flight
limit, records token usage in a thread-safe ledger, and offers a validated
completion loop for schema-guided outputs. Backends are pluggable; the mock
backend replays fixture files so whole runs are reproducible offline.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import requests

from .domain import Level, PipelineError, TokenUsage
from .prompting import AssembledPrompt, TaskKind


class GatewayError(PipelineError):
    """Base class for completion-backend failures."""


class BackendUnavailable(GatewayError):
    def __init__(self, message: str, transient: bool = False):
        super().__init__(message)
        self.transient = transient


class RateLimited(GatewayError):
    def __init__(self, message: str, retry_after: float | None = None):
        super().__init__(message)
        self.retry_after = retry_after


class MalformedResponse(GatewayError):
    """The backend returned a response the gateway cannot use."""


class FixtureMissing(GatewayError):
    """The mock backend has no fixture file for the requested key."""


class ValidationExhausted(GatewayError):
    """All attempts at a validated completion failed the validator."""

    def __init__(self, diagnostics: list[str], last: "Completion | None"):
        super().__init__(
            f"validation failed after {len(diagnostics)} attempt(s): "
            + "; ".join(diagnostics)
        )
        self.diagnostics = list(diagnostics)
        self.last = last


@dataclass(frozen=True)
class GenerationParams:
    model_id: str
    temperature: float = 0.0
    max_output_tokens: int = 4096

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_output_tokens <= 0:
            raise ValueError("max_output_tokens must be positive")


@dataclass(frozen=True)
class Completion:
    text: str
    usage: TokenUsage
    backend_id: str
    latency_ms: int = 0


@dataclass(frozen=True)
class FixtureKey:
    """Addresses one canned completion in a fixtures directory."""

    task: TaskKind
    level: Level
    focus_container: str | None = None
    turn: int | None = None

    def __post_init__(self) -> None:
        if (self.turn is not None) != (self.task is TaskKind.ANALYZE):
            raise ValueError("turn must be present iff task is ANALYZE")

    def relative_path(self) -> str:
        directory = self.level.dirname(self.focus_container)
        if self.task is TaskKind.ANALYZE:
            return f"{directory}/analyze_turn_{self.turn:02d}.md"
        extension = {
            TaskKind.SYNTHESIZE: "md",
            TaskKind.STRUCTURE_YAML: "yaml",
            TaskKind.GENERATE_PLANTUML: "puml",
        }[self.task]
        return f"{directory}/{self.task.value}.{extension}"


def prompt_chars(prompt: AssembledPrompt) -> int:
    return (
        len(prompt.system_text)
        + len(prompt.user_text)
        + len(prompt.schema_guide or "")
    )


def estimate_usage(prompt: AssembledPrompt, text: str) -> TokenUsage:
    """Character/4 heuristic used whenever a backend reports no usage."""
    return TokenUsage(
        input_tokens=prompt_chars(prompt) // 4,
        output_tokens=len(text) // 4,
        estimated=True,
    )


def user_message_text(prompt: AssembledPrompt) -> str:
    if prompt.schema_guide:
        return f"{prompt.user_text}\n\n{prompt.schema_guide}"
    return prompt.user_text


class UsageLedger:
    """Thread-safe accumulator of per-call token usage."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._records: list[TokenUsage] = []

    def record(self, usage: TokenUsage) -> None:
        with self._lock:
            self._records.append(usage)

    def total(self) -> TokenUsage:
        with self._lock:
            total = TokenUsage()
            for usage in self._records:
                total = total + usage
            return total

    @property
    def call_count(self) -> int:
        with self._lock:
            return len(self._records)


class HttpBackend:
    """OpenAI-compatible chat-completions client with retry and backoff.

    Transient failures (HTTP 429, 5xx, connection errors) are retried up to
    ``max_retries`` times with exponential backoff starting at one second;
    a 429 Retry-After header overrides the backoff delay.
    """

    def __init__(
        self,
        base_url: str,
        api_key_env: str | None = None,
        backend_id: str = "http",
        session=None,
        timeout: float = 120.0,
        max_retries: int = 3,
        backoff_base: float = 1.0,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.base_url = base_url.rstrip("/")
        self.api_key_env = api_key_env
        self.backend_id = backend_id
        self.session = session or requests.Session()
        self.timeout = timeout
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        self.sleep = sleep

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.api_key_env:
            import os

            key = os.environ.get(self.api_key_env, "")
            if not key:
                raise BackendUnavailable(
                    f"environment variable {self.api_key_env} is not set"
                )
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _request_once(
        self, prompt: AssembledPrompt, params: GenerationParams
    ) -> Completion:
        payload = {
            "model": params.model_id,
            "messages": [
                {"role": "system", "content": prompt.system_text},
                {"role": "user", "content": user_message_text(prompt)},
            ],
            "temperature": params.temperature,
            "max_tokens": params.max_output_tokens,
        }
        started = time.monotonic()
        try:
            response = self.session.post(
                f"{self.base_url}/chat/completions",
                json=payload,
                headers=self._headers(),
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise BackendUnavailable(f"request failed: {exc}", transient=True) from exc
        latency_ms = int((time.monotonic() - started) * 1000)

        if response.status_code == 429:
            retry_after = None
            header = response.headers.get("Retry-After")
            if header:
                try:
                    retry_after = float(header)
                except ValueError:
                    retry_after = None
            raise RateLimited("backend rate limited the request", retry_after=retry_after)
        if response.status_code >= 500:
            raise BackendUnavailable(
                f"backend error HTTP {response.status_code}", transient=True
            )
        if response.status_code != 200:
            raise BackendUnavailable(
                f"backend rejected the request: HTTP {response.status_code}"
            )

        try:
            body = response.json()
        except ValueError as exc:
            raise MalformedResponse(f"response is not JSON: {exc}") from exc
        try:
            text = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise MalformedResponse(f"unexpected response shape: {exc!r}") from exc
        if not isinstance(text, str) or not text.strip():
            raise MalformedResponse("backend returned empty completion text")

        usage_block = body.get("usage") or {}
        try:
            usage = TokenUsage(
                input_tokens=int(usage_block["prompt_tokens"]),
                output_tokens=int(usage_block["completion_tokens"]),
            )
        except (KeyError, TypeError, ValueError):
            usage = estimate_usage(prompt, text)
        return Completion(
            text=text, usage=usage, backend_id=self.backend_id, latency_ms=latency_ms
        )

    def complete(
        self,
        prompt: AssembledPrompt,
        params: GenerationParams,
        fixture: "FixtureKey | str | None" = None,
    ) -> Completion:
        delay = self.backoff_base
        last_error: GatewayError | None = None
        for attempt in range(self.max_retries):
            try:
                return self._request_once(prompt, params)
            except RateLimited as exc:
                last_error = exc
                wait = exc.retry_after if exc.retry_after is not None else delay
            except BackendUnavailable as exc:
                if not exc.transient:
                    raise
                last_error = exc
                wait = delay
            if attempt + 1 < self.max_retries:
                self.sleep(wait)
                delay *= 2
        assert last_error is not None
        raise last_error


class MockBackend:
    """Replays fixture files; bit-deterministic for identical key sequences.

    ``delay_s`` adds an artificial per-call delay for timing experiments.
    """

    def __init__(
        self,
        fixtures_dir: Path | str,
        backend_id: str = "mock",
        delay_s: float = 0.0,
    ):
        self.fixtures_dir = Path(fixtures_dir)
        self.backend_id = backend_id
        self.delay_s = delay_s

    def complete(
        self,
        prompt: AssembledPrompt,
        params: GenerationParams,
        fixture: FixtureKey | str | None = None,
    ) -> Completion:
        if fixture is None:
            raise FixtureMissing("mock backend requires a fixture key")
        relative = fixture.relative_path() if isinstance(fixture, FixtureKey) else str(fixture)
        path = self.fixtures_dir / relative
        if not path.is_file():
            raise FixtureMissing(f"no fixture at {path}")
        text = path.read_text(encoding="utf-8")
        if not text.strip():
            raise MalformedResponse(f"fixture {relative} is empty")
        if self.delay_s > 0:
            time.sleep(self.delay_s)
        return Completion(
            text=text,
            usage=estimate_usage(prompt, text),
            backend_id=self.backend_id,
            latency_ms=int(self.delay_s * 1000),
        )


class ScriptedBackend:
    """Returns a fixed response sequence; records every call for inspection."""

    def __init__(self, responses: Sequence[str], backend_id: str = "scripted"):
        self._responses = list(responses)
        self._index = 0
        self._lock = threading.Lock()
        self.backend_id = backend_id
        self.calls: list[tuple[AssembledPrompt, FixtureKey | str | None]] = []

    def complete(
        self,
        prompt: AssembledPrompt,
        params: GenerationParams,
        fixture: FixtureKey | str | None = None,
    ) -> Completion:
        with self._lock:
            self.calls.append((prompt, fixture))
            if self._index >= len(self._responses):
                raise BackendUnavailable("scripted backend exhausted its responses")
            text = self._responses[self._index]
            self._index += 1
        if not text.strip():
            raise MalformedResponse("scripted response is empty")
        return Completion(
            text=text, usage=estimate_usage(prompt, text), backend_id=self.backend_id
        )


class Gateway:
    """Uniform completion interface over one backend, with usage accounting."""

    def __init__(self, backend, max_inflight: int = 4):
        self.backend = backend
        self.ledger = UsageLedger()
        self._semaphore = threading.BoundedSemaphore(max_inflight)

    @property
    def backend_id(self) -> str:
        return self.backend.backend_id

    def complete(
        self,
        prompt: AssembledPrompt,
        params: GenerationParams,
        fixture: FixtureKey | str | None = None,
    ) -> Completion:
        with self._semaphore:
            completion = self.backend.complete(prompt, params, fixture=fixture)
        self.ledger.record(completion.usage)
        return completion

    def complete_validated(
        self,
        prompt: AssembledPrompt,
        params: GenerationParams,
        validator: Callable[[str], object],
        max_attempts: int = 3,
        fixture: FixtureKey | str | None = None,
    ) -> Completion:
        """Retry completion until ``validator`` accepts the text.

        The validator signals rejection by raising; its message is kept as the
        attempt diagnostic. On exhaustion all diagnostics are reported.
        """
        if max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        diagnostics: list[str] = []
        completion: Completion | None = None
        for attempt in range(1, max_attempts + 1):
            completion = self.complete(prompt, params, fixture=fixture)
            try:
                validator(completion.text)
            except Exception as exc:  # validator rejections only
                diagnostics.append(f"attempt {attempt}: {exc}")
                continue
            return completion
        raise ValidationExhausted(diagnostics, completion)
