"""Chat-completion backends.

One uniform generate() interface over an OpenAI-style HTTP provider and a
deterministic scripted mock. Requests carry a role tag (narrative generator,
solver, back-translator) with per-role temperature defaults; an optional
sink persists every raw request/response before generate() returns, so paid
output survives any downstream crash.
"""
from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Sequence

import requests


class BackendError(Exception):
    pass


class AuthMissing(BackendError):
    pass


class RetriesExhausted(BackendError):
    pass


class MockScriptExhausted(BackendError):
    pass


class ProviderError(BackendError):
    def __init__(self, status: int, body: str):
        super().__init__(f"provider returned {status}: {body[:200]}")
        self.status = status
        self.body = body

    @property
    def transient(self) -> bool:
        return self.status == 429 or self.status >= 500


class RoleTag(Enum):
    NARRATIVE_GEN = "NarrativeGen"
    SOLVER = "Solver"
    BACK_TRANSLATOR = "BackTranslator"


DEFAULT_TEMPERATURES = {
    RoleTag.NARRATIVE_GEN: 1.0,
    RoleTag.SOLVER: 0.2,
    RoleTag.BACK_TRANSLATOR: 0.0,
}

DEFAULT_MAX_TOKENS = 4096


@dataclass(frozen=True)
class GenerationRequest:
    prompt: str
    role_tag: RoleTag
    temperature: float | None = None
    max_tokens: int = DEFAULT_MAX_TOKENS
    seed: int | None = None
    # Caller-chosen key, handed to the persistence sink with the raw I/O.
    tag: str = ""

    def __post_init__(self):
        if self.temperature is None:
            object.__setattr__(self, "temperature", DEFAULT_TEMPERATURES[self.role_tag])
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature must be in [0, 2], got {self.temperature}")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")


@dataclass(frozen=True)
class GenerationResponse:
    text: str
    token_count: int
    backend_id: str
    latency_ms: int
    truncated: bool


def prompt_fingerprint(prompt: str) -> str:
    return hashlib.sha256(prompt.encode()).hexdigest()[:16]


Sink = Callable[[dict], None]


class ChatBackend(ABC):
    """Shared batch machinery; subclasses implement one blocking generate."""

    backend_id: str = "backend"

    def __init__(self, sink: Sink | None = None):
        self._sink = sink

    @abstractmethod
    def _generate(self, request: GenerationRequest) -> GenerationResponse:
        ...

    def generate(self, request: GenerationRequest) -> GenerationResponse:
        try:
            response = self._generate(request)
        except BackendError as exc:
            self._persist(request, error=exc)
            raise
        self._persist(request, response=response)
        return response

    def _persist(self, request, response=None, error=None):
        if self._sink is None:
            return
        event = {
            "backend_id": self.backend_id,
            "tag": request.tag,
            "request": {
                "prompt": request.prompt,
                "role_tag": request.role_tag.value,
                "temperature": request.temperature,
                "max_tokens": request.max_tokens,
                "seed": request.seed,
            },
        }
        if response is not None:
            event["response"] = {
                "text": response.text,
                "token_count": response.token_count,
                "latency_ms": response.latency_ms,
                "truncated": response.truncated,
            }
        if error is not None:
            event["error"] = {"type": type(error).__name__, "message": str(error)}
        self._sink(event)

    def generate_batch(
        self,
        requests_: Sequence[GenerationRequest],
        max_in_flight: int,
    ) -> list[GenerationResponse | BackendError]:
        """Positionally aligned results; failures occupy their own slot and
        never abort the rest of the batch."""
        if max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        if not requests_:
            return []

        def one(request: GenerationRequest) -> GenerationResponse | BackendError:
            try:
                return self.generate(request)
            except BackendError as exc:
                return exc

        with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
            return list(pool.map(one, requests_))


# ---------------------------------------------------------------------------
# Scripted mock
# ---------------------------------------------------------------------------

class MockBackend(ChatBackend):
    """Deterministic backend driven by a script.

    Responses are keyed by (role_tag, per-role call sequence) so fixtures can
    say "five narratives, then ten solutions" without matching whole prompts;
    an optional fingerprint table overrides specific prompts. Entries are
    either plain text or a dict with text/token_count/truncated, or
    {"error": {"status":..., "body":...}} to script a failure.
    """

    backend_id = "mock"

    def __init__(
        self,
        by_role: dict[str, Sequence] | None = None,
        by_fingerprint: dict[str, object] | None = None,
        sink: Sink | None = None,
    ):
        super().__init__(sink)
        self._by_role = {k: list(v) for k, v in (by_role or {}).items()}
        self._by_fingerprint = dict(by_fingerprint or {})
        self._positions: dict[str, int] = {}
        self._lock = threading.Lock()
        self.call_log: list[dict] = []

    @classmethod
    def from_script_file(cls, path, sink: Sink | None = None) -> "MockBackend":
        with open(path, encoding="utf-8") as handle:
            script = json.load(handle)
        return cls(
            by_role=script.get("by_role", {}),
            by_fingerprint=script.get("by_fingerprint", {}),
            sink=sink,
        )

    def _generate(self, request: GenerationRequest) -> GenerationResponse:
        role = request.role_tag.value
        fingerprint = prompt_fingerprint(request.prompt)
        with self._lock:
            if fingerprint in self._by_fingerprint:
                entry = self._by_fingerprint[fingerprint]
                sequence = -1
            else:
                sequence = self._positions.get(role, 0)
                entries = self._by_role.get(role, [])
                if sequence >= len(entries):
                    raise MockScriptExhausted(f"no scripted response for {role} call #{sequence}")
                self._positions[role] = sequence + 1
                entry = entries[sequence]
            self.call_log.append(
                {"role": role, "sequence": sequence, "fingerprint": fingerprint, "prompt": request.prompt}
            )
        if isinstance(entry, str):
            entry = {"text": entry}
        if "error" in entry:
            raise ProviderError(entry["error"].get("status", 500), entry["error"].get("body", "scripted failure"))
        text = entry["text"]
        return GenerationResponse(
            text=text,
            token_count=entry.get("token_count", len(text.split())),
            backend_id=self.backend_id,
            latency_ms=0,
            truncated=entry.get("truncated", False),
        )


# ---------------------------------------------------------------------------
# HTTP provider
# ---------------------------------------------------------------------------

class _TokenBucket:
    """requests-per-minute pacing; acquire() blocks until a token is free."""

    def __init__(self, per_minute: int):
        self._interval = 60.0 / per_minute
        self._lock = threading.Lock()
        self._next_free = time.monotonic()

    def acquire(self):
        with self._lock:
            now = time.monotonic()
            wait = self._next_free - now
            self._next_free = max(now, self._next_free) + self._interval
        if wait > 0:
            time.sleep(wait)


@dataclass(frozen=True)
class ProviderConfig:
    backend_id: str
    base_url: str
    model_name: str
    credential_env_var: str
    requests_per_minute: int = 60
    max_tokens: int = DEFAULT_MAX_TOKENS
    max_retries: int = 3
    retry_base_s: float = 1.0
    timeout_s: float = 120.0


class HTTPBackend(ChatBackend):
    """OpenAI-style chat-completions client.

    Transient failures (429, 5xx, connection errors) are retried with
    exponential backoff up to the configured cap; other 4xx errors are raised
    immediately and never retried. Credentials come from the environment
    only, checked before any network call.
    """

    def __init__(self, config: ProviderConfig, sink: Sink | None = None, post=requests.post):
        super().__init__(sink)
        self.config = config
        self.backend_id = config.backend_id
        self._bucket = _TokenBucket(config.requests_per_minute)
        self._post = post

    def _generate(self, request: GenerationRequest) -> GenerationResponse:
        credential = os.environ.get(self.config.credential_env_var)
        if not credential:
            raise AuthMissing(f"environment variable {self.config.credential_env_var} is not set")
        body = {
            "model": self.config.model_name,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "max_tokens": min(request.max_tokens, self.config.max_tokens),
        }
        if request.seed is not None:
            body["seed"] = request.seed

        last_error: BackendError | None = None
        for attempt in range(self.config.max_retries + 1):
            if attempt > 0:
                time.sleep(self.config.retry_base_s * 2 ** (attempt - 1))
            self._bucket.acquire()
            started = time.monotonic()
            try:
                http = self._post(
                    f"{self.config.base_url.rstrip('/')}/chat/completions",
                    json=body,
                    headers={"Authorization": f"Bearer {credential}"},
                    timeout=self.config.timeout_s,
                )
            except requests.RequestException as exc:
                last_error = ProviderError(599, f"connection failure: {exc}")
                continue
            if http.status_code != 200:
                error = ProviderError(http.status_code, http.text)
                if not error.transient:
                    raise error
                last_error = error
                continue
            payload = http.json()
            choice = payload["choices"][0]
            usage = payload.get("usage", {})
            return GenerationResponse(
                text=choice["message"]["content"],
                token_count=usage.get("completion_tokens", 0),
                backend_id=self.backend_id,
                latency_ms=int((time.monotonic() - started) * 1000),
                truncated=choice.get("finish_reason") == "length",
            )
        raise RetriesExhausted(f"gave up after {self.config.max_retries + 1} attempts: {last_error}")
