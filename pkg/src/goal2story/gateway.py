"""Chat-completion and text-embedding backends.

Two implementations share one retry/validation shell: :class:`HttpGateway`
speaks the OpenAI-compatible wire protocol against any base URL, and
:class:`ScriptedGateway` replays canned fixtures for hermetic tests. API
keys are read from the environment variable named by the config, never
from config values.
"""

from __future__ import annotations

import json
import os
import random
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import httpx

from .errors import (
    AuthError,
    InvariantError,
    RequestRejectedError,
    ResponseShapeError,
    ScriptMismatchError,
    TransportError,
)

DEFAULT_API_KEY_ENV = "G2S_API_KEY"


@dataclass(frozen=True)
class BackendConfig:
    base_url: str
    model_name: str
    temperature: float = 0.3
    max_tokens: int = 1024
    timeout: float = 60.0
    max_retries: int = 3
    api_key_source: str = DEFAULT_API_KEY_ENV

    def __post_init__(self):
        if not self.base_url.strip():
            raise InvariantError("BackendConfig.base_url must be non-empty")
        if not self.model_name.strip():
            raise InvariantError("BackendConfig.model_name must be non-empty")
        if not 0.0 <= self.temperature <= 2.0:
            raise InvariantError("BackendConfig.temperature must be in [0, 2]")
        if self.max_tokens <= 0:
            raise InvariantError("BackendConfig.max_tokens must be positive")
        if self.timeout <= 0:
            raise InvariantError("BackendConfig.timeout must be positive")
        if not 0 <= self.max_retries <= 10:
            raise InvariantError("BackendConfig.max_retries must be in [0, 10]")


def scripted_config(**overrides) -> BackendConfig:
    """Config stub for the scripted backend (no network involved)."""
    values = {"base_url": "scripted:", "model_name": "scripted"}
    values.update(overrides)
    return BackendConfig(**values)


@dataclass(frozen=True)
class ChatExchange:
    """One chat request/response pair; response_text is verbatim, untrimmed."""

    system_text: str | None
    user_text: str
    response_text: str
    usage: Mapping[str, int]
    latency: float

    def to_obj(self) -> dict:
        return {
            "system_text": self.system_text,
            "user_text": self.user_text,
            "response_text": self.response_text,
            "usage": dict(self.usage),
            "latency": self.latency,
        }


class Gateway:
    """Retry/validation shell shared by the concrete backends.

    ``complete`` retries only :class:`TransportError` (timeouts, resets,
    5xx) with exponential backoff and jitter, up to ``cfg.max_retries``.
    Auth and shape errors are terminal. The exchange log is append-only.
    """

    def __init__(self, max_inflight: int = 4, backoff_base: float = 0.25,
                 backoff_cap: float = 8.0, sleep=time.sleep, rng: random.Random | None = None):
        self._inflight = threading.Semaphore(max_inflight)
        self._backoff_base = backoff_base
        self._backoff_cap = backoff_cap
        self._sleep = sleep
        self._rng = rng or random.Random()
        self._lock = threading.Lock()
        self._exchanges: list[ChatExchange] = []
        self.completion_calls = 0
        self.embedded_texts = 0

    # subclass hooks ---------------------------------------------------

    def _complete_once(self, cfg: BackendConfig, system: str | None, user: str):
        raise NotImplementedError

    def _embed_once(self, cfg: BackendConfig, texts: list[str]) -> list[list[float]]:
        raise NotImplementedError

    # public API -------------------------------------------------------

    def complete(self, cfg: BackendConfig, system: str | None, user: str) -> ChatExchange:
        if not user.strip():
            raise ValueError("user text must be non-empty")
        with self._inflight:
            attempt = 0
            while True:
                start = time.perf_counter()
                try:
                    text, usage, latency = self._complete_once(cfg, system, user)
                except TransportError:
                    if attempt >= cfg.max_retries:
                        raise
                    self._sleep(self._backoff_delay(attempt))
                    attempt += 1
                    continue
                if latency is None:
                    latency = time.perf_counter() - start
                exchange = ChatExchange(system, user, text, usage, latency)
                with self._lock:
                    self._exchanges.append(exchange)
                    self.completion_calls += 1
                return exchange

    def embed(self, cfg: BackendConfig, texts: Sequence[str]) -> list[list[float]]:
        texts = list(texts)
        if not texts:
            raise ValueError("texts must be non-empty")
        for t in texts:
            if not isinstance(t, str) or not t.strip():
                raise ValueError("every text to embed must be non-empty")
        with self._inflight:
            attempt = 0
            while True:
                try:
                    vectors = self._embed_once(cfg, texts)
                except TransportError:
                    if attempt >= cfg.max_retries:
                        raise
                    self._sleep(self._backoff_delay(attempt))
                    attempt += 1
                    continue
                break
        if len(vectors) != len(texts):
            raise ResponseShapeError(
                f"expected {len(texts)} embeddings, got {len(vectors)}"
            )
        dims = {len(v) for v in vectors}
        if len(dims) != 1:
            raise ResponseShapeError(f"embedding dimensions differ within batch: {sorted(dims)}")
        with self._lock:
            self.embedded_texts += len(texts)
        return [list(map(float, v)) for v in vectors]

    def exchanges(self) -> list[ChatExchange]:
        with self._lock:
            return list(self._exchanges)

    def export_log(self) -> list[dict]:
        """Audit export: every chat exchange, in order, verbatim."""
        return [e.to_obj() for e in self.exchanges()]

    def _backoff_delay(self, attempt: int) -> float:
        if self._backoff_base <= 0:
            return 0.0
        delay = min(self._backoff_cap, self._backoff_base * (2 ** attempt))
        return delay * (0.5 + 0.5 * self._rng.random())


class HttpGateway(Gateway):
    """OpenAI-compatible HTTP backend (chat completions + embeddings)."""

    def __init__(self, transport: httpx.BaseTransport | None = None, **kwargs):
        super().__init__(**kwargs)
        self._client = httpx.Client(transport=transport)

    def close(self):
        self._client.close()

    def _headers(self, cfg: BackendConfig) -> dict:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(cfg.api_key_source, "").strip()
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _post(self, cfg: BackendConfig, endpoint: str, payload: dict) -> dict:
        url = cfg.base_url.rstrip("/") + endpoint
        try:
            resp = self._client.post(url, json=payload, headers=self._headers(cfg),
                                     timeout=cfg.timeout)
        except httpx.TransportError as err:
            raise TransportError(f"{type(err).__name__}: {err}") from err
        if resp.status_code >= 500:
            raise TransportError(f"server error {resp.status_code} from {url}")
        if resp.status_code in (401, 403):
            raise AuthError(f"authentication rejected ({resp.status_code}) by {url}")
        if resp.status_code >= 400:
            raise RequestRejectedError(f"{resp.status_code} from {url}: {resp.text[:200]}")
        try:
            return resp.json()
        except ValueError as err:
            raise ResponseShapeError(f"non-JSON response from {url}") from err

    def _complete_once(self, cfg, system, user):
        messages = []
        if system is not None:
            messages.append({"role": "system", "content": system})
        messages.append({"role": "user", "content": user})
        data = self._post(cfg, "/chat/completions", {
            "model": cfg.model_name,
            "messages": messages,
            "temperature": cfg.temperature,
            "max_tokens": cfg.max_tokens,
        })
        try:
            content = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            content = None
        if not isinstance(content, str):
            raise ResponseShapeError("chat response is missing message content")
        usage = data.get("usage") if isinstance(data.get("usage"), dict) else {}
        return content, usage, None

    def _embed_once(self, cfg, texts):
        data = self._post(cfg, "/embeddings", {"model": cfg.model_name, "input": texts})
        rows = data.get("data")
        if not isinstance(rows, list):
            raise ResponseShapeError("embeddings response is missing 'data'")
        try:
            rows = sorted(rows, key=lambda r: r["index"])
            return [row["embedding"] for row in rows]
        except (KeyError, TypeError) as err:
            raise ResponseShapeError("embeddings response rows are malformed") from err


@dataclass(frozen=True)
class ScriptEntry:
    """One canned response. ``match`` is a substring of the request text;
    ``None`` means next-in-sequence. ``fail`` injects an error instead:
    one of "transport", "auth", "shape"."""

    response: str = ""
    match: str | None = None
    fail: str | None = None


@dataclass(frozen=True)
class ScriptedFixture:
    responses: tuple[ScriptEntry, ...] = ()
    embeddings: Mapping[str, tuple[float, ...]] = field(default_factory=dict)

    @classmethod
    def from_obj(cls, obj: dict) -> "ScriptedFixture":
        entries = []
        for row in obj.get("responses", []):
            entries.append(ScriptEntry(
                response=row.get("response", ""),
                match=row.get("match"),
                fail=row.get("fail"),
            ))
        table = {t: tuple(float(x) for x in v) for t, v in obj.get("embeddings", {}).items()}
        return cls(responses=tuple(entries), embeddings=table)

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedFixture":
        return cls.from_obj(json.loads(Path(path).read_text(encoding="utf-8")))


class ScriptedGateway(Gateway):
    """Deterministic replay backend: zero network activity, identical
    request sequences yield identical responses.

    Matching is serialized: the first unconsumed entry whose ``match``
    substring occurs in the request (or whose ``match`` is None) is
    consumed. A request no entry matches is a test failure.
    """

    def __init__(self, fixture: ScriptedFixture | None = None,
                 script: Sequence[ScriptEntry] | None = None,
                 embeddings: Mapping[str, Sequence[float]] | None = None,
                 **kwargs):
        kwargs.setdefault("backoff_base", 0.0)
        super().__init__(**kwargs)
        if fixture is None:
            fixture = ScriptedFixture(
                responses=tuple(script or ()),
                embeddings={t: tuple(v) for t, v in (embeddings or {}).items()},
            )
        self._fixture = fixture
        self._consumed = [False] * len(fixture.responses)
        self._script_lock = threading.Lock()

    def unconsumed(self) -> list[ScriptEntry]:
        with self._script_lock:
            return [e for e, used in zip(self._fixture.responses, self._consumed) if not used]

    def _take(self, request_text: str) -> ScriptEntry:
        with self._script_lock:
            for idx, entry in enumerate(self._fixture.responses):
                if self._consumed[idx]:
                    continue
                if entry.match is None or entry.match in request_text:
                    self._consumed[idx] = True
                    return entry
        raise ScriptMismatchError(
            "no scripted response matches request: " + request_text[:160].replace("\n", " ")
        )

    def _complete_once(self, cfg, system, user):
        combined = (system + "\n" if system else "") + user
        entry = self._take(combined)
        if entry.fail == "transport":
            raise TransportError("scripted transport failure")
        if entry.fail == "auth":
            raise AuthError("scripted auth failure")
        if entry.fail == "shape":
            raise ResponseShapeError("scripted shape failure")
        usage = {
            "prompt_tokens": len(combined.split()),
            "completion_tokens": len(entry.response.split()),
        }
        usage["total_tokens"] = usage["prompt_tokens"] + usage["completion_tokens"]
        return entry.response, usage, 0.0

    def _embed_once(self, cfg, texts):
        vectors = []
        for text in texts:
            if text not in self._fixture.embeddings:
                raise ScriptMismatchError(f"no scripted embedding for text: {text[:80]!r}")
            vectors.append(list(self._fixture.embeddings[text]))
        return vectors
