"""Chat-completion and embedding clients, plus a scripted in-process mock.

All model traffic goes through :class:`Gateway`. HTTP backends speak the
OpenAI-compatible JSON schema served by vLLM and similar servers:
``POST {base_url}/chat/completions`` with a ``messages`` array, and
``POST {base_url}/embeddings`` with an ``input`` array.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import re
import threading
import time
from dataclasses import dataclass
from typing import Any, Callable, Iterable, Optional, Sequence, Union

import httpx
import numpy as np

from .config import MOCK, BackendDescriptor, DecodingProfile

logger = logging.getLogger(__name__)

BACKOFF_BASE_SECONDS = 0.5
BACKOFF_FACTOR = 2.0
BACKOFF_JITTER = 0.2
RETRYABLE_STATUS = frozenset({408, 429, 500, 502, 503, 504})
ROLES = ("system", "user", "assistant")

_THINK_BLOCK = re.compile(r"<think>.*?</think>", re.DOTALL)


class GatewayError(RuntimeError):
    pass


class TransportError(GatewayError):
    """The server could not be reached within the retry allowance."""


class ServerError(GatewayError):
    """The server answered with a non-retryable error."""

    def __init__(self, message: str, status: Optional[int] = None) -> None:
        super().__init__(message)
        self.status = status


class EmptyCompletion(GatewayError):
    pass


class DimensionMismatch(GatewayError):
    pass


@dataclass(frozen=True)
class ChatRequest:
    messages: tuple[tuple[str, str], ...]
    decoding: DecodingProfile
    model_name: str = ""

    def __post_init__(self) -> None:
        if not self.messages:
            raise ValueError("a chat request needs at least one message")
        for role, _ in self.messages:
            if role not in ROLES:
                raise ValueError(f"unknown role {role!r}")
        object.__setattr__(self, "messages", tuple((r, c) for r, c in self.messages))

    @classmethod
    def user(cls, prompt: str, decoding: DecodingProfile, model_name: str = "") -> "ChatRequest":
        return cls((("user", prompt),), decoding, model_name)

    @property
    def prompt(self) -> str:
        return "\n".join(content for _, content in self.messages)

    def body(self) -> dict[str, Any]:
        body: dict[str, Any] = {
            "model": self.model_name,
            "messages": [{"role": r, "content": c} for r, c in self.messages],
        }
        body.update(self.decoding.wire_fields())
        return body


def prompt_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


def hashed_unit_vector(text: str, dimension: int) -> np.ndarray:
    """Pseudo-random unit vector seeded by a stable hash of ``text``."""
    seed = int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "little")
    vec = np.random.default_rng(seed).standard_normal(dimension)
    return vec / np.linalg.norm(vec)


Matcher = Union[str, "re.Pattern[str]", Callable[[ChatRequest], bool]]
Response = Union[str, BaseException, Callable[[ChatRequest], str], Sequence[str]]


class MockBackend:
    """Deterministic stand-in for a model server.

    ``script`` maps matchers to responses and is searched in insertion
    order. A string matcher matches when it occurs in the prompt; a
    compiled regex is searched; a callable receives the request. Responses
    may be a string, an exception instance to raise, a callable of the
    request, or a list of strings handed out in turn (the last repeats).
    Prompts registered with :meth:`register_prompt` match exactly, by hash,
    before the script is consulted.

    Every request is recorded in :attr:`calls`.
    """

    def __init__(
        self,
        script: Optional[dict[Any, Response]] = None,
        default: Optional[str] = None,
        dimension: int = 8,
        delay_seconds: float = 0.0,
        vectors: Optional[dict[str, Sequence[float]]] = None,
    ) -> None:
        self.script = list((script or {}).items())
        self.default = default
        self.dimension = dimension
        self.delay_seconds = delay_seconds
        self.vectors = {k: np.asarray(v, dtype=np.float64) for k, v in (vectors or {}).items()}
        self.exact: dict[str, Response] = {}
        self.calls: list[ChatRequest] = []
        self.embed_calls: list[list[str]] = []
        self._cursor: dict[int, int] = {}
        self._lock = threading.Lock()

    def register_prompt(self, prompt: str, response: Response) -> None:
        self.exact[prompt_hash(prompt)] = response

    def _lookup(self, request: ChatRequest) -> tuple[Any, Response]:
        key = prompt_hash(request.prompt)
        if key in self.exact:
            return key, self.exact[key]
        for index, (matcher, response) in enumerate(self.script):
            if isinstance(matcher, str):
                hit = matcher in request.prompt
            elif isinstance(matcher, re.Pattern):
                hit = matcher.search(request.prompt) is not None
            else:
                hit = bool(matcher(request))
            if hit:
                return index, response
        if self.default is None:
            raise ServerError("mock backend has no response for this prompt", status=404)
        return None, self.default

    def chat(self, request: ChatRequest) -> str:
        if self.delay_seconds:
            time.sleep(self.delay_seconds)
        with self._lock:
            self.calls.append(request)
            key, response = self._lookup(request)
            if isinstance(response, (list, tuple)):
                position = self._cursor.get(key, 0)
                self._cursor[key] = position + 1
                response = response[min(position, len(response) - 1)]
        if isinstance(response, BaseException):
            raise response
        if callable(response):
            return response(request)
        return str(response)

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        if self.delay_seconds:
            time.sleep(self.delay_seconds)
        with self._lock:
            self.embed_calls.append(list(texts))
        return [
            self.vectors[t] if t in self.vectors else hashed_unit_vector(t, self.dimension)
            for t in texts
        ]


def mock_backend(
    script: Optional[dict[Any, Response]] = None,
    default: Optional[str] = None,
    dimension: int = 8,
    delay_seconds: float = 0.0,
    vectors: Optional[dict[str, Sequence[float]]] = None,
    batch_size: int = 32,
) -> BackendDescriptor:
    backend = MockBackend(script, default, dimension, delay_seconds, vectors)
    return BackendDescriptor(
        kind=MOCK, model="mock", dimension=dimension, batch_size=batch_size, mock=backend
    )


class Gateway:
    """Retrying, validating front door to one backend.

    Thread-safe: calls share only the HTTP connection pool and the audit
    log, both internally locked.
    """

    def __init__(
        self,
        descriptor: BackendDescriptor,
        *,
        transport: Optional[httpx.BaseTransport] = None,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        self.descriptor = descriptor
        self._sleep = sleep
        self._transport = transport
        self._client: Optional[httpx.Client] = None
        self._client_lock = threading.Lock()
        self._audit_lock = threading.Lock()
        self.mock: Optional[MockBackend] = None
        if descriptor.kind == MOCK:
            self.mock = descriptor.mock or MockBackend(
                descriptor.script,
                descriptor.default,
                descriptor.dimension,
                descriptor.delay_seconds,
            )

    # -- plumbing -----------------------------------------------------------

    def _http(self) -> httpx.Client:
        with self._client_lock:
            if self._client is None:
                headers = {"Content-Type": "application/json"}
                env = self.descriptor.auth_env
                if env and os.environ.get(env):
                    headers["Authorization"] = f"Bearer {os.environ[env]}"
                self._client = httpx.Client(
                    base_url=self.descriptor.base_url.rstrip("/"),
                    headers=headers,
                    timeout=self.descriptor.timeout_seconds,
                    transport=self._transport,
                )
            return self._client

    def close(self) -> None:
        with self._client_lock:
            if self._client is not None:
                self._client.close()
                self._client = None

    def __enter__(self) -> "Gateway":
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()

    def backoff_delay(self, retry: int) -> float:
        base = BACKOFF_BASE_SECONDS * BACKOFF_FACTOR**retry
        return base * random.uniform(1 - BACKOFF_JITTER, 1 + BACKOFF_JITTER)

    def _with_retries(self, what: str, call: Callable[[], Any]) -> Any:
        attempts = self.descriptor.max_retries + 1
        for attempt in range(attempts):
            try:
                return call()
            except TransportError as exc:
                if attempt + 1 == attempts:
                    raise TransportError(f"{what} failed after {attempts} attempts: {exc}") from exc
                delay = self.backoff_delay(attempt)
                logger.warning("%s attempt %d failed (%s); retrying in %.2fs",
                               what, attempt + 1, exc, delay)
                self._sleep(delay)
        raise AssertionError("unreachable")

    def _post(self, path: str, body: dict[str, Any]) -> dict[str, Any]:
        try:
            response = self._http().post(path, json=body)
        except httpx.TransportError as exc:
            raise TransportError(f"{type(exc).__name__}: {exc}") from exc
        if response.status_code in RETRYABLE_STATUS:
            raise TransportError(f"HTTP {response.status_code}")
        if response.status_code >= 400:
            raise ServerError(
                f"HTTP {response.status_code}: {response.text[:200]}", status=response.status_code
            )
        try:
            return response.json()
        except ValueError as exc:
            raise ServerError(f"invalid JSON from server: {exc}") from exc

    def _audit(self, kind: str, request: Any, response: Any) -> None:
        path = self.descriptor.audit_log
        if not path:
            return
        line = json.dumps({"kind": kind, "request": request, "response": response},
                          ensure_ascii=False, sort_keys=True)
        with self._audit_lock, open(path, "a", encoding="utf-8") as fh:
            fh.write(line + "\n")

    # -- chat ---------------------------------------------------------------

    def chat(self, request: ChatRequest) -> str:
        """Return the assistant's reply with any ``<think>`` block removed."""
        if self.mock is not None:
            raw = self._with_retries("chat", lambda: self.mock.chat(request))
        else:
            body = request.body()
            if not body["model"]:
                body["model"] = self.descriptor.model
            data = self._with_retries("chat", lambda: self._post(self.descriptor.chat_path, body))
            try:
                raw = data["choices"][0]["message"].get("content") or ""
            except (KeyError, IndexError, TypeError, AttributeError) as exc:
                raise ServerError(f"malformed chat response: {data!r:.200}") from exc
        self._audit("chat", request.body(), raw)
        text = _THINK_BLOCK.sub("", raw).strip()
        if not text:
            raise EmptyCompletion("model returned an empty completion")
        return text

    # -- embeddings ---------------------------------------------------------

    def _embed_chunk(self, texts: list[str]) -> list[np.ndarray]:
        if self.mock is not None:
            return self._with_retries("embed", lambda: self.mock.embed(texts))
        body = {"model": self.descriptor.model, "input": texts}
        data = self._with_retries("embed", lambda: self._post(self.descriptor.embed_path, body))
        try:
            rows = sorted(data["data"], key=lambda row: row.get("index", 0))
            vectors = [np.asarray(row["embedding"], dtype=np.float64) for row in rows]
        except (KeyError, TypeError, ValueError) as exc:
            raise ServerError(f"malformed embedding response: {exc}") from exc
        if len(vectors) != len(texts):
            raise ServerError(f"expected {len(texts)} embeddings, got {len(vectors)}")
        self._audit("embed", body, {"count": len(vectors)})
        return vectors

    def embed_batch(self, texts: Iterable[str]) -> list[np.ndarray]:
        """Embed ``texts`` in server-sized batches, preserving order."""
        texts = list(texts)
        if not texts:
            raise ValueError("embed_batch needs at least one text")
        if any(not t.strip() for t in texts):
            raise ValueError("cannot embed an empty text")
        size = self.descriptor.batch_size
        out: list[np.ndarray] = []
        for start in range(0, len(texts), size):
            out.extend(self._embed_chunk(texts[start:start + size]))
        dims = {v.shape for v in out}
        if len(dims) != 1 or out[0].ndim != 1 or out[0].size == 0:
            raise DimensionMismatch(f"inconsistent embedding shapes {sorted(dims)}")
        if not all(np.all(np.isfinite(v)) for v in out):
            raise ServerError("embedding contains non-finite values")
        return out

