"""Pipeline configuration: decoding profiles, backend endpoints, stage knobs.

The config file is YAML. Every key is optional; missing keys take the
defaults below, which match the reference deployment. Example::

    top_k_documents: 10
    segmentation: document          # sentence | chunk:<w> | document
    decoding:
      verdict: {temperature: 0.9, top_p: 0.7, top_k: 1}
    endpoints:
      verdict:
        kind: http_chat
        base_url: http://localhost:8000/v1
        model: Qwen3-32B-AWQ
        auth_env: HERO2_API_KEY
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import yaml

from .types import SegmentationStrategy

HTTP_CHAT = "http_chat"
HTTP_EMBEDDING = "http_embedding"
MOCK = "mock"

CHAT_STAGES = ("hyde", "summarize", "question", "answer", "verdict", "judge")
STAGES = CHAT_STAGES + ("embedding",)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DecodingProfile:
    """Sampling parameters sent verbatim on the wire.

    Fields left as ``None`` are omitted from the request body.
    """

    max_tokens: Optional[int] = None
    temperature: float = 1.0
    top_p: float = 1.0
    top_k: Optional[int] = None
    min_p: Optional[float] = None

    def __post_init__(self) -> None:
        if self.max_tokens is not None and self.max_tokens < 1:
            raise ConfigError("max_tokens must be positive")
        if not (math.isfinite(self.temperature) and self.temperature >= 0):
            raise ConfigError("temperature must be a non-negative number")
        for name in ("top_p", "min_p"):
            value = getattr(self, name)
            if value is not None and not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if self.top_k is not None and self.top_k < 1:
            raise ConfigError("top_k must be at least 1")

    def wire_fields(self) -> dict[str, Any]:
        body: dict[str, Any] = {"temperature": self.temperature, "top_p": self.top_p}
        for name in ("max_tokens", "top_k", "min_p"):
            value = getattr(self, name)
            if value is not None:
                body[name] = value
        return body


HYDE_PROFILE = DecodingProfile(max_tokens=512, temperature=0.7, top_p=1.0)
GENERATION_PROFILE = DecodingProfile(temperature=0.7, top_p=0.8, top_k=20, min_p=0.0)
VERDICT_PROFILE = DecodingProfile(temperature=0.9, top_p=0.7, top_k=1)
JUDGE_PROFILE = DecodingProfile(temperature=0.0, top_p=1.0)


@dataclass(frozen=True)
class BackendDescriptor:
    """Where and how to reach one model server (or an in-process mock).

    For ``kind == "mock"`` the ``script``/``default``/``dimension`` fields
    configure a :class:`hero2.gateway.MockBackend`; ``mock`` may instead hold
    a ready-made instance, which is never serialized.
    """

    kind: str = HTTP_CHAT
    base_url: str = "http://localhost:8000/v1"
    model: str = ""
    auth_env: Optional[str] = None
    timeout_seconds: float = 30.0
    max_retries: int = 2
    chat_path: str = "/chat/completions"
    embed_path: str = "/embeddings"
    batch_size: int = 32
    audit_log: Optional[str] = None
    script: Optional[dict[str, Any]] = None
    default: Optional[str] = None
    dimension: int = 8
    delay_seconds: float = 0.0
    mock: Any = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        if self.kind not in (HTTP_CHAT, HTTP_EMBEDDING, MOCK):
            raise ConfigError(f"unknown backend kind {self.kind!r}")
        if not self.timeout_seconds > 0:
            raise ConfigError("timeout_seconds must be positive")
        if self.max_retries < 0:
            raise ConfigError("max_retries must be non-negative")
        if self.batch_size < 1 or self.dimension < 1:
            raise ConfigError("batch_size and dimension must be positive")

    def to_dict(self) -> dict[str, Any]:
        out = {f.name: getattr(self, f.name) for f in dataclasses.fields(self) if f.name != "mock"}
        if out["script"] is not None:
            out["script"] = dict(out["script"])
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "BackendDescriptor":
        return cls(**_known(cls, data, "endpoint"))


def _default_endpoints() -> dict[str, BackendDescriptor]:
    chat = "http://localhost:8000/v1"
    return {
        "hyde": BackendDescriptor(base_url=chat, model="meta-llama/Llama-3.1-8B-Instruct"),
        "summarize": BackendDescriptor(base_url=chat, model="Qwen/Qwen3-8B"),
        "question": BackendDescriptor(base_url=chat, model="Qwen/Qwen3-8B"),
        "answer": BackendDescriptor(base_url=chat, model="Qwen/Qwen3-8B"),
        "verdict": BackendDescriptor(base_url=chat, model="Qwen3-32B-AWQ", timeout_seconds=45.0),
        "judge": BackendDescriptor(
            base_url=chat, model="meta-llama/Llama-3.3-70B-Instruct", timeout_seconds=60.0
        ),
        "embedding": BackendDescriptor(
            kind=HTTP_EMBEDDING, base_url=chat, model="Alibaba-NLP/gte-base-en-v1.5"
        ),
    }


def _default_decoding() -> dict[str, DecodingProfile]:
    return {
        "hyde": HYDE_PROFILE,
        "generation": GENERATION_PROFILE,
        "verdict": VERDICT_PROFILE,
        "judge": JUDGE_PROFILE,
    }


@dataclass(frozen=True)
class PipelineConfig:
    top_k_documents: int = 10
    top_k_qa_pairs: int = 10
    segmentation: SegmentationStrategy = SegmentationStrategy.document()
    ev2r_threshold: float = 0.5
    threshold_inclusive: bool = True
    per_claim_budget_seconds: float = 60.0
    num_hypothetical_articles: int = 4
    include_claim_in_query: bool = True
    expansion: bool = True
    summarize_retrieved: bool = True
    summarize_at_index: bool = False
    reformulate_answers: bool = True
    max_document_sentences: int = 200
    max_document_chars: int = 24000
    claim_parallelism: Optional[int] = None
    stage_parallelism: int = 4
    decoding: dict[str, DecodingProfile] = field(default_factory=_default_decoding)
    endpoints: dict[str, BackendDescriptor] = field(default_factory=_default_endpoints)
    prompts: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for name in ("top_k_documents", "top_k_qa_pairs", "max_document_sentences",
                     "max_document_chars", "stage_parallelism"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1")
        if self.num_hypothetical_articles < 0:
            raise ConfigError("num_hypothetical_articles must be non-negative")
        if self.claim_parallelism is not None and self.claim_parallelism < 1:
            raise ConfigError("claim_parallelism must be at least 1")
        if not 0.0 <= self.ev2r_threshold <= 1.0:
            raise ConfigError("ev2r_threshold must lie in [0, 1]")
        if not self.per_claim_budget_seconds > 0:
            raise ConfigError("per_claim_budget_seconds must be positive")
        missing = set(_default_decoding()) - set(self.decoding)
        if missing:
            raise ConfigError(f"missing decoding profiles: {sorted(missing)}")
        missing = set(STAGES) - set(self.endpoints)
        if missing:
            raise ConfigError(f"missing endpoints: {sorted(missing)}")

    def profile(self, name: str) -> DecodingProfile:
        return self.decoding[name]

    def endpoint(self, stage: str) -> BackendDescriptor:
        return self.endpoints[stage]

    def replace(self, **changes: Any) -> "PipelineConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if f.name == "segmentation":
                value = str(value)
            elif f.name == "decoding":
                value = {k: dataclasses.asdict(v) for k, v in value.items()}
            elif f.name == "endpoints":
                value = {k: v.to_dict() for k, v in value.items()}
            elif f.name == "prompts":
                value = dict(value)
            out[f.name] = value
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "PipelineConfig":
        data = _known(cls, data or {}, "config")
        if "segmentation" in data:
            data["segmentation"] = SegmentationStrategy.parse(str(data["segmentation"]))
        if "decoding" in data:
            decoding = _default_decoding()
            for name, block in (data["decoding"] or {}).items():
                decoding[name] = DecodingProfile(**_known(DecodingProfile, block, f"decoding.{name}"))
            data["decoding"] = decoding
        if "endpoints" in data:
            endpoints = _default_endpoints()
            for name, block in (data["endpoints"] or {}).items():
                if name not in STAGES:
                    raise ConfigError(f"unknown endpoint stage {name!r}")
                endpoints[name] = BackendDescriptor.from_dict(block or {})
            data["endpoints"] = endpoints
        if "prompts" in data:
            data["prompts"] = {str(k): str(v) for k, v in (data["prompts"] or {}).items()}
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


def _known(cls: type, data: dict[str, Any], where: str) -> dict[str, Any]:
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    return dict(data)


def load_config(path: str | Path | None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return PipelineConfig.from_dict(data or {})


def dump_config(config: PipelineConfig) -> str:
    return yaml.safe_dump(config.to_dict(), sort_keys=False, allow_unicode=True)


def save_config(config: PipelineConfig, path: str | Path) -> None:
    Path(path).write_text(dump_config(config), encoding="utf-8")
