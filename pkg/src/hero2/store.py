"""Knowledge-store ingestion, segmentation, indexing and index persistence.

Input layout: one file per claim, named ``<claim_id>.json`` (or
``.jsonl``), holding one JSON object per line::

    {"url": "https://...", "url2text": ["sentence one", "sentence two", ...]}

``sentences`` is accepted in place of ``url2text``. Other keys are ignored.

Index file layout (all integers little-endian, strings are a ``u32`` byte
length followed by UTF-8 bytes)::

    magic        8 bytes  b"HERO2IDX"
    version      u16      currently 1
    dimension    u32
    n_entries    u32
    n_summaries  u32
    strategy     str      "sentence" | "chunk:<w>" | "document"
    claim_id     str
    n_entries x  url str, segment_kind str, text str,
                 span_start u32, span_end u32, score f64,
                 vector dimension x f32
    n_summaries x url str, summary str
"""
from __future__ import annotations

import json
import logging
import math
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .config import PipelineConfig
from .gateway import ChatRequest, Gateway, GatewayError
from .prompts import load_template, render
from .types import DOCUMENT, SENTENCE, EvidenceUnit, SegmentationStrategy

logger = logging.getLogger(__name__)

MAGIC = b"HERO2IDX"
FORMAT_VERSION = 1
STORE_SUFFIXES = (".json", ".jsonl")
INDEX_SUFFIX = ".idx"


class FormatError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None) -> None:
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class EmptyStore(ValueError):
    pass


class VersionMismatch(ValueError):
    pass


@dataclass(frozen=True)
class SourceDocument:
    claim_id: str
    url: str
    sentences: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "sentences", tuple(self.sentences))
        if not self.sentences:
            raise ValueError(f"document {self.url!r} has no sentences")
        if any(not s.strip() for s in self.sentences):
            raise ValueError(f"document {self.url!r} has a blank sentence")

    @property
    def text(self) -> str:
        return " ".join(self.sentences)


def _parse_record(raw: str, claim_id: str, lineno: int) -> SourceDocument:
    try:
        record = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid JSON ({exc.msg})", lineno) from exc
    if not isinstance(record, dict):
        raise FormatError("record is not an object", lineno)
    url = record.get("url")
    sentences = record.get("url2text", record.get("sentences"))
    if not isinstance(url, str):
        raise FormatError("missing string field 'url'", lineno)
    if not isinstance(sentences, list) or not all(isinstance(s, str) for s in sentences):
        raise FormatError("missing sentence list 'url2text'", lineno)
    try:
        return SourceDocument(claim_id, url, tuple(sentences))
    except ValueError as exc:
        raise FormatError(str(exc), lineno) from exc


def ingest(path: str | Path, claim_id: Optional[str] = None) -> list[SourceDocument]:
    """Read one claim's knowledge-store file, in file order."""
    path = Path(path)
    claim_id = claim_id if claim_id is not None else path.stem
    docs = []
    with path.open(encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if raw.strip():
                docs.append(_parse_record(raw, claim_id, lineno))
    if not docs:
        raise EmptyStore(f"{path} holds no documents")
    return docs


def store_files(directory: str | Path) -> list[Path]:
    return sorted(p for p in Path(directory).iterdir() if p.suffix in STORE_SUFFIXES)


def find_store_file(directory: str | Path, claim_id: str) -> Path:
    for suffix in STORE_SUFFIXES:
        path = Path(directory) / f"{claim_id}{suffix}"
        if path.exists():
            return path
    raise FileNotFoundError(f"no knowledge store for claim {claim_id} in {directory}")


# -- segmentation -------------------------------------------------------------


def chunk_spans(n: int, window: int) -> list[tuple[int, int]]:
    """Inclusive spans of ``window`` sentences, each sharing one with the last."""
    spans = []
    start = 0
    while True:
        end = min(start + window - 1, n - 1)
        spans.append((start, end))
        if end == n - 1:
            return spans
        start = end


def segment(doc: SourceDocument, strategy: SegmentationStrategy) -> list[EvidenceUnit]:
    n = len(doc.sentences)
    if strategy.kind == SENTENCE:
        spans = [(i, i) for i in range(n)]
    elif strategy.kind == DOCUMENT:
        spans = [(0, n - 1)]
    else:
        spans = chunk_spans(n, strategy.window)
    kind = strategy.segment_kind
    return [
        EvidenceUnit(doc.claim_id, doc.url, kind, " ".join(doc.sentences[a:b + 1]), (a, b))
        for a, b in spans
    ]


def truncate_text(sentences: Sequence[str], max_sentences: int, max_chars: int) -> str:
    """Join sentences with spaces, keeping at most the first ``max_sentences``
    and cutting to ``max_chars`` characters."""
    kept = list(sentences[:max_sentences])
    if len(kept) < len(sentences):
        logger.debug("truncated document from %d to %d sentences", len(sentences), len(kept))
    return " ".join(kept)[:max_chars]


# -- summarization ------------------------------------------------------------


def summarize_text(text: str, gateway: Gateway, config: PipelineConfig) -> str:
    prompt = render(load_template("summarize", config.prompts), document=text)
    request = ChatRequest.user(
        prompt, config.profile("generation"), gateway.descriptor.model
    )
    return gateway.chat(request)


def summarize_document(doc: SourceDocument, gateway: Gateway, config: PipelineConfig) -> str:
    """One-paragraph summary of ``doc``.

    Documents longer than the configured context budget are cut to their
    leading sentences first. Gateway errors propagate; callers fall back to
    the raw text.
    """
    text = truncate_text(doc.sentences, config.max_document_sentences, config.max_document_chars)
    return summarize_text(text, gateway, config)


# -- index --------------------------------------------------------------------


@dataclass(eq=False)
class IndexedStore:
    claim_id: str
    strategy: SegmentationStrategy
    units: tuple[EvidenceUnit, ...]
    vectors: np.ndarray
    summaries: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.units = tuple(self.units)
        self.vectors = np.ascontiguousarray(self.vectors, dtype=np.float32)
        if self.vectors.ndim != 2 or self.vectors.shape[0] != len(self.units):
            raise ValueError("need exactly one vector per unit")

    @property
    def dimension(self) -> int:
        return int(self.vectors.shape[1])

    @property
    def entries(self) -> list[tuple[EvidenceUnit, np.ndarray]]:
        return list(zip(self.units, self.vectors))

    def __len__(self) -> int:
        return len(self.units)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, IndexedStore):
            return NotImplemented
        return (
            self.claim_id == other.claim_id
            and self.strategy == other.strategy
            and self.units == other.units
            and self.summaries == other.summaries
            and self.vectors.shape == other.vectors.shape
            and np.array_equal(self.vectors, other.vectors)
        )


def normalize_rows(vectors: Iterable[np.ndarray]) -> list[np.ndarray]:
    out = []
    for v in vectors:
        norm = float(np.linalg.norm(v))
        if not math.isfinite(norm) or norm == 0.0:
            raise ValueError("cannot normalize a zero or non-finite vector")
        out.append(np.asarray(v, dtype=np.float64) / norm)
    return out


@dataclass
class BuildResult:
    store: IndexedStore
    failures: dict[str, str] = field(default_factory=dict)


def build_index(
    docs: Sequence[SourceDocument],
    strategy: SegmentationStrategy,
    embedder: Gateway,
    config: PipelineConfig,
    *,
    summarizer: Optional[Gateway] = None,
    summarize: bool = False,
    out_path: str | Path | None = None,
) -> BuildResult:
    """Segment, optionally summarize, and embed every document.

    Documents are processed concurrently; a document whose embedding fails
    is left out and reported in ``failures`` (keyed by URL). A failed
    summary only drops that summary.
    """
    if summarize and summarizer is None:
        raise ValueError("summarize=True needs a summarizer gateway")
    claim_id = docs[0].claim_id if docs else ""

    def work(doc: SourceDocument):
        units = segment(doc, strategy)
        texts = [
            truncate_text(
                doc.sentences[u.sentence_span[0]:u.sentence_span[1] + 1],
                config.max_document_sentences,
                config.max_document_chars,
            )
            for u in units
        ]
        vectors = normalize_rows(embedder.embed_batch(texts))
        summary = None
        if summarize:
            try:
                summary = summarize_document(doc, summarizer, config)
            except GatewayError as exc:
                logger.warning("summary failed for %s: %s", doc.url, exc)
        return units, vectors, summary

    def guarded(doc: SourceDocument):
        try:
            return work(doc)
        except (GatewayError, ValueError) as exc:
            return exc

    with ThreadPoolExecutor(max_workers=config.stage_parallelism) as pool:
        results = list(pool.map(guarded, docs))

    units: list[EvidenceUnit] = []
    vectors: list[np.ndarray] = []
    summaries: dict[str, str] = {}
    failures: dict[str, str] = {}
    for doc, result in zip(docs, results):
        if isinstance(result, Exception):
            failures[doc.url] = f"{type(result).__name__}: {result}"
            logger.warning("indexing failed for %s: %s", doc.url, result)
            continue
        doc_units, doc_vectors, summary = result
        units.extend(doc_units)
        vectors.extend(doc_vectors)
        if summary is not None:
            summaries[doc.url] = summary
    dims = {v.shape[0] for v in vectors}
    if len(dims) > 1:
        raise ValueError(f"documents embedded with differing dimensions {sorted(dims)}")
    dim = dims.pop() if dims else embedder.descriptor.dimension
    matrix = np.vstack(vectors) if vectors else np.zeros((0, dim))
    store = IndexedStore(claim_id, strategy, tuple(units), matrix, summaries)
    if out_path is not None:
        save_index(store, out_path)
    return BuildResult(store, failures)


# -- persistence --------------------------------------------------------------

_HEADER = struct.Struct("<8sHIII")
_U32 = struct.Struct("<I")
_SPAN = struct.Struct("<IId")


def _pack_str(text: str) -> bytes:
    data = text.encode("utf-8")
    return _U32.pack(len(data)) + data


def encode_index(store: IndexedStore) -> bytes:
    parts = [
        _HEADER.pack(MAGIC, FORMAT_VERSION, store.dimension, len(store.units), len(store.summaries)),
        _pack_str(str(store.strategy)),
        _pack_str(store.claim_id),
    ]
    little = store.vectors.astype("<f4", copy=False)
    for unit, vector in zip(store.units, little):
        parts += [
            _pack_str(unit.source_url),
            _pack_str(unit.segment_kind),
            _pack_str(unit.text),
            _SPAN.pack(unit.sentence_span[0], unit.sentence_span[1], unit.retrieval_score),
            vector.tobytes(),
        ]
    for url, summary in store.summaries.items():
        parts += [_pack_str(url), _pack_str(summary)]
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes) -> None:
        self.data = memoryview(data)
        self.pos = 0

    def take(self, n: int) -> memoryview:
        if self.pos + n > len(self.data):
            raise FormatError("index file is truncated")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: struct.Struct) -> tuple:
        return fmt.unpack(self.take(fmt.size))

    def string(self) -> str:
        (length,) = self.unpack(_U32)
        return bytes(self.take(length)).decode("utf-8")


def decode_index(data: bytes) -> IndexedStore:
    reader = _Reader(data)
    magic, version, dim, n_entries, n_summaries = reader.unpack(_HEADER)
    if magic != MAGIC:
        raise FormatError("not an index file (bad magic)")
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"index format version {version}, expected {FORMAT_VERSION}")
    strategy = SegmentationStrategy.parse(reader.string())
    claim_id = reader.string()
    units = []
    vectors = np.zeros((n_entries, dim), dtype=np.float32)
    for i in range(n_entries):
        url, kind, text = reader.string(), reader.string(), reader.string()
        start, end, score = reader.unpack(_SPAN)
        units.append(EvidenceUnit(claim_id, url, kind, text, (start, end), score))
        vectors[i] = np.frombuffer(reader.take(4 * dim), dtype="<f4")
    summaries = {}
    for _ in range(n_summaries):
        url = reader.string()
        summaries[url] = reader.string()
    if reader.pos != len(data):
        raise FormatError("trailing bytes after index records")
    return IndexedStore(claim_id, strategy, tuple(units), vectors, summaries)


def save_index(store: IndexedStore, path: str | Path) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(encode_index(store))
    os.replace(tmp, path)


def load_index(path: str | Path) -> IndexedStore:
    return decode_index(Path(path).read_bytes())


def index_path(directory: str | Path, claim_id: str) -> Path:
    return Path(directory) / f"{claim_id}{INDEX_SUFFIX}"
