"""Value objects shared across the pipeline stages."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from .labels import VerdictLabel

SENTENCE = "sentence"
DOCUMENT = "document"
SUMMARY = "summary"


def chunk_kind(window: int) -> str:
    return f"chunk:{window}"


@dataclass(frozen=True)
class Claim:
    id: str
    text: str
    gold_label: Optional[VerdictLabel] = None
    gold_evidence: Optional[tuple[tuple[str, str], ...]] = None

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise ValueError(f"claim {self.id!r} has empty text")
        if self.gold_label is not None and not isinstance(self.gold_label, VerdictLabel):
            object.__setattr__(self, "gold_label", VerdictLabel(self.gold_label))
        if self.gold_evidence is not None:
            object.__setattr__(
                self, "gold_evidence", tuple((str(q), str(a)) for q, a in self.gold_evidence)
            )


@dataclass(frozen=True)
class EvidenceUnit:
    """A retrievable span of one source document.

    ``sentence_span`` is inclusive on both ends and indexes the source
    document's sentence list.
    """

    claim_id: str
    source_url: str
    segment_kind: str
    text: str
    sentence_span: tuple[int, int]
    retrieval_score: float = 0.0

    def __post_init__(self) -> None:
        start, end = self.sentence_span
        if not 0 <= start <= end:
            raise ValueError(f"invalid sentence span {self.sentence_span}")
        if not math.isfinite(self.retrieval_score):
            raise ValueError("retrieval_score must be finite")
        object.__setattr__(self, "sentence_span", (int(start), int(end)))


@dataclass(frozen=True)
class QAPair:
    question: str
    answer: str
    evidence: EvidenceUnit

    def __post_init__(self) -> None:
        if not self.question.strip() or not self.answer.strip():
            raise ValueError("question and answer must be non-empty")


@dataclass(frozen=True)
class VerdictRecord:
    claim_id: str
    predicted: VerdictLabel
    qa_used: tuple[QAPair, ...] = field(default_factory=tuple)
    attempts: int = 1
    elapsed_seconds: float = 0.0

    def __post_init__(self) -> None:
        if self.attempts not in (1, 2):
            raise ValueError("attempts must be 1 or 2")
        if self.elapsed_seconds < 0:
            raise ValueError("elapsed_seconds must be non-negative")
        object.__setattr__(self, "qa_used", tuple(self.qa_used))


@dataclass(frozen=True)
class SegmentationStrategy:
    """How a source document is cut into evidence units.

    ``window`` only applies to chunking; consecutive chunks overlap by
    exactly one sentence.
    """

    kind: str = DOCUMENT
    window: int = 0

    def __post_init__(self) -> None:
        if self.kind not in (SENTENCE, "chunk", DOCUMENT):
            raise ValueError(f"unknown segmentation kind {self.kind!r}")
        if self.kind == "chunk" and self.window < 2:
            raise ValueError("chunk window must be at least 2 sentences")
        if self.kind != "chunk" and self.window:
            raise ValueError(f"{self.kind} segmentation takes no window")

    @classmethod
    def sentence(cls) -> "SegmentationStrategy":
        return cls(SENTENCE)

    @classmethod
    def chunk(cls, window: int) -> "SegmentationStrategy":
        return cls("chunk", window)

    @classmethod
    def document(cls) -> "SegmentationStrategy":
        return cls(DOCUMENT)

    @classmethod
    def parse(cls, text: str) -> "SegmentationStrategy":
        """Accepts ``sentence``, ``document`` or ``chunk:<window>``."""
        name, _, arg = text.strip().lower().partition(":")
        if name == "chunk":
            if not arg.isdigit():
                raise ValueError(f"chunk strategy needs a window, got {text!r}")
            return cls.chunk(int(arg))
        if arg:
            raise ValueError(f"unexpected argument in {text!r}")
        return cls(name)

    @property
    def segment_kind(self) -> str:
        return chunk_kind(self.window) if self.kind == "chunk" else self.kind

    def __str__(self) -> str:
        return self.segment_kind
