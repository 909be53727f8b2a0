"""Claim verification over per-claim web knowledge stores.

Pipeline: HyDE-FC query expansion, dense document retrieval, document
summarization, question generation with answer reformulation, and verdict
prediction, plus Ev2R-style evidence recall and AVeriTeC scoring.
"""
from .config import DecodingProfile, PipelineConfig, load_config
from .gateway import ChatRequest, Gateway, MockBackend, mock_backend
from .labels import NoLabelFound, VerdictLabel, parse_verdict_label
from .types import Claim, EvidenceUnit, QAPair, SegmentationStrategy, VerdictRecord

__all__ = [
    "ChatRequest",
    "Claim",
    "DecodingProfile",
    "EvidenceUnit",
    "Gateway",
    "MockBackend",
    "NoLabelFound",
    "PipelineConfig",
    "QAPair",
    "SegmentationStrategy",
    "VerdictLabel",
    "VerdictRecord",
    "load_config",
    "mock_backend",
    "parse_verdict_label",
]
