"""HyDE-FC query expansion, exact dense search and post-retrieval summaries."""
from __future__ import annotations

import dataclasses
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .config import PipelineConfig
from .gateway import ChatRequest, DimensionMismatch, Gateway, GatewayError
from .prompts import load_template, render
from .store import IndexedStore, normalize_rows, summarize_text
from .types import DOCUMENT, SUMMARY, Claim, EvidenceUnit

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ExpandedQuery:
    claim_text: str
    hypothetical_articles: tuple[str, ...]
    query_vector: np.ndarray

    @property
    def dimension(self) -> int:
        return int(self.query_vector.shape[0])


def generate_articles(claim: Claim, chat: Gateway, config: PipelineConfig) -> list[str]:
    """Sample hypothetical fact-checking articles; failed samples are dropped."""
    prompt = render(load_template("hyde", config.prompts), claim=claim.text)
    request = ChatRequest.user(prompt, config.profile("hyde"), chat.descriptor.model)

    def one(_: int) -> Optional[str]:
        try:
            return chat.chat(request)
        except GatewayError as exc:
            logger.warning("HyDE generation failed for claim %s: %s", claim.id, exc)
            return None

    n = config.num_hypothetical_articles
    with ThreadPoolExecutor(max_workers=max(1, min(n, config.stage_parallelism))) as pool:
        return [a for a in pool.map(one, range(n)) if a is not None]


def aggregate_query(
    claim_vector: np.ndarray, article_vectors: Sequence[np.ndarray], include_claim: bool = True
) -> np.ndarray:
    """Re-normalized mean of unit-normalized vectors.

    Without articles this is just the normalized claim vector.
    """
    (claim_unit,) = normalize_rows([claim_vector])
    if not article_vectors:
        return claim_unit
    members = normalize_rows(article_vectors)
    if include_claim:
        members = [claim_unit] + members
    (mean,) = normalize_rows([np.mean(members, axis=0)])
    return mean


def expand_query(
    claim: Claim, chat: Optional[Gateway], embedder: Gateway, config: PipelineConfig
) -> ExpandedQuery:
    articles: list[str] = []
    if config.expansion and config.num_hypothetical_articles and chat is not None:
        articles = generate_articles(claim, chat, config)
        if not articles:
            logger.warning("claim %s: expansion produced nothing, using the claim alone", claim.id)
    vectors = embedder.embed_batch([claim.text] + articles)
    query = aggregate_query(vectors[0], vectors[1:], config.include_claim_in_query)
    return ExpandedQuery(claim.text, tuple(articles), query)


def score_entries(store: IndexedStore, query_vector: np.ndarray) -> np.ndarray:
    if store.dimension != query_vector.shape[0]:
        raise DimensionMismatch(
            f"store dimension {store.dimension} != query dimension {query_vector.shape[0]}"
        )
    # Row-wise products keep identical rows bit-identical, so ties stay ties.
    return (store.vectors.astype(np.float64) * np.asarray(query_vector, dtype=np.float64)).sum(axis=1)


def search(store: IndexedStore, query: ExpandedQuery | np.ndarray, k: int) -> list[EvidenceUnit]:
    """Top-``k`` units by inner product, ties broken by insertion order."""
    if k < 1:
        raise ValueError("k must be at least 1")
    vector = query.query_vector if isinstance(query, ExpandedQuery) else np.asarray(query)
    scores = score_entries(store, vector)
    order = np.argsort(-scores, kind="stable")[:k]
    return [
        dataclasses.replace(store.units[i], retrieval_score=float(scores[i])) for i in order
    ]


def summarize_retrieved(
    units: Sequence[EvidenceUnit],
    chat: Gateway,
    config: PipelineConfig,
    summaries: Optional[Mapping[str, str]] = None,
) -> list[EvidenceUnit]:
    """Replace each unit's text by a one-paragraph summary.

    Whole-document units reuse a summary computed at index time when one
    exists. A unit whose summary fails passes through unchanged.
    """
    summaries = summaries or {}

    def one(unit: EvidenceUnit) -> EvidenceUnit:
        cached = summaries.get(unit.source_url) if unit.segment_kind == DOCUMENT else None
        if cached is None:
            try:
                cached = summarize_text(unit.text[:config.max_document_chars], chat, config)
            except GatewayError as exc:
                logger.warning("summary failed for %s, keeping raw text: %s", unit.source_url, exc)
                return unit
        return dataclasses.replace(unit, segment_kind=SUMMARY, text=cached)

    if not units:
        return []
    with ThreadPoolExecutor(max_workers=config.stage_parallelism) as pool:
        return list(pool.map(one, units))
