"""Question generation and evidence-to-answer reformulation."""
from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .config import PipelineConfig
from .gateway import ChatRequest, EmptyCompletion, Gateway, GatewayError
from .prompts import load_template, render
from .types import Claim, EvidenceUnit, QAPair

logger = logging.getLogger(__name__)


def _first_line(text: str) -> str:
    for line in text.splitlines():
        if line.strip():
            return line.strip()
    return ""


def generate_question(
    claim: Claim, evidence: EvidenceUnit, chat: Gateway, config: PipelineConfig
) -> str:
    """One verification question for ``evidence``; retried once if blank."""
    if not evidence.text.strip():
        raise ValueError("cannot generate a question from empty evidence")
    prompt = render(load_template("question", config.prompts), claim=claim.text, evidence=evidence.text)
    request = ChatRequest.user(prompt, config.profile("generation"), chat.descriptor.model)
    for attempt in (1, 2):
        try:
            question = _first_line(chat.chat(request))
        except EmptyCompletion:
            question = ""
        if question:
            return question
        logger.info("empty question for %s (attempt %d)", evidence.source_url, attempt)
    raise EmptyCompletion(f"no question produced for {evidence.source_url}")


def reformulate_answer(
    claim: Claim, question: str, evidence: EvidenceUnit, chat: Gateway, config: PipelineConfig
) -> QAPair:
    if not question.strip():
        raise ValueError("question must be non-empty")
    prompt = render(
        load_template("reformulate", config.prompts),
        claim=claim.text,
        question=question,
        evidence=evidence.text,
    )
    request = ChatRequest.user(prompt, config.profile("generation"), chat.descriptor.model)
    try:
        answer = chat.chat(request)
    except EmptyCompletion:
        logger.warning("empty answer for %s, using the evidence text", evidence.source_url)
        answer = evidence.text
    return QAPair(question, answer, evidence)


def qa_for_unit(
    claim: Claim,
    unit: EvidenceUnit,
    question_chat: Gateway,
    answer_chat: Optional[Gateway],
    config: PipelineConfig,
) -> Optional[QAPair]:
    try:
        question = generate_question(claim, unit, question_chat, config)
    except (GatewayError, ValueError) as exc:
        logger.warning("claim %s: skipping evidence %s: %s", claim.id, unit.source_url, exc)
        return None
    if answer_chat is None:
        return QAPair(question, unit.text, unit)
    try:
        return reformulate_answer(claim, question, unit, answer_chat, config)
    except GatewayError as exc:
        logger.warning("claim %s: reformulation failed, using evidence text: %s", claim.id, exc)
        return QAPair(question, unit.text, unit)


def build_qa_set(
    claim: Claim,
    units: Sequence[EvidenceUnit],
    limit: int,
    question_chat: Gateway,
    answer_chat: Optional[Gateway],
    config: PipelineConfig,
) -> list[QAPair]:
    """Question-answer pairs for ``units`` in their given order.

    Units are processed concurrently in waves just large enough to fill the
    remaining slots, so skipped units never consume one. Pass
    ``answer_chat=None`` to keep the raw evidence text as the answer.
    """
    if limit < 1:
        raise ValueError("limit must be at least 1")
    pairs: list[QAPair] = []
    position = 0
    with ThreadPoolExecutor(max_workers=config.stage_parallelism) as pool:
        while len(pairs) < limit and position < len(units):
            wave = units[position:position + limit - len(pairs)]
            position += len(wave)
            results = pool.map(
                lambda u: qa_for_unit(claim, u, question_chat, answer_chat, config), wave
            )
            pairs.extend(p for p in results if p is not None)
    return pairs[:limit]


def qa_to_dict(pair: QAPair) -> dict:
    unit = pair.evidence
    return {
        "question": pair.question,
        "answer": pair.answer,
        "url": unit.source_url,
        "scraped_text": unit.text,
        "segment_kind": unit.segment_kind,
        "sentence_span": list(unit.sentence_span),
        "retrieval_score": unit.retrieval_score,
    }


def qa_from_dict(data: dict, claim_id: str) -> QAPair:
    unit = EvidenceUnit(
        claim_id,
        data.get("url", ""),
        data.get("segment_kind", "document"),
        data.get("scraped_text", ""),
        tuple(data.get("sentence_span", (0, 0))),
        float(data.get("retrieval_score", 0.0)),
    )
    return QAPair(data["question"], data["answer"], unit)


def dump_qa_sets(rows: Iterable[tuple[str, Sequence[QAPair]]], path: str | Path) -> None:
    """Write ``(claim_id, pairs)`` rows as JSON lines for inspection."""
    with open(path, "w", encoding="utf-8") as fh:
        for claim_id, pairs in rows:
            record = {"claim_id": claim_id, "qa_pairs": [qa_to_dict(p) for p in pairs]}
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
