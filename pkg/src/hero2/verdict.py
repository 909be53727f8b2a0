"""Veracity prediction from the claim and its question-answer evidence."""
from __future__ import annotations

import dataclasses
import logging
import re
import time
from typing import Sequence

from .config import PipelineConfig
from .gateway import ChatRequest, EmptyCompletion, Gateway
from .labels import NoLabelFound, VerdictLabel, parse_verdict_label
from .prompts import load_template, render
from .types import Claim, QAPair, VerdictRecord

logger = logging.getLogger(__name__)

FALLBACK_LABEL = VerdictLabel.NOT_ENOUGH_EVIDENCE
RETRY_TOP_K = 2

_VERDICT_MARKER = re.compile(r"verdict\s*[:：]", re.IGNORECASE)


def format_qa_pairs(pairs: Sequence[QAPair]) -> str:
    return "\n".join(
        f"Question {i}: {p.question}\nAnswer {i}: {p.answer}" for i, p in enumerate(pairs, start=1)
    )


def assemble_verdict_prompt(
    claim: Claim, qa_pairs: Sequence[QAPair], config: PipelineConfig, model_name: str = ""
) -> ChatRequest:
    pairs = list(qa_pairs)[: config.top_k_qa_pairs]
    if pairs:
        prompt = render(
            load_template("verdict", config.prompts),
            claim=claim.text,
            qa_pairs=format_qa_pairs(pairs),
        )
    else:
        prompt = render(load_template("verdict_no_evidence", config.prompts), claim=claim.text)
    return ChatRequest.user(prompt, config.profile("verdict"), model_name)


def extract_label(completion: str) -> VerdictLabel:
    """Parse the label, preferring whatever follows the last "Verdict:" marker."""
    markers = list(_VERDICT_MARKER.finditer(completion))
    if markers:
        try:
            return parse_verdict_label(completion[markers[-1].end():])
        except NoLabelFound:
            pass
    return parse_verdict_label(completion)


def predict_verdict(
    claim: Claim, qa_pairs: Sequence[QAPair], chat: Gateway, config: PipelineConfig
) -> VerdictRecord:
    """Ask for a label; if none can be parsed, ask once more with top-k 2.

    A second failure yields ``Not Enough Evidence``. Transport and server
    errors propagate.
    """
    start = time.perf_counter()
    request = assemble_verdict_prompt(claim, qa_pairs, config, chat.descriptor.model)
    used = tuple(qa_pairs[: config.top_k_qa_pairs])
    label = None
    attempts = 0
    for top_k in (request.decoding.top_k, RETRY_TOP_K):
        attempts += 1
        if attempts == 2:
            request = dataclasses.replace(
                request, decoding=dataclasses.replace(request.decoding, top_k=top_k)
            )
        try:
            label = extract_label(chat.chat(request))
            break
        except (NoLabelFound, EmptyCompletion) as exc:
            logger.info("claim %s: no verdict label on attempt %d (%s)", claim.id, attempts, exc)
    if label is None:
        logger.warning("claim %s: verdict unparseable twice, falling back to %s",
                       claim.id, FALLBACK_LABEL)
        label = FALLBACK_LABEL
    return VerdictRecord(claim.id, label, used, attempts, time.perf_counter() - start)
