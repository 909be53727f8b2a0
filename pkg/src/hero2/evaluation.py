"""Ev2R-style evidence recall, the thresholded AVeriTeC score, label metrics."""
from __future__ import annotations

import json
import logging
import re
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence

from .config import PipelineConfig
from .gateway import ChatRequest, Gateway, GatewayError
from .labels import VerdictLabel
from .prompts import load_template, render
from .records import RunRecord, load_claims, read_run
from .types import Claim, QAPair

logger = logging.getLogger(__name__)

RUNTIME_HEADER = "Average runtime per claim (s)"

_LIST_ITEM = re.compile(r"^\s*(?:\d+\s*[.):]|[-*•])\s+(.+?)\s*$")


class ClaimMismatch(ValueError):
    pass


@dataclass(frozen=True)
class AtomicFactSet:
    claim_id: str
    facts: tuple[str, ...]
    fallback: bool = False


@dataclass(frozen=True)
class ScoredClaim:
    """Per-claim scores.

    Claims without gold evidence are not evidence-scored: their recall is
    vacuously 1.0 and they are left out of the mean Q+A recall.
    """

    claim_id: str
    qa_recall: float
    label_correct: bool
    passes_threshold: bool
    evidence_scored: bool = True


def parse_fact_list(text: str) -> list[str]:
    facts = []
    for line in text.splitlines():
        match = _LIST_ITEM.match(line)
        if match:
            facts.append(match.group(1))
    return facts


def _gold_text(claim: Claim) -> str:
    return "\n".join(f"Q: {q}\nA: {a}" for q, a in claim.gold_evidence or ())


def decompose_gold(claim: Claim, judge: Gateway, config: PipelineConfig) -> AtomicFactSet:
    """Split the gold evidence into atomic facts with the judge model.

    Output without a recognizable list is retried once; after that every
    gold answer counts as one fact.
    """
    gold = claim.gold_evidence or ()
    if not gold:
        return AtomicFactSet(claim.id, ())
    prompt = render(load_template("decompose", config.prompts), claim=claim.text, evidence=_gold_text(claim))
    request = ChatRequest.user(prompt, config.profile("judge"), judge.descriptor.model)
    for _ in range(2):
        try:
            facts = parse_fact_list(judge.chat(request))
        except GatewayError as exc:
            logger.warning("claim %s: decomposition call failed: %s", claim.id, exc)
            continue
        if facts:
            return AtomicFactSet(claim.id, tuple(facts))
    logger.warning("claim %s: using gold answers as facts", claim.id)
    return AtomicFactSet(claim.id, tuple(a for _, a in gold), fallback=True)


def format_predicted_evidence(pairs: Sequence[QAPair]) -> str:
    return "\n".join(f"Q: {p.question}\nA: {p.answer}" for p in pairs)


def judge_says_yes(text: str) -> Optional[bool]:
    words = re.findall(r"[a-z]+", text.casefold())
    if not words:
        return None
    if words[0] == "yes":
        return True
    if words[0] == "no":
        return False
    return None


def fact_supported(fact: str, evidence: str, judge: Gateway, config: PipelineConfig) -> bool:
    prompt = render(load_template("support", config.prompts), fact=fact, evidence=evidence)
    request = ChatRequest.user(prompt, config.profile("judge"), judge.descriptor.model)
    try:
        verdict = judge_says_yes(judge.chat(request))
    except GatewayError as exc:
        logger.warning("judge failed on a fact, counting it unsupported: %s", exc)
        return False
    if verdict is None:
        logger.warning("judge gave no yes/no for a fact, counting it unsupported")
        return False
    return verdict


def qa_recall(
    facts: AtomicFactSet, predicted_qa: Sequence[QAPair], judge: Gateway, config: PipelineConfig
) -> float:
    """Fraction of gold facts the judge finds supported by the predicted QA."""
    if not facts.facts:
        raise ValueError(f"claim {facts.claim_id} has no facts to recall")
    if not predicted_qa:
        return 0.0
    evidence = format_predicted_evidence(predicted_qa)
    with ThreadPoolExecutor(max_workers=config.stage_parallelism) as pool:
        verdicts = list(pool.map(lambda f: fact_supported(f, evidence, judge, config), facts.facts))
    return sum(verdicts) / len(verdicts)


def passes(recall: float, threshold: float, inclusive: bool = True) -> bool:
    return recall >= threshold if inclusive else recall > threshold


def averitec_score(scored: Sequence[ScoredClaim], threshold: float, inclusive: bool = True) -> float:
    """Share of claims with a correct label and recall meeting ``threshold``."""
    if not scored:
        raise ValueError("cannot score an empty run")
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must lie in [0, 1]")
    hits = sum(1 for c in scored if c.label_correct and passes(c.qa_recall, threshold, inclusive))
    return hits / len(scored)


def label_metrics(
    predictions: Mapping[str, VerdictLabel], gold: Mapping[str, Optional[VerdictLabel]]
) -> tuple[float, float]:
    """Accuracy and macro-F1 over the labels present in gold or predictions."""
    if not predictions:
        raise ValueError("no predictions to score")
    for claim_id in predictions:
        if gold.get(claim_id) is None:
            raise ValueError(f"claim {claim_id} has no gold label")
    pairs = [(gold[cid], pred) for cid, pred in predictions.items()]
    accuracy = sum(g == p for g, p in pairs) / len(pairs)
    present = {g for g, _ in pairs} | {p for _, p in pairs}
    f1s = []
    for label in VerdictLabel:
        if label not in present:
            continue
        tp = sum(g == label and p == label for g, p in pairs)
        fp = sum(g != label and p == label for g, p in pairs)
        fn = sum(g == label and p != label for g, p in pairs)
        denom = 2 * tp + fp + fn
        f1s.append(2 * tp / denom if denom else 0.0)
    return accuracy, sum(f1s) / len(f1s)


@dataclass
class Report:
    threshold: float
    rows: list[ScoredClaim]
    qa_recall_mean: Optional[float]
    averitec: float
    accuracy: float
    macro_f1: float
    mean_runtime: float
    n_claims: int
    n_evidence_scored: int

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "aggregate": {
                "qa_recall_mean": self.qa_recall_mean,
                "averitec_score": self.averitec,
                "accuracy": self.accuracy,
                "macro_f1": self.macro_f1,
                "average_runtime_per_claim_s": self.mean_runtime,
                "n_claims": self.n_claims,
                "n_evidence_scored": self.n_evidence_scored,
            },
            "claims": [asdict(r) for r in self.rows],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_text(self) -> str:
        recall = "n/a" if self.qa_recall_mean is None else f"{self.qa_recall_mean:.3f}"
        lines = [
            f"{'claim_id':<12} {'Q+A recall':>10} {'correct':>8} {'passes':>7}",
        ]
        for r in self.rows:
            shown = f"{r.qa_recall:.3f}" if r.evidence_scored else "-"
            lines.append(f"{r.claim_id:<12} {shown:>10} {str(r.label_correct):>8} {str(r.passes_threshold):>7}")
        lines += [
            "",
            f"Q+A (Ev2R recall)              {recall}",
            f"AVeriTeC score (tau={self.threshold:g})      {self.averitec:.3f}",
            f"Accuracy                       {self.accuracy:.3f}",
            f"Macro-F1                       {self.macro_f1:.3f}",
            f"{RUNTIME_HEADER:<30} {self.mean_runtime:.2f}",
        ]
        return "\n".join(lines) + "\n"

    def write(self, prefix: str | Path) -> tuple[Path, Path]:
        prefix = Path(prefix)
        json_path = prefix.with_name(prefix.name + ".json")
        text_path = prefix.with_name(prefix.name + ".txt")
        json_path.write_text(self.to_json(), encoding="utf-8")
        text_path.write_text(self.to_text(), encoding="utf-8")
        return json_path, text_path


def score_claim(
    claim: Claim, record: RunRecord, judge: Gateway, config: PipelineConfig, threshold: float
) -> ScoredClaim:
    correct = claim.gold_label is not None and record.pred_label == claim.gold_label
    facts = decompose_gold(claim, judge, config)
    if not facts.facts:
        return ScoredClaim(
            claim.id, 1.0, correct, passes(1.0, threshold, config.threshold_inclusive),
            evidence_scored=False,
        )
    recall = qa_recall(facts, record.evidence, judge, config)
    return ScoredClaim(
        claim.id, recall, correct, passes(recall, threshold, config.threshold_inclusive)
    )


def score_records(
    records: Sequence[RunRecord],
    claims: Sequence[Claim],
    judge: Gateway,
    config: PipelineConfig,
    threshold: Optional[float] = None,
) -> Report:
    threshold = config.ev2r_threshold if threshold is None else threshold
    gold = {c.id: c for c in claims}
    by_id = {r.claim_id: r for r in records}
    missing_run = sorted(set(gold) - set(by_id))
    missing_gold = sorted(set(by_id) - set(gold))
    if missing_run or missing_gold:
        raise ClaimMismatch(
            f"claim ids differ: missing from run {missing_run}, missing from gold {missing_gold}"
        )
    ordered = [(gold[cid], by_id[cid]) for cid in gold]
    with ThreadPoolExecutor(max_workers=config.stage_parallelism) as pool:
        rows = list(pool.map(lambda cr: score_claim(*cr, judge, config, threshold), ordered))
    accuracy, macro_f1 = label_metrics(
        {r.claim_id: r.pred_label for _, r in ordered}, {c.id: c.gold_label for c in claims}
    )
    scored = [r.qa_recall for r in rows if r.evidence_scored]
    return Report(
        threshold=threshold,
        rows=rows,
        qa_recall_mean=statistics.fmean(scored) if scored else None,
        averitec=averitec_score(rows, threshold, config.threshold_inclusive),
        accuracy=accuracy,
        macro_f1=macro_f1,
        mean_runtime=statistics.fmean(r.elapsed_seconds for _, r in ordered),
        n_claims=len(rows),
        n_evidence_scored=len(scored),
    )


def score_run(
    run_file: str | Path,
    gold_file: str | Path,
    judge: Gateway,
    config: PipelineConfig,
    threshold: Optional[float] = None,
) -> Report:
    return score_records(read_run(run_file), load_claims(gold_file), judge, config, threshold)


def summarize_reports(reports: Sequence[Report]) -> dict[str, tuple[float, float]]:
    """Mean and sample standard deviation of the headline numbers across runs."""
    out = {}
    for name in ("averitec", "accuracy", "macro_f1", "mean_runtime"):
        values = [getattr(r, name) for r in reports]
        spread = statistics.stdev(values) if len(values) > 1 else 0.0
        out[name] = (statistics.fmean(values), spread)
    return out
