"""End-to-end orchestration: store building, per-claim verification, ablations."""
from __future__ import annotations

import logging
import os
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

from .config import CHAT_STAGES, PipelineConfig
from .evaluation import decompose_gold, qa_recall
from .gateway import Gateway
from .labels import VerdictLabel
from .qa import qa_for_unit, build_qa_set
from .records import RunRecord
from .retrieval import ExpandedQuery, expand_query, search, summarize_retrieved
from .store import (
    IndexedStore,
    build_index,
    find_store_file,
    index_path,
    ingest,
    load_index,
    store_files,
)
from .types import Claim, QAPair, SegmentationStrategy
from .verdict import FALLBACK_LABEL, predict_verdict

logger = logging.getLogger(__name__)

Clock = Callable[[], float]

STAGE_ORDER = ("expansion", "retrieval", "summarization", "qa", "verdict")


@dataclass
class Gateways:
    """One gateway per pipeline stage."""

    hyde: Gateway
    summarize: Gateway
    question: Gateway
    answer: Gateway
    verdict: Gateway
    judge: Gateway
    embedding: Gateway

    @classmethod
    def from_config(cls, config: PipelineConfig, **kwargs) -> "Gateways":
        made = {stage: Gateway(config.endpoint(stage), **kwargs) for stage in CHAT_STAGES}
        made["embedding"] = Gateway(config.endpoint("embedding"), **kwargs)
        return cls(**made)

    def close(self) -> None:
        for gateway in vars(self).values():
            gateway.close()


def default_parallelism(config: PipelineConfig) -> int:
    return config.claim_parallelism or os.cpu_count() or 1


# -- build-store --------------------------------------------------------------


@dataclass
class StoreBuildReport:
    built: list[str] = field(default_factory=list)
    failed: dict[str, str] = field(default_factory=dict)
    document_failures: dict[str, int] = field(default_factory=dict)


def build_stores(
    stores_dir: str | Path,
    out_dir: str | Path,
    config: PipelineConfig,
    gateways: Gateways,
    summarize: Optional[bool] = None,
) -> StoreBuildReport:
    """Index every knowledge-store file in ``stores_dir`` into ``out_dir``.

    A claim whose store cannot be read or indexed is reported and skipped;
    the others are still built.
    """
    summarize = config.summarize_at_index if summarize is None else summarize
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = store_files(stores_dir)

    def one(path: Path) -> tuple[str, Optional[str], int]:
        claim_id = path.stem
        try:
            docs = ingest(path, claim_id)
            result = build_index(
                docs,
                config.segmentation,
                gateways.embedding,
                config,
                summarizer=gateways.summarize,
                summarize=summarize,
                out_path=index_path(out_dir, claim_id),
            )
        except Exception as exc:  # per-claim isolation
            logger.error("claim %s: store build failed: %s", claim_id, exc)
            return claim_id, f"{type(exc).__name__}: {exc}", 0
        logger.info("claim %s: indexed %d units (%d documents failed)",
                    claim_id, len(result.store), len(result.failures))
        return claim_id, None, len(result.failures)

    report = StoreBuildReport()
    with ThreadPoolExecutor(max_workers=default_parallelism(config)) as pool:
        for claim_id, error, doc_failures in pool.map(one, files):
            if error is None:
                report.built.append(claim_id)
            else:
                report.failed[claim_id] = error
            if doc_failures:
                report.document_failures[claim_id] = doc_failures
    return report


# -- verify -------------------------------------------------------------------


class _StageTimer:
    def __init__(self, claim_id: str, clock: Clock) -> None:
        self.claim_id = claim_id
        self.clock = clock
        self.seconds: dict[str, float] = {}

    def run(self, stage: str, fn: Callable, *args, **kwargs):
        logger.info("claim %s: stage %s", self.claim_id, stage)
        start = self.clock()
        try:
            return fn(*args, **kwargs)
        finally:
            self.seconds[stage] = self.clock() - start


def evidence_for_claim(
    claim: Claim,
    store: IndexedStore,
    gateways: Gateways,
    config: PipelineConfig,
    timer: Optional[_StageTimer] = None,
) -> list[QAPair]:
    """Expansion, retrieval, summarization and QA generation for one claim."""
    timer = timer or _StageTimer(claim.id, time.perf_counter)
    query = timer.run("expansion", expand_query, claim, gateways.hyde, gateways.embedding, config)
    units = timer.run("retrieval", search, store, query, config.top_k_documents)
    if config.summarize_retrieved:
        units = timer.run(
            "summarization", summarize_retrieved, units, gateways.summarize, config, store.summaries
        )
    answer_chat = gateways.answer if config.reformulate_answers else None
    return timer.run(
        "qa", build_qa_set, claim, units, config.top_k_qa_pairs, gateways.question, answer_chat, config
    )


def verify_claim(
    claim: Claim,
    store: Optional[IndexedStore],
    gateways: Gateways,
    config: PipelineConfig,
    clock: Clock = time.perf_counter,
    load_error: Optional[str] = None,
) -> RunRecord:
    """Run the full pipeline for one claim; failures yield a fallback record."""
    start = clock()
    timer = _StageTimer(claim.id, clock)
    qa_pairs: list[QAPair] = []
    label, attempts, error = FALLBACK_LABEL, 1, load_error
    if store is not None:
        try:
            qa_pairs = evidence_for_claim(claim, store, gateways, config, timer)
            verdict = timer.run("verdict", predict_verdict, claim, qa_pairs, gateways.verdict, config)
            label, attempts, qa_pairs = verdict.predicted, verdict.attempts, list(verdict.qa_used)
        except Exception as exc:  # per-claim isolation
            logger.error("claim %s: pipeline failed: %s", claim.id, exc)
            error = f"{type(exc).__name__}: {exc}"
    elapsed = clock() - start
    over = elapsed > config.per_claim_budget_seconds
    if over:
        logger.warning("claim %s took %.3fs, over the %.3fs budget",
                       claim.id, elapsed, config.per_claim_budget_seconds)
    return RunRecord(
        claim.id, claim.text, label, tuple(qa_pairs), attempts, elapsed, over, error, timer.seconds
    )


def verify_claims(
    claims: Sequence[Claim],
    index_dir: str | Path,
    gateways: Gateways,
    config: PipelineConfig,
    clock: Clock = time.perf_counter,
) -> list[RunRecord]:
    """Verify claims on a bounded worker pool; records come back in input order."""

    def one(claim: Claim) -> RunRecord:
        try:
            store = load_index(index_path(index_dir, claim.id))
        except Exception as exc:
            logger.error("claim %s: cannot load index: %s", claim.id, exc)
            return verify_claim(claim, None, gateways, config, clock,
                                load_error=f"{type(exc).__name__}: {exc}")
        return verify_claim(claim, store, gateways, config, clock)

    with ThreadPoolExecutor(max_workers=default_parallelism(config)) as pool:
        return list(pool.map(one, claims))


def mean_runtime(records: Sequence[RunRecord]) -> float:
    return statistics.fmean(r.elapsed_seconds for r in records) if records else 0.0


# -- benchmark ----------------------------------------------------------------

MODE_RETRIEVAL = "retrieval"
MODE_SUMMARY = "summarization"
MODE_REFORMULATION = "reformulation"
MODES = (MODE_RETRIEVAL, MODE_SUMMARY, MODE_REFORMULATION)
_MODE_SUFFIX = {
    MODE_RETRIEVAL: "",
    MODE_SUMMARY: " + document summarization",
    MODE_REFORMULATION: " + answer reformulation",
}


@dataclass(frozen=True)
class BenchmarkGrid:
    strategies: tuple[SegmentationStrategy, ...] = (SegmentationStrategy.document(),)
    ks: tuple[int, ...] = (3, 5, 10)
    modes: tuple[str, ...] = (MODE_RETRIEVAL,)

    def __post_init__(self) -> None:
        if not self.strategies or not self.ks or not self.modes:
            raise ValueError("benchmark grid dimensions must be non-empty")
        if any(k < 1 for k in self.ks):
            raise ValueError("k values must be positive")
        unknown = set(self.modes) - set(MODES)
        if unknown:
            raise ValueError(f"unknown benchmark modes {sorted(unknown)}")


@dataclass
class BenchmarkTable:
    ks: tuple[int, ...]
    rows: list[tuple[str, list[Optional[float]]]]

    def to_dict(self) -> dict:
        return {
            "columns": [f"Top-{k}" for k in self.ks],
            "rows": [{"configuration": name, "values": values} for name, values in self.rows],
        }

    def to_text(self) -> str:
        width = max([len("Configuration")] + [len(name) for name, _ in self.rows])
        header = f"{'Configuration':<{width}}" + "".join(f"  {f'Top-{k}':>7}" for k in self.ks)
        lines = [f"{'':<{width}}  Q + A (Ev2R recall)", header]
        for name, values in self.rows:
            cells = "".join(f"  {'n/a' if v is None else f'{v:.3f}':>7}" for v in values)
            lines.append(f"{name:<{width}}{cells}")
        return "\n".join(lines) + "\n"


def _row_name(strategy: SegmentationStrategy, mode: str) -> str:
    if strategy.kind == "chunk":
        base = f"Chunk ({strategy.window} sentences)"
    else:
        base = strategy.kind.capitalize()
    return base + _MODE_SUFFIX[mode]


def run_benchmark(
    claims: Sequence[Claim],
    stores_dir: str | Path,
    grid: BenchmarkGrid,
    gateways: Gateways,
    config: PipelineConfig,
) -> BenchmarkTable:
    """Mean Ev2R recall for every strategy x mode row and top-k column.

    Stores are re-indexed in memory per strategy. The query expansion and the
    gold decomposition are computed once per claim and shared by every cell;
    a cell's QA set is the per-unit QA of its top-k retrieved units.
    """
    scored = [c for c in claims if c.gold_evidence]
    max_k = max(grid.ks)
    docs = {c.id: ingest(find_store_file(stores_dir, c.id), c.id) for c in scored}
    queries: dict[str, ExpandedQuery] = {
        c.id: expand_query(c, gateways.hyde, gateways.embedding, config) for c in scored
    }
    facts = {c.id: decompose_gold(c, gateways.judge, config) for c in scored}

    rows: list[tuple[str, list[Optional[float]]]] = []
    for strategy in grid.strategies:
        cells: dict[str, dict[int, list[float]]] = {m: {k: [] for k in grid.ks} for m in grid.modes}
        for claim in scored:
            store = build_index(docs[claim.id], strategy, gateways.embedding, config).store
            units = search(store, queries[claim.id], max_k)
            summarized = None
            for mode in grid.modes:
                if mode != MODE_RETRIEVAL and summarized is None:
                    summarized = summarize_retrieved(units, gateways.summarize, config)
                mode_units = units if mode == MODE_RETRIEVAL else summarized
                answer_chat = gateways.answer if mode == MODE_REFORMULATION else None
                per_unit = [
                    qa_for_unit(claim, u, gateways.question, answer_chat, config) for u in mode_units
                ]
                for k in grid.ks:
                    pairs = [p for p in per_unit[:k] if p is not None]
                    cells[mode][k].append(qa_recall(facts[claim.id], pairs, gateways.judge, config))
        for mode in grid.modes:
            values = [
                statistics.fmean(cells[mode][k]) if cells[mode][k] else None for k in grid.ks
            ]
            rows.append((_row_name(strategy, mode), values))
    return BenchmarkTable(tuple(grid.ks), rows)


def label_counts(records: Sequence[RunRecord]) -> dict[str, int]:
    counts = {label.value: 0 for label in VerdictLabel}
    for record in records:
        counts[record.pred_label.value] += 1
    return counts
