"""Command-line driver.

Subcommands: ``build-store``, ``verify``, ``benchmark``, ``score``. Exit
codes: 0 success, 1 partial failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path
from typing import Callable, Optional, Sequence

from .config import ConfigError, PipelineConfig, load_config
from .evaluation import ClaimMismatch, score_records, summarize_reports
from .pipeline import (
    MODES,
    BenchmarkGrid,
    Gateways,
    build_stores,
    mean_runtime,
    run_benchmark,
    verify_claims,
)
from .records import load_claims, read_run, write_run
from .types import SegmentationStrategy

logger = logging.getLogger("hero2")

EXIT_OK, EXIT_PARTIAL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _csv(kind: Callable):
    def parse(text: str):
        try:
            return tuple(kind(part) for part in text.split(",") if part.strip())
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from exc

    return parse


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML pipeline config")
    common.add_argument("--log-level", default="INFO")
    common.add_argument("--parallelism", type=int, help="claims processed concurrently")
    common.add_argument("--stage-parallelism", type=int, help="concurrent calls within a claim")

    parser = argparse.ArgumentParser(prog="hero2", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-store", parents=[common], help="index per-claim knowledge stores")
    p.add_argument("--stores", type=Path, required=True, help="directory of <claim_id>.json files")
    p.add_argument("--out", type=Path, required=True, help="directory for index files")
    p.add_argument("--segmentation", type=SegmentationStrategy.parse)
    p.add_argument("--summarize", action="store_true", help="also summarize documents at index time")

    p = sub.add_parser("verify", parents=[common], help="verify a claim set")
    p.add_argument("--claims", type=Path, required=True)
    p.add_argument("--index-dir", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="run output (JSON lines)")
    p.add_argument("--top-k-documents", type=int)
    p.add_argument("--top-k-qa", type=int)
    p.add_argument("--budget", type=float, help="per-claim budget in seconds")
    p.add_argument("--no-expansion", action="store_true")
    p.add_argument("--no-summarization", action="store_true")
    p.add_argument("--no-reformulation", action="store_true")

    p = sub.add_parser("benchmark", parents=[common], help="retrieval/reformulation ablation grid")
    p.add_argument("--claims", type=Path, required=True)
    p.add_argument("--stores", type=Path, required=True)
    p.add_argument("--strategies", type=_csv(SegmentationStrategy.parse),
                   default=(SegmentationStrategy.document(),))
    p.add_argument("--ks", type=_csv(int), default=(3, 5, 10))
    p.add_argument("--modes", type=_csv(str), default=("retrieval",),
                   help=f"comma-separated subset of {','.join(MODES)}")
    p.add_argument("--out", type=Path, help="write <out>.json and <out>.txt")
    p.add_argument("--no-expansion", action="store_true")

    p = sub.add_parser("score", parents=[common], help="score run output against gold")
    p.add_argument("--run", type=Path, nargs="+", required=True, help="one or more run files")
    p.add_argument("--gold", type=Path, required=True)
    p.add_argument("--threshold", type=float, default=0.5, help="Ev2R recall threshold")
    p.add_argument("--strict", action="store_true", help="require recall > threshold")
    p.add_argument("--out", type=Path, help="write <out>.json and <out>.txt")
    return parser


def resolve_config(args: argparse.Namespace) -> PipelineConfig:
    if args.config is not None and not args.config.exists():
        raise UsageError(f"config file not found: {args.config}")
    config = load_config(args.config)
    changes = {}
    if args.parallelism is not None:
        changes["claim_parallelism"] = args.parallelism
    if args.stage_parallelism is not None:
        changes["stage_parallelism"] = args.stage_parallelism
    overrides = {
        "segmentation": "segmentation",
        "top_k_documents": "top_k_documents",
        "top_k_qa": "top_k_qa_pairs",
        "budget": "per_claim_budget_seconds",
        "threshold": "ev2r_threshold",
    }
    for flag, field_name in overrides.items():
        value = getattr(args, flag, None)
        if value is not None:
            changes[field_name] = value
    if getattr(args, "no_expansion", False):
        changes["expansion"] = False
    if getattr(args, "no_summarization", False):
        changes["summarize_retrieved"] = False
    if getattr(args, "no_reformulation", False):
        changes["reformulate_answers"] = False
    if getattr(args, "strict", False):
        changes["threshold_inclusive"] = False
    return config.replace(**changes) if changes else config


def _require(path: Path, what: str) -> None:
    if not path.exists():
        raise UsageError(f"{what} not found: {path}")


def cmd_build_store(args: argparse.Namespace, config: PipelineConfig, gateways: Gateways) -> int:
    _require(args.stores, "store directory")
    summarize = True if args.summarize else None
    report = build_stores(args.stores, args.out, config, gateways, summarize=summarize)
    print(f"built {len(report.built)} index(es) into {args.out}, {len(report.failed)} failed")
    for claim_id, error in sorted(report.failed.items()):
        print(f"  claim {claim_id}: {error}", file=sys.stderr)
    for claim_id, count in sorted(report.document_failures.items()):
        print(f"  claim {claim_id}: {count} document(s) left out", file=sys.stderr)
    return EXIT_PARTIAL if report.failed else EXIT_OK


def cmd_verify(
    args: argparse.Namespace, config: PipelineConfig, gateways: Gateways, clock: Callable[[], float]
) -> int:
    _require(args.claims, "claims file")
    _require(args.index_dir, "index directory")
    claims = load_claims(args.claims)
    records = verify_claims(claims, args.index_dir, gateways, config, clock)
    write_run(records, args.out)
    failed = [r for r in records if r.error]
    over = [r for r in records if r.over_budget]
    print(f"verified {len(records)} claim(s) -> {args.out}")
    print(f"average runtime per claim (s): {mean_runtime(records):.2f}")
    if over:
        print(f"{len(over)} claim(s) over the {config.per_claim_budget_seconds:g}s budget")
    for record in failed:
        print(f"  claim {record.claim_id}: {record.error}", file=sys.stderr)
    return EXIT_PARTIAL if failed else EXIT_OK


def cmd_benchmark(args: argparse.Namespace, config: PipelineConfig, gateways: Gateways) -> int:
    _require(args.claims, "claims file")
    _require(args.stores, "store directory")
    try:
        grid = BenchmarkGrid(tuple(args.strategies), tuple(args.ks), tuple(args.modes))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    table = run_benchmark(load_claims(args.claims), args.stores, grid, gateways, config)
    text = table.to_text()
    print(text, end="")
    if args.out:
        args.out.with_name(args.out.name + ".txt").write_text(text, encoding="utf-8")
        args.out.with_name(args.out.name + ".json").write_text(
            json.dumps(table.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    return EXIT_OK


def cmd_score(args: argparse.Namespace, config: PipelineConfig, gateways: Gateways) -> int:
    _require(args.gold, "gold file")
    for run in args.run:
        _require(run, "run file")
    if not 0.0 <= args.threshold <= 1.0:
        raise UsageError("--threshold must lie in [0, 1]")
    claims = load_claims(args.gold)
    try:
        reports = [
            score_records(read_run(run), claims, gateways.judge, config, args.threshold)
            for run in args.run
        ]
    except ClaimMismatch as exc:
        print(f"hero2: {exc}", file=sys.stderr)
        return EXIT_PARTIAL
    for run, report in zip(args.run, reports):
        if len(reports) > 1:
            print(f"== {run}")
        print(report.to_text(), end="")
    if len(reports) > 1:
        for name, (mean, std) in summarize_reports(reports).items():
            print(f"{name}: {mean:.3f} ± {std:.3f}")
    if args.out:
        if len(reports) == 1:
            reports[0].write(args.out)
        else:
            for i, report in enumerate(reports):
                report.write(args.out.with_name(f"{args.out.name}.{i}"))
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None, *, clock: Callable[[], float] = time.perf_counter) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        config = resolve_config(args)
    except (UsageError, ConfigError) as exc:
        print(f"hero2: {exc}", file=sys.stderr)
        return EXIT_USAGE
    gateways = Gateways.from_config(config)
    try:
        if args.command == "build-store":
            return cmd_build_store(args, config, gateways)
        if args.command == "verify":
            return cmd_verify(args, config, gateways, clock)
        if args.command == "benchmark":
            return cmd_benchmark(args, config, gateways)
        return cmd_score(args, config, gateways)
    except UsageError as exc:
        print(f"hero2: {exc}", file=sys.stderr)
        return EXIT_USAGE
    finally:
        gateways.close()


if __name__ == "__main__":
    sys.exit(main())
