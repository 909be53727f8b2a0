from __future__ import annotations

import json
from pathlib import Path

import pytest
import yaml

from hero2.config import PipelineConfig
from hero2.gateway import Gateway, mock_backend
from hero2.pipeline import Gateways

GOLDEN = Path(__file__).parent / "golden"
FIXTURES = Path(__file__).parent / "fixtures"

# (criterion, status, detail) rows filled in by the acceptance suite
ACCEPTANCE_RESULTS: list[tuple[str, str, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, status, detail in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"{status:<4} {name}: {detail}")

CONNERY_CLAIM = "In a letter to Steve Jobs, Sean Connery refused to appear in an apple commercial."
CONNERY_QUESTION = "Was the letter from Sean Connery to Steve Jobs genuine?"
CONNERY_DOCUMENT = (
    "An image of a purported 1998 letter from actor Sean Connery (famous for his portrayal "
    "of agent James Bond) to Apple CEO Steve Jobs, caustically rebuffing an offer to become "
    "a pitchman for Apple Computers, hit the Internet in June 2011."
)
CONNERY_SUMMARY = (
    "In June 2011, an image of a purported 1998 letter from actor Sean Connery to Apple CEO "
    "Steve Jobs, rejecting an offer to become an Apple pitchman, circulated online. However, "
    "the letter was part of a satirical article published on Scoopertino, a website known for "
    'fabricating news about Apple under the motto "All the News That\'s Fit to Fabricate."'
)
CONNERY_ANSWER = (
    "No, the letter from Sean Connery to Steve Jobs was not genuine. It was part of a "
    "satirical article published on Scoopertino, a website known for fabricating news about Apple."
)


def mock_config(**endpoints) -> PipelineConfig:
    """Config whose every stage is a mock; keyword args replace single stages."""
    defaults = {
        "hyde": mock_backend(default="A hypothetical fact-checking article."),
        "summarize": mock_backend(default="SUMMARY"),
        "question": mock_backend(default="What happened?"),
        "answer": mock_backend(default="It happened."),
        "verdict": mock_backend(default="Verdict: Supported"),
        "judge": mock_backend(default="yes"),
        "embedding": mock_backend(),
    }
    defaults.update(endpoints)
    return PipelineConfig(endpoints=defaults, claim_parallelism=2, stage_parallelism=2)


def gateways_for(config: PipelineConfig) -> Gateways:
    return Gateways.from_config(config)


def write_store(directory: Path, claim_id: str, docs: list[tuple[str, list[str]]]) -> Path:
    path = directory / f"{claim_id}.json"
    with path.open("w", encoding="utf-8") as fh:
        for url, sentences in docs:
            fh.write(json.dumps({"url": url, "url2text": sentences}) + "\n")
    return path


@pytest.fixture
def config() -> PipelineConfig:
    return mock_config()


@pytest.fixture
def gateways(config: PipelineConfig) -> Gateways:
    return gateways_for(config)


def chat_gateway(**kwargs) -> Gateway:
    return Gateway(mock_backend(**kwargs))


# -- small end-to-end corpus --------------------------------------------------

CORPUS_LABELS = ("Supported", "Refuted", "Not Enough Evidence", "Supported", "Refuted")


def corpus_config(n_claims: int = 5, **stage_overrides) -> dict:
    """YAML-ready config: every stage mocked, verdicts keyed by claim token."""
    endpoints = {
        "hyde": {"kind": "mock", "default": "A hypothetical fact-checking article."},
        "summarize": {"kind": "mock", "default": "SUMMARY"},
        "question": {"kind": "mock", "default": "What happened?"},
        "answer": {"kind": "mock", "default": "It happened."},
        "verdict": {
            "kind": "mock",
            "script": {f"CLAIMTOKEN{i}": f"Verdict: {CORPUS_LABELS[i % 5]}" for i in range(n_claims)},
        },
        "judge": {"kind": "mock", "script": {"Atomic facts:": "1. first fact\n2. second fact", "Fact:": "yes"}},
        "embedding": {"kind": "mock", "dimension": 8},
    }
    for stage, block in stage_overrides.items():
        endpoints[stage] = block
    return {"claim_parallelism": 2, "stage_parallelism": 2, "endpoints": endpoints}


def write_corpus(root: Path, n_claims: int = 5, **stage_overrides) -> dict[str, Path]:
    """Claims with gold, one knowledge store per claim, and a mock config."""
    stores = root / "stores"
    stores.mkdir(parents=True, exist_ok=True)
    claims = []
    for i in range(n_claims):
        claims.append({
            "claim_id": f"c{i}",
            "claim": f"CLAIMTOKEN{i} something notable happened in year {2000 + i}.",
            "label": CORPUS_LABELS[i % 5],
            "questions": [{"question": f"Did event {i} happen?", "answers": [{"answer": f"Answer {i}."}]}],
        })
        write_store(stores, f"c{i}", [
            (f"http://site/{i}/{j}", [f"Doc {j} of claim {i}, sentence {s}." for s in range(4)])
            for j in range(3)
        ])
    claims_path = root / "claims.json"
    claims_path.write_text(json.dumps(claims, indent=1), encoding="utf-8")
    config_path = root / "config.yaml"
    config_path.write_text(yaml.safe_dump(corpus_config(n_claims, **stage_overrides)), encoding="utf-8")
    return {"root": root, "stores": stores, "claims": claims_path, "config": config_path}
