"""Reading claim/gold files and reading/writing run output records.

Claim and gold files follow the shared-task annotation layout: a JSON list
(or JSON lines) of objects with ``claim``, optional ``label``, optional
``questions`` (each with ``question`` and a list of ``answers``), and an
optional ``claim_id`` that defaults to the record's position.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .labels import NoLabelFound, VerdictLabel, parse_verdict_label
from .qa import qa_from_dict, qa_to_dict
from .types import Claim, QAPair


def _label(value: Any, where: str) -> Optional[VerdictLabel]:
    if value in (None, ""):
        return None
    try:
        return VerdictLabel(value)
    except ValueError:
        pass
    try:
        return parse_verdict_label(str(value))
    except NoLabelFound as exc:
        raise ValueError(f"{where}: unknown label {value!r}") from exc


def _gold_evidence(questions: Any) -> Optional[tuple[tuple[str, str], ...]]:
    if questions is None:
        return None
    pairs = []
    for q in questions:
        question = q.get("question", "")
        for a in q.get("answers") or []:
            answer = str(a.get("answer", "")).strip()
            explanation = str(a.get("boolean_explanation") or "").strip()
            if explanation:
                answer = f"{answer}. {explanation}"
            if answer:
                pairs.append((question, answer))
    return tuple(pairs)


def _read_json_records(path: Path) -> list[dict]:
    text = path.read_text(encoding="utf-8")
    stripped = text.lstrip()
    if stripped.startswith("["):
        data = json.loads(text)
    else:
        data = [json.loads(line) for line in text.splitlines() if line.strip()]
    if not all(isinstance(r, dict) for r in data):
        raise ValueError(f"{path}: every record must be an object")
    return data


def load_claims(path: str | Path) -> list[Claim]:
    path = Path(path)
    claims = []
    for position, record in enumerate(_read_json_records(path)):
        claim_id = str(record.get("claim_id", position))
        where = f"{path} claim {claim_id}"
        if "claim" not in record:
            raise ValueError(f"{where}: missing 'claim'")
        claims.append(
            Claim(
                claim_id,
                str(record["claim"]),
                _label(record.get("label"), where),
                _gold_evidence(record.get("questions")),
            )
        )
    ids = [c.id for c in claims]
    if len(set(ids)) != len(ids):
        raise ValueError(f"{path}: duplicate claim ids")
    return claims


@dataclass(frozen=True)
class RunRecord:
    claim_id: str
    claim: str
    pred_label: VerdictLabel
    evidence: tuple[QAPair, ...] = ()
    attempts: int = 1
    elapsed_seconds: float = 0.0
    over_budget: bool = False
    error: Optional[str] = None
    stage_seconds: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "claim_id": self.claim_id,
            "claim": self.claim,
            "pred_label": self.pred_label.value,
            "evidence": [qa_to_dict(p) for p in self.evidence],
            "attempts": self.attempts,
            "elapsed_seconds": self.elapsed_seconds,
            "over_budget": self.over_budget,
            "error": self.error,
            "stage_seconds": dict(self.stage_seconds),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunRecord":
        claim_id = str(data["claim_id"])
        return cls(
            claim_id,
            data.get("claim", ""),
            _label(data["pred_label"], f"run record {claim_id}"),
            tuple(qa_from_dict(e, claim_id) for e in data.get("evidence") or []),
            int(data.get("attempts", 1)),
            float(data.get("elapsed_seconds", 0.0)),
            bool(data.get("over_budget", False)),
            data.get("error"),
            dict(data.get("stage_seconds") or {}),
        )


def write_run(records: list[RunRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record.to_dict(), ensure_ascii=False) + "\n")


def read_run(path: str | Path) -> list[RunRecord]:
    return [RunRecord.from_dict(r) for r in _read_json_records(Path(path))]
