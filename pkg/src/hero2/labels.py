"""Verdict label set and tolerant parsing of model output into labels."""
from __future__ import annotations

import enum
import re


class NoLabelFound(ValueError):
    """Raised when a completion contains none of the known label phrases."""


class VerdictLabel(str, enum.Enum):
    SUPPORTED = "Supported"
    REFUTED = "Refuted"
    NOT_ENOUGH_EVIDENCE = "Not Enough Evidence"
    CONFLICTING = "Conflicting Evidence/Cherrypicking"

    def __str__(self) -> str:
        return self.value


# Phrases are compared after normalize(); longer phrases win, so the
# negated forms below take precedence over the bare "supported".
LABEL_ALIASES: dict[str, VerdictLabel] = {
    "supported": VerdictLabel.SUPPORTED,
    "supports": VerdictLabel.SUPPORTED,
    "refuted": VerdictLabel.REFUTED,
    "refutes": VerdictLabel.REFUTED,
    "not supported": VerdictLabel.REFUTED,
    "not enough evidence": VerdictLabel.NOT_ENOUGH_EVIDENCE,
    "not enough info": VerdictLabel.NOT_ENOUGH_EVIDENCE,
    "not enough information": VerdictLabel.NOT_ENOUGH_EVIDENCE,
    "insufficient evidence": VerdictLabel.NOT_ENOUGH_EVIDENCE,
    "conflicting evidence cherrypicking": VerdictLabel.CONFLICTING,
    "conflicting evidence cherry picking": VerdictLabel.CONFLICTING,
    "conflicting evidence": VerdictLabel.CONFLICTING,
    "cherrypicking": VerdictLabel.CONFLICTING,
    "cherry picking": VerdictLabel.CONFLICTING,
}

_NON_WORD = re.compile(r"[^0-9a-z]+")


def normalize(text: str) -> str:
    """Case-fold and collapse every run of punctuation/whitespace to one space."""
    return " ".join(_NON_WORD.sub(" ", text.casefold()).split())


_NORMALIZED_ALIASES = sorted(
    ((normalize(alias), label) for alias, label in LABEL_ALIASES.items()),
    key=lambda item: -len(item[0]),
)


def parse_verdict_label(text: str) -> VerdictLabel:
    """Find the label named in ``text``.

    Every alias is located on word boundaries anywhere in the text. The
    longest matching phrase wins; equal lengths resolve to the earliest
    position.
    """
    haystack = f" {normalize(text)} "
    best: tuple[int, int, VerdictLabel] | None = None
    for alias, label in _NORMALIZED_ALIASES:
        pos = haystack.find(f" {alias} ")
        if pos < 0:
            continue
        key = (-len(alias), pos, label)
        if best is None or key[:2] < best[:2]:
            best = key
    if best is None:
        raise NoLabelFound(f"no verdict label in {text[:80]!r}")
    return best[2]


def serialize_label(label: VerdictLabel) -> str:
    return label.value
