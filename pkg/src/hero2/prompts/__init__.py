"""Prompt templates with ``{name}`` placeholders.

Defaults ship next to this module; a config's ``prompts`` mapping may point
any template name at a replacement file.
"""
from __future__ import annotations

import re
from functools import lru_cache
from pathlib import Path
from typing import Mapping, Optional

TEMPLATE_NAMES = (
    "hyde",
    "summarize",
    "question",
    "reformulate",
    "verdict",
    "verdict_no_evidence",
    "decompose",
    "support",
)

_HERE = Path(__file__).parent
_PLACEHOLDER = re.compile(r"\{([a-z_]+)\}")


@lru_cache(maxsize=None)
def _read(path: str) -> str:
    return Path(path).read_text(encoding="utf-8").rstrip("\n")


def load_template(name: str, overrides: Optional[Mapping[str, str]] = None) -> str:
    if name not in TEMPLATE_NAMES:
        raise KeyError(f"unknown prompt template {name!r}")
    path = (overrides or {}).get(name) or str(_HERE / f"{name}.txt")
    return _read(path)


def render(template: str, **values: str) -> str:
    """Splice values into the template in a single pass.

    Substituted text is never rescanned, so braces inside documents are
    left alone. Unknown placeholders raise ``KeyError``.
    """

    def sub(match: re.Match[str]) -> str:
        key = match.group(1)
        if key not in values:
            raise KeyError(f"no value for placeholder {{{key}}}")
        return values[key]

    return _PLACEHOLDER.sub(sub, template)
