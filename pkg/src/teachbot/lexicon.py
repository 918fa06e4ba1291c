"""Dictionary matching of slot values in text.

Shared by the offline delexicalizer and the online entity extractor so both
apply the same rule: case-insensitive, leftmost-longest, non-overlapping,
and never inside a larger word.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Iterator


@dataclass(frozen=True)
class Mention:
    slot: str
    surface: str
    start: int

    @property
    def end(self) -> int:
        return self.start + len(self.surface)


class Lexicon:
    """Maps surface values to slot types for span matching."""

    def __init__(self, pairs: Iterable[tuple[str, str]] = ()):
        # later insertions do not override earlier ones: annotation lexicons
        # are built before KB lexicons get merged in
        self._slot_by_value: dict[str, str] = {}
        for value, slot in pairs:
            self.add(value, slot)
        self._pattern: re.Pattern | None = None

    def add(self, value: str, slot: str) -> None:
        key = _norm(value)
        if key and key not in self._slot_by_value:
            self._slot_by_value[key] = slot
            self._pattern = None

    def merge(self, other: "Lexicon") -> None:
        for value, slot in other.items():
            self.add(value, slot)

    def items(self) -> Iterator[tuple[str, str]]:
        return iter(self._slot_by_value.items())

    def __len__(self) -> int:
        return len(self._slot_by_value)

    def __contains__(self, value: str) -> bool:
        return _norm(value) in self._slot_by_value

    def slot_of(self, value: str) -> str | None:
        return self._slot_by_value.get(_norm(value))

    def _compiled(self) -> re.Pattern | None:
        if self._pattern is None and self._slot_by_value:
            # longest alternative first = longest match at each position
            alts = sorted(self._slot_by_value, key=len, reverse=True)
            body = "|".join(re.escape(v) for v in alts)
            self._pattern = re.compile(
                rf"(?<![a-z0-9])(?:{body})(?![a-z0-9])", re.IGNORECASE)
        return self._pattern

    def find_mentions(self, text: str) -> list[Mention]:
        """Leftmost-longest non-overlapping value mentions in `text`."""
        pattern = self._compiled()
        if pattern is None:
            return []
        out = []
        for m in pattern.finditer(text):
            slot = self._slot_by_value[_norm(m.group(0))]
            out.append(Mention(slot=slot, surface=m.group(0), start=m.start()))
        return out


def _norm(value: str) -> str:
    return " ".join(value.lower().split())


def replace_mentions(text: str, mentions: list[Mention]) -> str:
    """Replace each mention span with its `<slot>` placeholder, lowercased."""
    out = []
    pos = 0
    for m in sorted(mentions, key=lambda m: m.start):
        out.append(text[pos:m.start])
        out.append(f"<{m.slot}>")
        pos = m.end
    out.append(text[pos:])
    return "".join(out).lower()
