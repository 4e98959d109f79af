"""Arabic transcript normalization.

Three modes are supported:

* ``ORTHOGRAPHIC``: the text as written, only whitespace is canonicalized.
* ``NORMALIZED``: Latin letters and special characters removed, Arabic-Indic
  digits transliterated to ASCII, alef variants folded to bare alef.
* ``NORMALIZED_NO_DIACRITICS``: ``NORMALIZED`` plus removal of harakat,
  tanwin, shadda, sukun and superscript alef.

Every mode collapses whitespace runs to one ASCII space and strips the ends,
so whitespace never shows up as a word error.
"""

from __future__ import annotations

import enum
import sys
import unicodedata
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterator

__all__ = [
    "NormalizationMode",
    "NormalizationRules",
    "DEFAULT_RULES",
    "normalize",
    "strip_diacritics",
    "collapse_whitespace",
    "parse_mode",
    "dump_rules",
]


class NormalizationMode(enum.Enum):
    ORTHOGRAPHIC = "ortho"
    NORMALIZED = "norm"
    NORMALIZED_NO_DIACRITICS = "norm-nd"

    def __str__(self) -> str:
        return self.value


def parse_mode(value: str | NormalizationMode) -> NormalizationMode:
    if isinstance(value, NormalizationMode):
        return value
    try:
        return NormalizationMode(value)
    except ValueError:
        pass
    try:
        return NormalizationMode[value.upper()]
    except KeyError:
        raise ValueError(f"unknown normalization mode {value!r}") from None


TATWEEL = "ـ"
BARE_ALEF = "ا"

_DIACRITICS = frozenset(chr(c) for c in range(0x064B, 0x0660)) | {"ٰ"}
_ALEF_VARIANTS = {"آ": BARE_ALEF, "أ": BARE_ALEF, "إ": BARE_ALEF, "ٱ": BARE_ALEF}
_DIGITS = {chr(0x0660 + i): str(i) for i in range(10)}
_DIGITS.update({chr(0x06F0 + i): str(i) for i in range(10)})


def is_latin_letter(ch: str) -> bool:
    return unicodedata.category(ch).startswith("L") and "LATIN" in unicodedata.name(ch, "")


def is_special(ch: str) -> bool:
    if ch == TATWEEL:
        return True
    return unicodedata.category(ch)[0] in "PS"


@dataclass(frozen=True)
class NormalizationRules:
    """The rule table behind :func:`normalize`.

    ``alef_map`` and ``digit_map`` are explicit; Latin letters and special
    characters are described by predicates over Unicode properties.
    """

    diacritics: frozenset[str] = _DIACRITICS
    alef_map: dict[str, str] = field(default_factory=lambda: dict(_ALEF_VARIANTS))
    digit_map: dict[str, str] = field(default_factory=lambda: dict(_DIGITS))
    is_special: Callable[[str], bool] = is_special
    is_latin: Callable[[str], bool] = is_latin_letter

    def __hash__(self) -> int:
        return id(self)

    def iter_table(self) -> Iterator[tuple[int, str]]:
        """Yield ``(codepoint, action)`` for every codepoint touched by a rule."""
        for cp in range(sys.maxunicode + 1):
            if 0xD800 <= cp <= 0xDFFF:
                continue
            ch = chr(cp)
            if ch in self.diacritics:
                yield cp, "strip-diacritic"
            elif ch in self.alef_map:
                yield cp, f"map:{ord(self.alef_map[ch]):04X}"
            elif ch in self.digit_map:
                yield cp, f"map:{ord(self.digit_map[ch]):04X}"
            elif self.is_latin(ch):
                yield cp, "remove-latin"
            elif self.is_special(ch):
                yield cp, "remove-special"


DEFAULT_RULES = NormalizationRules()


def collapse_whitespace(text: str) -> str:
    return " ".join(text.split())


@lru_cache(maxsize=65536)
def _structural(ch: str) -> str:
    # Per-codepoint rewrite for the default rules; '' means delete.
    return _apply(ch, DEFAULT_RULES)


def strip_diacritics(text: str, rules: NormalizationRules = DEFAULT_RULES) -> str:
    """Delete every diacritic codepoint, then re-canonicalize whitespace.

    The whitespace pass only matters when a token consisted of nothing but
    diacritics; otherwise it is the identity on already-normalized text.
    """
    return collapse_whitespace("".join(ch for ch in text if ch not in rules.diacritics))


def normalize(text: str, mode: NormalizationMode | str = NormalizationMode.NORMALIZED_NO_DIACRITICS,
              rules: NormalizationRules = DEFAULT_RULES) -> str:
    mode = parse_mode(mode)
    if mode is NormalizationMode.ORTHOGRAPHIC:
        return collapse_whitespace(text)
    if rules is DEFAULT_RULES:
        out = "".join(map(_structural, text))
    else:
        out = "".join(_apply(ch, rules) for ch in text)
    out = collapse_whitespace(out)
    if mode is NormalizationMode.NORMALIZED_NO_DIACRITICS:
        out = strip_diacritics(out, rules)
    return out


def _apply(ch: str, rules: NormalizationRules) -> str:
    if ch in rules.digit_map:
        return rules.digit_map[ch]
    if ch in rules.alef_map:
        return rules.alef_map[ch]
    if rules.is_latin(ch) or rules.is_special(ch):
        return ""
    return ch


def dump_rules(rules: NormalizationRules = DEFAULT_RULES) -> str:
    """Render the rule table as two-column TSV (hex codepoint, action)."""
    lines = ["codepoint\taction"]
    lines.extend(f"{cp:04X}\t{action}" for cp, action in rules.iter_table())
    return "\n".join(lines) + "\n"
