"""Automatic error flags for transcripts and per-dialect error reports.

Four categories are detected mechanically. ``Empty`` and ``HighCER`` follow
directly from the normalized strings. ``Deterioration`` covers both runaway
repetition and gibberish, recorded with separate evidence strings. ``Incomplete``
marks hypotheses that read like a truncated reference.

The remaining categories of a manual review (translation into the standard
language, hallucination, dialectal inaccuracy) need human judgment. For those
``error_report`` exports a seeded review sample instead of flags.
"""

from __future__ import annotations

import enum
import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import EmptyReference
from .metrics import cer, edit_distance
from .textnorm import NormalizationMode, normalize

ND = NormalizationMode.NORMALIZED_NO_DIACRITICS


class Category(str, enum.Enum):
    EMPTY = "Empty"
    DETERIORATION = "Deterioration"
    INCOMPLETE = "Incomplete"
    HIGH_CER = "HighCER"


CATEGORIES = tuple(Category)
HUMAN_CATEGORIES = ("MSA-Translation", "Hallucination", "Dialectal-Inaccuracy")


@dataclass(frozen=True)
class ErrorFlag:
    category: Category
    evidence: str

    def to_dict(self) -> dict:
        return {"category": self.category.value, "evidence": self.evidence}


@dataclass(frozen=True)
class FlagConfig:
    high_cer: float = 75.0
    max_ngram: int = 5
    min_repeats: int = 4
    min_lexicon_rate: float = 0.2
    length_ratio: float = 0.5
    max_prefix_error: float = 0.3


def find_repetition(tokens: Sequence[str], max_n: int = 5, min_repeats: int = 4) -> tuple[int, int, int] | None:
    """First ``(start, n, repeats)`` where an n-gram repeats back to back at least ``min_repeats`` times."""
    m = len(tokens)
    for start in range(m):
        for n in range(1, max_n + 1):
            if start + n * min_repeats > m:
                break
            gram = tokens[start:start + n]
            reps = 1
            while tokens[start + reps * n:start + (reps + 1) * n] == gram:
                reps += 1
            if reps >= min_repeats:
                return start, n, reps
    return None


def prefix_error(ref: Sequence[str], hyp: Sequence[str]) -> tuple[float, int]:
    """Best per-token error of ``hyp`` against any non-empty prefix of ``ref``.

    The error of prefix ``ref[:k]`` is its edit distance to ``hyp`` divided by
    ``max(k, len(hyp))``. Returns ``(error, k)`` for the best prefix.
    """
    best, best_k = float("inf"), 0
    for k in range(1, len(ref) + 1):
        e = edit_distance(ref[:k], hyp).errors / max(k, len(hyp))
        if e < best:
            best, best_k = e, k
    return best, best_k


def flag_errors(reference: str, hypothesis: str, lexicon: Iterable[str] | None = None,
                config: FlagConfig = FlagConfig()) -> list[ErrorFlag]:
    """Flags for one transcript, in the fixed order Empty, Deterioration, Incomplete, HighCER."""
    ref = normalize(reference, ND)
    if not ref:
        raise EmptyReference("reference is empty after normalization")
    hyp = normalize(hypothesis, ND)
    ref_tok, hyp_tok = ref.split(), hyp.split()
    flags = []
    if not hyp:
        flags.append(ErrorFlag(Category.EMPTY, "empty hypothesis"))
    rep = find_repetition(hyp_tok, config.max_ngram, config.min_repeats)
    if rep is not None:
        start, n, reps = rep
        span = " ".join(hyp_tok[start:start + n])
        flags.append(ErrorFlag(Category.DETERIORATION, f"repetition: '{span}' x{reps} at token {start}"))
    elif lexicon is not None and hyp_tok:
        lex = lexicon if isinstance(lexicon, (set, frozenset)) else set(lexicon)
        rate = sum(t in lex for t in hyp_tok) / len(hyp_tok)
        if rate < config.min_lexicon_rate:
            flags.append(ErrorFlag(Category.DETERIORATION, f"in-lexicon rate {rate:.3f}"))
    if hyp_tok and len(hyp_tok) < config.length_ratio * len(ref_tok):
        err, k = prefix_error(ref_tok, hyp_tok)
        if err < config.max_prefix_error:
            flags.append(ErrorFlag(
                Category.INCOMPLETE,
                f"length ratio {len(hyp_tok)}/{len(ref_tok)}, prefix of {k} tokens, error {err:.3f}"))
    c = cer(ref, hyp, ND)
    if c > config.high_cer:
        flags.append(ErrorFlag(Category.HIGH_CER, f"CER {c:.2f}"))
    return flags


@dataclass
class ScoredRecord:
    id: str
    dialect: str
    reference: str
    hypothesis: str
    model: str = "model"

    @classmethod
    def from_dict(cls, d: Mapping) -> "ScoredRecord":
        return cls(id=str(d["id"]), dialect=str(d.get("dialect") or d.get("dataset") or "unknown"),
                   reference=d["reference"], hypothesis=d["hypothesis"], model=str(d.get("model", "model")))


@dataclass
class ErrorReport:
    table: list[dict] = field(default_factory=list)
    review: list[dict] = field(default_factory=list)

    def to_tsv(self) -> str:
        cols = ["model", "dialect", "category", "count", "utterances", "triaged", "pct_utterances", "pct_triaged"]
        lines = ["\t".join(cols)]
        for row in self.table:
            lines.append("\t".join(
                f"{row[c]:.1f}" if c.startswith("pct") else str(row[c]) for c in cols))
        return "\n".join(lines) + "\n"

    def review_jsonl(self) -> str:
        return "".join(json.dumps(r, ensure_ascii=False, sort_keys=True) + "\n" for r in self.review)


def _flags_for(flags: Mapping, r: ScoredRecord) -> Sequence[ErrorFlag]:
    # keyed by (model, id) when several models share utterance ids, else by id
    return flags.get((r.model, r.id), flags.get(r.id, ()))


def error_report(records: Sequence[ScoredRecord], flags: Mapping[str, Sequence[ErrorFlag]],
                 sample_size: int = 20, seed: int = 0) -> ErrorReport:
    """Per model and dialect flag counts, plus a seeded review sample.

    ``pct_utterances`` is the share of all utterances of the dialect that carry
    the flag. ``pct_triaged`` is the share within the HighCER utterances, the
    population a manual review starts from. One utterance can carry several flags, so a column of percentages can
    sum past 100. The review sample draws ``sample_size`` triaged utterances per
    model and dialect, or all of them when fewer exist.
    """
    groups: dict[tuple[str, str], list[ScoredRecord]] = {}
    for r in sorted(records, key=lambda r: (r.model, r.dialect, r.id)):
        groups.setdefault((r.model, r.dialect), []).append(r)
    report = ErrorReport()
    for gi, ((model, dialect), recs) in enumerate(sorted(groups.items())):
        counts: Counter = Counter()
        in_triage: Counter = Counter()
        triaged = []
        for r in recs:
            cats = {f.category for f in _flags_for(flags, r)}
            counts.update(cats)
            if Category.HIGH_CER in cats:
                triaged.append(r)
                in_triage.update(cats)
        for cat in CATEGORIES:
            n = counts[cat]
            report.table.append({
                "model": model, "dialect": dialect, "category": cat.value, "count": n,
                "utterances": len(recs), "triaged": len(triaged),
                "pct_utterances": 100.0 * n / len(recs) if recs else 0.0,
                "pct_triaged": 100.0 * in_triage[cat] / len(triaged) if triaged else 0.0,
            })
        rng = np.random.default_rng([seed, gi])
        pick = sorted(rng.permutation(len(triaged))[:sample_size].tolist())
        for i in pick:
            r = triaged[i]
            report.review.append({
                "id": r.id, "model": model, "dialect": dialect, "reference": r.reference,
                "hypothesis": r.hypothesis, "flags": [f.to_dict() for f in _flags_for(flags, r)],
                "human": {c: None for c in HUMAN_CATEGORIES},
            })
    return report
