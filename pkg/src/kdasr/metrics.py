"""Word and character error rates, plus macro-averaged evaluation reports."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Iterable, Mapping, Sequence

from .errors import EmptyInput, EmptyReference
from .textnorm import NormalizationMode, normalize, parse_mode

__all__ = [
    "EditBreakdown",
    "ScorePair",
    "EvalReport",
    "GROUPS",
    "edit_distance",
    "align",
    "wer",
    "cer",
    "word_breakdown",
    "char_breakdown",
    "score_corpus",
    "aggregate",
]

GROUPS = ("benchmark", "in-house")


@dataclass(frozen=True)
class EditBreakdown:
    substitutions: int = 0
    deletions: int = 0
    insertions: int = 0
    reference_length: int = 0

    @property
    def errors(self) -> int:
        return self.substitutions + self.deletions + self.insertions

    def __add__(self, other: "EditBreakdown") -> "EditBreakdown":
        return EditBreakdown(
            self.substitutions + other.substitutions,
            self.deletions + other.deletions,
            self.insertions + other.insertions,
            self.reference_length + other.reference_length,
        )

    def rate(self) -> float:
        """Error rate in percent; raises when the reference is empty but errors exist."""
        if self.reference_length == 0:
            if self.errors:
                raise EmptyReference("reference is empty but the hypothesis is not")
            return 0.0
        return 100.0 * self.errors / self.reference_length


def _dp(ref: Sequence[Hashable], hyp: Sequence[Hashable]) -> list[list[int]]:
    n, m = len(ref), len(hyp)
    d = [[0] * (m + 1) for _ in range(n + 1)]
    for j in range(m + 1):
        d[0][j] = j
    for i in range(1, n + 1):
        prev, row = d[i - 1], d[i]
        row[0] = i
        r = ref[i - 1]
        for j in range(1, m + 1):
            sub = prev[j - 1] + (r != hyp[j - 1])
            dele = prev[j] + 1
            ins = row[j - 1] + 1
            row[j] = min(sub, dele, ins)
    return d


def align(ref: Sequence[Hashable], hyp: Sequence[Hashable]) -> list[tuple[str, int | None, int | None]]:
    """Minimum-cost alignment as a list of ``(op, ref_index, hyp_index)``.

    ``op`` is one of ``"match"``, ``"sub"``, ``"del"``, ``"ins"``. Among equal-cost
    alignments the backtrace prefers match, then substitution, deletion, insertion.
    """
    d = _dp(ref, hyp)
    i, j = len(ref), len(hyp)
    ops = []
    while i > 0 or j > 0:
        cur = d[i][j]
        if i > 0 and j > 0 and ref[i - 1] == hyp[j - 1] and d[i - 1][j - 1] == cur:
            ops.append(("match", i - 1, j - 1))
            i, j = i - 1, j - 1
        elif i > 0 and j > 0 and d[i - 1][j - 1] + 1 == cur:
            ops.append(("sub", i - 1, j - 1))
            i, j = i - 1, j - 1
        elif i > 0 and d[i - 1][j] + 1 == cur:
            ops.append(("del", i - 1, None))
            i -= 1
        else:
            ops.append(("ins", None, j - 1))
            j -= 1
    ops.reverse()
    return ops


def edit_distance(ref: Sequence[Hashable], hyp: Sequence[Hashable]) -> EditBreakdown:
    counts = {"match": 0, "sub": 0, "del": 0, "ins": 0}
    for op, _, _ in align(ref, hyp):
        counts[op] += 1
    return EditBreakdown(counts["sub"], counts["del"], counts["ins"], len(ref))


def word_breakdown(reference: str, hypothesis: str,
                   mode: NormalizationMode | str = NormalizationMode.NORMALIZED_NO_DIACRITICS) -> EditBreakdown:
    ref = normalize(reference, mode)
    hyp = normalize(hypothesis, mode)
    return edit_distance(ref.split(" ") if ref else [], hyp.split(" ") if hyp else [])


def char_breakdown(reference: str, hypothesis: str,
                   mode: NormalizationMode | str = NormalizationMode.NORMALIZED_NO_DIACRITICS) -> EditBreakdown:
    return edit_distance(normalize(reference, mode), normalize(hypothesis, mode))


def wer(reference: str, hypothesis: str,
        mode: NormalizationMode | str = NormalizationMode.NORMALIZED_NO_DIACRITICS) -> float:
    """Word error rate in percent. Not capped at 100."""
    return word_breakdown(reference, hypothesis, mode).rate()


def cer(reference: str, hypothesis: str,
        mode: NormalizationMode | str = NormalizationMode.NORMALIZED_NO_DIACRITICS) -> float:
    """Character error rate in percent, counting inter-word spaces as characters."""
    return char_breakdown(reference, hypothesis, mode).rate()


@dataclass(frozen=True)
class ScorePair:
    wer: float
    cer: float

    def __iter__(self):
        yield self.wer
        yield self.cer

    def rounded(self, ndigits: int = 1) -> "ScorePair":
        return ScorePair(round(self.wer, ndigits), round(self.cer, ndigits))

    def fmt(self) -> str:
        return f"{self.wer:.1f}/{self.cer:.1f}"


def score_corpus(pairs: Iterable[tuple[str, str, str]],
                 mode: NormalizationMode | str = NormalizationMode.NORMALIZED_NO_DIACRITICS
                 ) -> tuple[ScorePair, list[str]]:
    """Pooled WER/CER over ``(utterance_id, reference, hypothesis)`` triples.

    Errors and reference lengths are summed over utterances in id order before
    dividing. Utterances whose reference normalizes to empty are skipped when
    the hypothesis is empty and excluded (returned in the second element)
    when it is not.
    """
    mode = parse_mode(mode)
    words = EditBreakdown()
    chars = EditBreakdown()
    excluded = []
    for uid, ref, hyp in sorted(pairs, key=lambda t: t[0]):
        w = word_breakdown(ref, hyp, mode)
        if w.reference_length == 0:
            if w.errors:
                excluded.append(uid)
            continue
        words += w
        chars += char_breakdown(ref, hyp, mode)
    if words.reference_length == 0:
        return ScorePair(0.0, 0.0), excluded
    return ScorePair(words.rate(), chars.rate()), excluded


def _mean(pairs: Sequence[ScorePair]) -> ScorePair | None:
    if not pairs:
        return None
    return ScorePair(sum(p.wer for p in pairs) / len(pairs), sum(p.cer for p in pairs) / len(pairs))


@dataclass
class EvalReport:
    """Per-dataset scores for each normalization mode plus macro averages.

    Averages are unweighted means over datasets; a group with no datasets has
    ``None`` for its average.
    """

    per_dataset: dict[str, dict[NormalizationMode, ScorePair]] = field(default_factory=dict)
    groups: dict[str, str] = field(default_factory=dict)
    benchmark_average: dict[NormalizationMode, ScorePair | None] = field(default_factory=dict)
    in_house_average: dict[NormalizationMode, ScorePair | None] = field(default_factory=dict)
    overall_average: dict[NormalizationMode, ScorePair | None] = field(default_factory=dict)

    @property
    def modes(self) -> list[NormalizationMode]:
        return [m for m in NormalizationMode if m in self.overall_average]

    def rows(self) -> list[dict]:
        """Flat records: one per dataset and mode, then the average rows."""
        out = []
        for ds in sorted(self.per_dataset):
            for mode, sp in self.per_dataset[ds].items():
                out.append({"dataset": ds, "group": self.groups[ds], "mode": mode.value,
                            "wer": sp.wer, "cer": sp.cer})
        for name, avg in (("benchmark-average", self.benchmark_average),
                          ("in-house-average", self.in_house_average),
                          ("overall-average", self.overall_average)):
            for mode, sp in avg.items():
                if sp is not None:
                    out.append({"dataset": name, "group": "average", "mode": mode.value,
                                "wer": sp.wer, "cer": sp.cer})
        return out

    def to_tsv(self) -> str:
        lines = ["dataset\tgroup\tmode\twer\tcer"]
        for r in self.rows():
            lines.append(f"{r['dataset']}\t{r['group']}\t{r['mode']}\t{r['wer']:.1f}\t{r['cer']:.1f}")
        return "\n".join(lines) + "\n"


def aggregate(scores: Iterable[tuple[str, str, ScorePair | Mapping[NormalizationMode, ScorePair]]],
              mode: NormalizationMode | str = NormalizationMode.NORMALIZED_NO_DIACRITICS) -> EvalReport:
    """Build an :class:`EvalReport` from ``(dataset_id, group, scores)`` entries.

    ``scores`` is either a single :class:`ScorePair` (filed under ``mode``) or a
    mapping from mode to pair.
    """
    mode = parse_mode(mode)
    report = EvalReport()
    for ds, group, sp in scores:
        if group not in GROUPS:
            raise ValueError(f"group must be one of {GROUPS}, got {group!r}")
        per_mode = {mode: sp} if isinstance(sp, ScorePair) else {parse_mode(k): v for k, v in sp.items()}
        report.per_dataset.setdefault(ds, {}).update(per_mode)
        report.groups[ds] = group
    if not report.per_dataset:
        raise EmptyInput("aggregate() needs at least one score")
    modes = {m for d in report.per_dataset.values() for m in d}
    for m in NormalizationMode:
        if m not in modes:
            continue
        bench = [d[m] for ds, d in report.per_dataset.items() if m in d and report.groups[ds] == "benchmark"]
        house = [d[m] for ds, d in report.per_dataset.items() if m in d and report.groups[ds] == "in-house"]
        report.benchmark_average[m] = _mean(bench)
        report.in_house_average[m] = _mean(house)
        report.overall_average[m] = _mean(bench + house)
    return report
