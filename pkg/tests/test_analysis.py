import json

import pytest

from kdasr.analysis import (CATEGORIES, Category, ErrorFlag, FlagConfig, ScoredRecord, error_report, find_repetition,
                            flag_errors, prefix_error)
from kdasr.errors import EmptyReference

REF = "ذهب الولد الى المدرسة صباحا مع اخيه الكبير ثم عاد الى البيت"  # 12 tokens
LEXICON = set(REF.split()) | {"كتب", "قلم"}


def cats(ref, hyp, lexicon=None, **kw):
    return [f.category for f in flag_errors(ref, hyp, lexicon, FlagConfig(**kw))]


def test_empty_hypothesis():
    assert cats(REF, "") == [Category.EMPTY, Category.HIGH_CER]
    # punctuation and Latin normalize away, so this is empty too
    assert cats(REF, "ok ...")[0] is Category.EMPTY


def test_repetition_is_deterioration():
    hyp = "ذهب الولد " + "الى " * 6
    flags = flag_errors(REF, hyp)
    assert [f.category for f in flags][:1] == [Category.DETERIORATION]
    assert "repetition" in flags[0].evidence and "x6" in flags[0].evidence


def test_gibberish_is_deterioration_with_lexicon():
    hyp = "ثصق ضظغ شسي فقك لمن هوي"
    flags = flag_errors(REF, hyp, LEXICON)
    assert [f.category for f in flags] == [Category.DETERIORATION, Category.HIGH_CER]
    assert "in-lexicon rate 0.000" in flags[0].evidence
    assert cats(REF, hyp) == [Category.HIGH_CER]  # no lexicon, no gibberish check


def test_incomplete_prefix():
    hyp = " ".join(REF.split()[:4])
    flags = flag_errors(REF, hyp)
    assert [f.category for f in flags] == [Category.INCOMPLETE]
    assert "prefix of 4 tokens" in flags[0].evidence


def test_short_but_not_a_prefix_is_not_incomplete():
    assert Category.INCOMPLETE not in cats(REF, "كتب قلم باب")


def test_multi_flag_case():
    # short, a near-prefix of the reference, and dominated by a repeated word
    ref = " ".join(["كتب"] * 6 + ["قلم"] * 10)
    hyp = "كتب كتب كتب كتب"
    got = cats(ref, hyp)
    assert got == [Category.DETERIORATION, Category.INCOMPLETE, Category.HIGH_CER]


def test_perfect_hypothesis_has_no_flags():
    assert flag_errors(REF, REF, LEXICON) == []


def test_high_cer_boundary_is_exclusive():
    # 3 substitutions over 4 characters: exactly 75 percent, not flagged
    assert cats("ابتث", "اججج") == []
    # 4 of 4 wrong is flagged
    assert cats("ابتث", "جججج") == [Category.HIGH_CER]
    # a threshold just below 75 flags the boundary case
    assert cats("ابتث", "اججج", high_cer=74.99) == [Category.HIGH_CER]


def test_empty_reference_raises():
    with pytest.raises(EmptyReference):
        flag_errors("hello", "كتب")


def test_find_repetition():
    assert find_repetition(list("abababab"), 5, 4) == (0, 2, 4)
    assert find_repetition(list("xaaaa"), 5, 4) == (1, 1, 4)
    assert find_repetition(list("abcabcab"), 5, 3) is None
    assert find_repetition([], 5, 4) is None


def test_prefix_error():
    assert prefix_error(list("abcdef"), list("abc")) == (0.0, 3)
    err, k = prefix_error(list("abcdef"), list("abx"))
    # k=2 and k=3 tie at one error in three; the shorter prefix wins
    assert (err, k) == (pytest.approx(1 / 3), 2)


def _records():
    recs = []
    for i in range(30):
        hyp = "" if i % 3 == 0 else REF
        recs.append(ScoredRecord(f"a{i:02d}", "ALG", REF, hyp))
    for i in range(10):
        recs.append(ScoredRecord(f"j{i:02d}", "JOR", REF, " ".join(REF.split()[:3])))
    return recs


def test_error_report_counts_and_percentages():
    recs = _records()
    flags = {r.id: flag_errors(r.reference, r.hypothesis) for r in recs}
    rep = error_report(recs, flags, sample_size=4, seed=1)
    rows = {(r["dialect"], r["category"]): r for r in rep.table}
    assert len(rep.table) == 2 * len(CATEGORIES)
    alg_empty = rows[("ALG", "Empty")]
    assert (alg_empty["count"], alg_empty["utterances"], alg_empty["triaged"]) == (10, 30, 10)
    assert alg_empty["pct_utterances"] == pytest.approx(100 / 3)
    assert alg_empty["pct_triaged"] == 100.0
    assert rows[("JOR", "Incomplete")]["count"] == 10
    assert rows[("JOR", "Deterioration")]["pct_triaged"] == 0.0
    lines = rep.to_tsv().splitlines()
    assert lines[0].split("\t") == ["model", "dialect", "category", "count", "utterances", "triaged",
                                    "pct_utterances", "pct_triaged"]
    assert "model\tALG\tEmpty\t10\t30\t10\t33.3\t100.0" in lines


def test_review_sample_is_seeded_and_bounded():
    recs = _records()
    flags = {r.id: flag_errors(r.reference, r.hypothesis) for r in recs}
    a = error_report(recs, flags, sample_size=4, seed=1)
    b = error_report(list(reversed(recs)), flags, sample_size=4, seed=1)
    assert a.review == b.review
    assert len(a.review) == 8
    row = json.loads(a.review_jsonl().splitlines()[0])
    assert set(row["human"]) == {"MSA-Translation", "Hallucination", "Dialectal-Inaccuracy"}
    assert all(v is None for v in row["human"].values())
    assert any(f["category"] == "HighCER" for f in row["flags"])
    everything = error_report(recs, flags, sample_size=100)
    assert len(everything.review) == 20


def test_flags_keyed_per_model():
    recs = [ScoredRecord("u1", "ALG", REF, "", model="m1"), ScoredRecord("u1", "ALG", REF, REF, model="m2")]
    flags = {(r.model, r.id): flag_errors(r.reference, r.hypothesis) for r in recs}
    rows = {(r["model"], r["category"]): r["count"] for r in error_report(recs, flags).table}
    assert rows[("m1", "Empty")] == 1 and rows[("m2", "Empty")] == 0


def test_record_from_dict():
    r = ScoredRecord.from_dict({"id": 7, "dataset": "JOR", "reference": "x", "hypothesis": "y"})
    assert (r.id, r.dialect, r.model) == ("7", "JOR", "model")
    assert ErrorFlag(Category.EMPTY, "e").to_dict() == {"category": "Empty", "evidence": "e"}


def test_pct_triaged_counts_only_triaged_utterances():
    short = " ".join(REF.split()[:4])  # Incomplete without HighCER
    recs = [ScoredRecord("a", "ALG", REF, short), ScoredRecord("b", "ALG", REF, "")]
    flags = {r.id: flag_errors(r.reference, r.hypothesis) for r in recs}
    rows = {r["category"]: r for r in error_report(recs, flags).table}
    assert rows["Incomplete"]["count"] == 1 and rows["Incomplete"]["pct_utterances"] == 50.0
    assert rows["Incomplete"]["pct_triaged"] == 0.0
    assert rows["Empty"]["pct_triaged"] == 100.0
