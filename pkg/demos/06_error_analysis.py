# Flagging transcription errors
# =============================
#
# Four error categories are mechanical enough to detect automatically.
# Transcripts with CER above 75 are the triage pool for manual review,
# which gets a seeded sample with empty slots for the judgment calls.

from kdasr.analysis import flag_errors, error_report, ScoredRecord

ref = "ذهب الولد الى المدرسة صباحا مع اخيه الكبير ثم عاد الى البيت"
lexicon = set(ref.split())

cases = {
    "empty": "",
    "looping": "ذهب الولد الى الى الى الى الى",
    "gibberish": "ثصق ضظغ شسي فقك",
    "cut short": "ذهب الولد الى المدرسة",
    "fine": ref,
}
for name, hyp in cases.items():
    flags = flag_errors(ref, hyp, lexicon)
    print(f"{name:10s}", [f"{f.category.value}: {f.evidence}" for f in flags])

records = [ScoredRecord(f"u{i}", "ALG" if i % 2 else "JOR", ref, hyp)
           for i, hyp in enumerate(list(cases.values()) * 4)]
flags = {r.id: flag_errors(r.reference, r.hypothesis, lexicon) for r in records}
report = error_report(records, flags, sample_size=3, seed=0)
print(report.to_tsv())
print(report.review_jsonl().splitlines()[0])
