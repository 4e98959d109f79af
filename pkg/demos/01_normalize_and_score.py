# Text normalization and WER/CER scoring
# =======================================
#
# Arabic transcripts can differ in ways a listener would not count as errors:
# short-vowel diacritics, hamza forms of alef, two blocks of Arabic-Indic
# digits, tatweel, punctuation. The scorer can look at a pair in three modes.

from kdasr.textnorm import NormalizationMode, normalize, dump_rules
from kdasr.metrics import edit_distance, wer, cer, score_corpus, aggregate, ScorePair

ref = "ذَهَبَ الوَلَدُ إلى المَدرَسَةِ في ٣ أيام"
hyp = "ذهب الولد الى المدرسة في 3 ايام"

for mode in NormalizationMode:
    print(f"{mode.value:8s} {normalize(ref, mode)!r}")

# Orthographic scoring punishes every diacritic and hamza; the normalized
# no-diacritics mode (norm-nd) says the two strings are identical.
for mode in NormalizationMode:
    print(mode.value, "WER", round(wer(ref, hyp, mode), 2), "CER", round(cer(ref, hyp, mode), 2))

# The rule table behind the normalizer, one codepoint per row
print("\n".join(dump_rules().splitlines()[:8]), "...")

# Edit distances come with a substitution/deletion/insertion breakdown.
bd = edit_distance("كتب قلم باب".split(), "كتب باب دار".split())
print(bd, "rate", bd.rate())

# Corpus WER pools errors over utterances, it does not average per-utterance rates.
pairs = [("a", "كتب قلم", "كتب"), ("b", "باب", "باب")]
pooled, excluded = score_corpus(pairs)
print("pooled WER", round(pooled.wer, 2), "(a per-utterance mean would give 25.0)")

# Group averages are plain means over datasets:
rep = aggregate([("bench", "benchmark", ScorePair(42.0, 25.7)),
                 ("house", "in-house", ScorePair(68.2, 38.9))])
print(rep.to_tsv())
