"""Golden cases and property fuzzing for Arabic normalization."""

import random
import unicodedata

import pytest

from kdasr.textnorm import (DEFAULT_RULES, NormalizationMode, collapse_whitespace, dump_rules, is_latin_letter,
                            is_special, normalize, parse_mode, strip_diacritics)

O = NormalizationMode.ORTHOGRAPHIC
N = NormalizationMode.NORMALIZED
ND = NormalizationMode.NORMALIZED_NO_DIACRITICS

# (input, orthographic, normalized, normalized without diacritics)
GOLDEN = [
    ("", "", "", ""),
    ("كتب", "كتب", "كتب", "كتب"),
    ("٣ كتب", "٣ كتب", "3 كتب", "3 كتب"),
    ("أَهْلاً", "أَهْلاً", "اَهْلاً", "اهلا"),
    ("hello مرحبا", "hello مرحبا", "مرحبا", "مرحبا"),
    # every diacritic on its own, between two letters
    ("بًت", "بًت", "بًت", "بت"),  # fathatan
    ("بٌت", "بٌت", "بٌت", "بت"),  # dammatan
    ("بٍت", "بٍت", "بٍت", "بت"),  # kasratan
    ("بَت", "بَت", "بَت", "بت"),  # fatha
    ("بُت", "بُت", "بُت", "بت"),  # damma
    ("بِت", "بِت", "بِت", "بت"),  # kasra
    ("بّت", "بّت", "بّت", "بت"),  # shadda
    ("بْت", "بْت", "بْت", "بت"),  # sukun
    ("بٓت", "بٓت", "بٓت", "بت"),  # maddah above
    ("بٔت", "بٔت", "بٔت", "بت"),  # hamza above
    ("بٕت", "بٕت", "بٕت", "بت"),  # hamza below
    ("بٖت", "بٖت", "بٖت", "بت"),  # subscript alef
    ("بٗت", "بٗت", "بٗت", "بت"),  # inverted damma
    ("ب٘ت", "ب٘ت", "ب٘ت", "بت"),  # mark noon ghunna
    ("بٙت", "بٙت", "بٙت", "بت"),  # zwarakay
    ("بٚت", "بٚت", "بٚت", "بت"),  # vowel sign small v above
    ("بٛت", "بٛت", "بٛت", "بت"),  # vowel sign inverted small v above
    ("بٜت", "بٜت", "بٜت", "بت"),  # vowel sign dot below
    ("بٝت", "بٝت", "بٝت", "بت"),  # reversed damma
    ("بٞت", "بٞت", "بٞت", "بت"),  # fatha with two dots
    ("بٟت", "بٟت", "بٟت", "بت"),  # wavy hamza below
    ("هٰذا", "هٰذا", "هٰذا", "هذا"),  # superscript alef
    ("مُحَمَّدٌ", "مُحَمَّدٌ", "مُحَمَّدٌ", "محمد"),
    # alef variants
    ("آمن", "آمن", "امن", "امن"),
    ("أحمد", "أحمد", "احمد", "احمد"),
    ("إسلام", "إسلام", "اسلام", "اسلام"),
    ("ٱلله", "ٱلله", "الله", "الله"),
    ("أإآٱا", "أإآٱا", "ااااا", "ااااا"),
    ("إِسْلَام", "إِسْلَام", "اِسْلَام", "اسلام"),
    # hamza on waw and ya is not an alef variant
    ("مؤمن", "مؤمن", "مؤمن", "مؤمن"),
    ("سائل", "سائل", "سائل", "سائل"),
    # digits, both blocks
    ("٠١٢٣٤٥٦٧٨٩", "٠١٢٣٤٥٦٧٨٩", "0123456789", "0123456789"),
    ("۰۱۲۳۴۵۶۷۸۹", "۰۱۲۳۴۵۶۷۸۹", "0123456789", "0123456789"),
    ("سنة ٢٠٢٣", "سنة ٢٠٢٣", "سنة 2023", "سنة 2023"),
    ("۱۵ يوم", "۱۵ يوم", "15 يوم", "15 يوم"),
    ("2023 عام", "2023 عام", "2023 عام", "2023 عام"),
    # Latin mix
    ("Hello World", "Hello World", "", ""),
    ("انا ok تمام", "انا ok تمام", "انا تمام", "انا تمام"),
    ("Café مقهى", "Café مقهى", "مقهى", "مقهى"),
    ("iPhone١٢", "iPhone١٢", "12", "12"),
    ("ﬁ ملف", "ﬁ ملف", "ملف", "ملف"),  # Latin ligature counts as Latin
    # tatweel
    ("كـــتـاب", "كـــتـاب", "كتاب", "كتاب"),
    ("ـ", "ـ", "", ""),
    # punctuation and symbols
    ("مرحبا، كيف الحال؟", "مرحبا، كيف الحال؟", "مرحبا كيف الحال", "مرحبا كيف الحال"),
    ("قال: «نعم»!", "قال: «نعم»!", "قال نعم", "قال نعم"),
    ("كتب؛ قرأ.", "كتب؛ قرأ.", "كتب قرا", "كتب قرا"),
    ("سعر $ ١٠٠", "سعر $ ١٠٠", "سعر 100", "سعر 100"),
    ("أ-ب", "أ-ب", "اب", "اب"),
    ("٪ ٥٠", "٪ ٥٠", "50", "50"),
    ("😀 ضحك", "😀 ضحك", "ضحك", "ضحك"),
    ("a+b=c", "a+b=c", "", ""),
    # whitespace
    ("  كتب   قلم  ", "كتب قلم", "كتب قلم", "كتب قلم"),
    ("كتب\tقلم\nباب", "كتب قلم باب", "كتب قلم باب", "كتب قلم باب"),
    ("كتب قلم", "كتب قلم", "كتب قلم", "كتب قلم"),
    # a token made of diacritics only disappears in norm-nd
    ("كتب َ قلم", "كتب َ قلم", "كتب َ قلم", "كتب قلم"),
    # combined
    ("إِنَّ ٱلْكِتَابَ، ١٢ page!", "إِنَّ ٱلْكِتَابَ، ١٢ page!", "اِنَّ الْكِتَابَ 12", "ان الكتاب 12"),
]


def test_golden_suite_is_large_enough():
    assert len(GOLDEN) >= 50


@pytest.mark.parametrize("text,ortho,norm,nd", GOLDEN)
def test_golden(text, ortho, norm, nd):
    assert normalize(text, O) == ortho
    assert normalize(text, N) == norm
    assert normalize(text, ND) == nd


def test_golden_covers_every_rule():
    joined = "".join(g[0] for g in GOLDEN)
    for cp in list(range(0x064B, 0x0660)) + [0x0670]:
        assert chr(cp) in joined, f"diacritic U+{cp:04X} missing"
    for ch in "آأإٱ":
        assert ch in joined
    assert any(0x0660 <= ord(c) <= 0x0669 for c in joined)
    assert any(0x06F0 <= ord(c) <= 0x06F9 for c in joined)
    assert "ـ" in joined
    assert any(unicodedata.category(c).startswith("P") for c in joined)
    assert any(unicodedata.category(c).startswith("S") for c in joined)


def _oracle_nd(text):
    # Independent character-by-character reimplementation of the rule table.
    out = []
    for ch in text:
        cp = ord(ch)
        if 0x064B <= cp <= 0x065F or cp == 0x0670:
            continue
        if ch in "آأإٱ":
            out.append("ا")
        elif 0x0660 <= cp <= 0x0669:
            out.append(chr(ord("0") + cp - 0x0660))
        elif 0x06F0 <= cp <= 0x06F9:
            out.append(chr(ord("0") + cp - 0x06F0))
        elif cp == 0x0640:
            continue
        elif unicodedata.category(ch)[0] in "PS":
            continue
        elif unicodedata.category(ch)[0] == "L" and "LATIN" in unicodedata.name(ch, ""):
            continue
        else:
            out.append(ch)
    return " ".join("".join(out).split())


@pytest.mark.parametrize("text", [g[0] for g in GOLDEN])
def test_independent_oracle_agrees(text):
    assert normalize(text, ND) == _oracle_nd(text)


def test_modes_parse_from_names_and_values():
    assert parse_mode("ortho") is O
    assert parse_mode("norm-nd") is ND
    assert parse_mode("normalized") is N
    with pytest.raises(ValueError):
        parse_mode("loud")


def _random_string(rng, n):
    pools = [
        (0x0600, 0x06FF), (0x0750, 0x077F), (0x0020, 0x007E), (0x00A0, 0x024F),
        (0x2000, 0x206F), (0x1F600, 0x1F64F), (0xFB50, 0xFDFF), (0x0000, 0x001F),
    ]
    out = []
    for _ in range(n):
        if rng.random() < 0.1:
            out.append(rng.choice(" \t\n　"))
            continue
        if rng.random() < 0.1:
            cp = rng.randrange(0x110000)
        else:
            lo, hi = rng.choice(pools)
            cp = rng.randint(lo, hi)
        if 0xD800 <= cp <= 0xDFFF:
            cp = 0x0627
        out.append(chr(cp))
    return "".join(out)


FUZZ = [_random_string(random.Random(i), random.Random(i).randint(0, 40)) for i in range(10_000)]


def test_idempotence_fuzz():
    violations = []
    for s in FUZZ:
        for m in NormalizationMode:
            once = normalize(s, m)
            if normalize(once, m) != once:
                violations.append((s, m))
    assert violations == []


def test_nd_factors_through_normalized():
    for s in FUZZ[:3000]:
        assert normalize(s, ND) == strip_diacritics(normalize(s, N))


def test_outputs_free_of_removed_codepoints():
    for s in FUZZ[:3000]:
        norm, nd = normalize(s, N), normalize(s, ND)
        for ch in norm:
            assert not is_latin_letter(ch) and not is_special(ch)
            assert ch not in DEFAULT_RULES.alef_map and ch not in DEFAULT_RULES.digit_map
        assert not any(ch in DEFAULT_RULES.diacritics for ch in nd)
        for out in (norm, nd, normalize(s, O)):
            assert out == out.strip() and "  " not in out
            assert collapse_whitespace(out) == out


def test_token_count_never_grows():
    for s in FUZZ[:3000]:
        n_in = len(s.split())
        assert len(normalize(s, N).split()) <= n_in
        assert len(normalize(s, ND).split()) <= n_in


def test_rule_sets_are_disjoint_and_well_formed():
    r = DEFAULT_RULES
    assert set(r.alef_map.values()) == {"ا"}
    assert sorted(r.digit_map.values()) == sorted([str(i) for i in range(10)] * 2)
    for block in (0x0660, 0x06F0):
        assert {r.digit_map[chr(block + i)] for i in range(10)} == set("0123456789")
    sets = {
        "diacritics": set(r.diacritics),
        "alef": set(r.alef_map),
        "digits": set(r.digit_map),
    }
    for name, members in sets.items():
        for ch in members:
            assert not is_special(ch) and not is_latin_letter(ch), (name, ch)
    assert not (sets["diacritics"] & sets["alef"]) and not (sets["diacritics"] & sets["digits"])
    assert not (sets["alef"] & sets["digits"])


def test_dump_rules_table():
    table = dump_rules().splitlines()
    assert table[0] == "codepoint\taction"
    rows = dict(line.split("\t") for line in table[1:])
    assert rows["064E"] == "strip-diacritic"
    assert rows["0623"] == "map:0627"
    assert rows["0663"] == "map:0033"
    assert rows["06F5"] == "map:0035"
    assert rows["0041"] == "remove-latin"
    assert rows["0640"] == "remove-special"
    assert rows["060C"] == "remove-special"
    assert "0627" not in rows
