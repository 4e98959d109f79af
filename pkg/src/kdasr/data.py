"""Utterances, JSONL manifests, corpus statistics, sampling and a synthetic corpus.

The synthetic corpus stands in for speech: every character of a reference is
rendered as a fixed random embedding plus Gaussian noise, and frames are
randomly repeated to give variable durations. Dialect test sets apply
per-dialect character substitutions to both text and frames.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DuplicateId, SchemaViolation, SizeExceedsCorpus
from .tensorio import read_tensors, write_tensors
from .textnorm import collapse_whitespace

__all__ = [
    "Utterance",
    "CorpusStats",
    "SynthConfig",
    "SynthCorpus",
    "FRAME_RATE",
    "load_manifest",
    "write_manifest",
    "corpus_stats",
    "stats_table",
    "sample_mixture",
    "split",
    "synth_corpus",
    "oracle_decode",
    "add_noise",
]

FRAME_RATE = 100.0  # nominal frames per second for the hours proxy
REQUIRED_FIELDS = ("id", "reference", "dataset")


@dataclass
class Utterance:
    id: str
    frames: np.ndarray
    reference: str
    dataset: str
    dialect: str | None = None

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float32)
        if self.frames.ndim != 2 or len(self.frames) == 0:
            raise ValueError(f"{self.id}: frames must be a non-empty 2-D array, got shape {self.frames.shape}")
        if not np.all(np.isfinite(self.frames)):
            raise ValueError(f"{self.id}: non-finite frame values")

    @property
    def duration_proxy(self) -> int:
        return len(self.frames)

    def with_frames(self, frames: np.ndarray) -> "Utterance":
        return Utterance(self.id, frames, self.reference, self.dataset, self.dialect)


def _check_unique(utts: Iterable[Utterance]) -> None:
    seen = set()
    for u in utts:
        if u.id in seen:
            raise DuplicateId(f"duplicate utterance id {u.id!r}")
        seen.add(u.id)


# ---------------------------------------------------------------------------
# manifests


def load_manifest(path: str | Path) -> list[Utterance]:
    """Read a JSONL manifest, validating every record; result is sorted by id.

    Each line holds ``id``, ``reference``, ``dataset``, optional ``dialect`` and
    either inline ``frames`` (list of lists) or ``frames_path``, a sidecar tensor
    file relative to the manifest whose tensor named after the id holds the frames.
    """
    path = Path(path)
    sidecars: dict[Path, dict[str, np.ndarray]] = {}
    utts = []
    seen: dict[str, int] = {}
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaViolation(f"invalid JSON: {exc.msg}", lineno) from exc
            if not isinstance(rec, dict):
                raise SchemaViolation("record is not an object", lineno)
            for key in REQUIRED_FIELDS:
                if key not in rec:
                    raise SchemaViolation(f"missing field {key!r}", lineno)
                if not isinstance(rec[key], str):
                    raise SchemaViolation(f"field {key!r} must be a string", lineno)
            dialect = rec.get("dialect")
            if dialect is not None and not isinstance(dialect, str):
                raise SchemaViolation("field 'dialect' must be a string or null", lineno)
            if "frames" in rec:
                frames = rec["frames"]
            elif "frames_path" in rec:
                side = path.parent / rec["frames_path"]
                if side not in sidecars:
                    if not side.exists():
                        raise SchemaViolation(f"frames file {rec['frames_path']!r} not found", lineno)
                    sidecars[side] = read_tensors(side)[1]
                frames = sidecars[side].get(rec["id"])
                if frames is None:
                    raise SchemaViolation(f"no frames for {rec['id']!r} in {rec['frames_path']!r}", lineno)
            else:
                raise SchemaViolation("missing field 'frames' or 'frames_path'", lineno)
            if rec["id"] in seen:
                raise DuplicateId(f"line {lineno}: id {rec['id']!r} already used on line {seen[rec['id']]}")
            seen[rec["id"]] = lineno
            try:
                utts.append(Utterance(rec["id"], frames, rec["reference"], rec["dataset"], dialect))
            except (ValueError, TypeError) as exc:
                raise SchemaViolation(str(exc), lineno) from exc
    utts.sort(key=lambda u: u.id)
    return utts


def write_manifest(path: str | Path, utts: Sequence[Utterance], inline: bool = False) -> None:
    """Write utterances in id order; frames go to ``<stem>.frames.bin`` unless ``inline``."""
    path = Path(path)
    _check_unique(utts)
    ordered = sorted(utts, key=lambda u: u.id)
    side_name = path.stem + ".frames.bin"
    lines = []
    for u in ordered:
        rec = {"id": u.id, "reference": u.reference, "dataset": u.dataset, "dialect": u.dialect}
        if inline:
            rec["frames"] = u.frames.tolist()
        else:
            rec["frames_path"] = side_name
        lines.append(json.dumps(rec, ensure_ascii=False, sort_keys=True))
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    if not inline:
        write_tensors(path.parent / side_name, {"kind": "frames"}, {u.id: u.frames for u in ordered})


# ---------------------------------------------------------------------------
# statistics


@dataclass(frozen=True)
class CorpusStats:
    utterance_count: int
    word_count: int
    frame_count: int = 0

    @property
    def words_per_utterance(self) -> float:
        return self.word_count / self.utterance_count if self.utterance_count else 0.0

    @property
    def hours_proxy(self) -> float:
        return self.frame_count / FRAME_RATE / 3600.0

    def __add__(self, other: "CorpusStats") -> "CorpusStats":
        return CorpusStats(self.utterance_count + other.utterance_count,
                           self.word_count + other.word_count,
                           self.frame_count + other.frame_count)


def corpus_stats(utts: Iterable[Utterance]) -> CorpusStats:
    n = w = f = 0
    for u in utts:
        n += 1
        text = collapse_whitespace(u.reference)
        w += len(text.split(" ")) if text else 0
        f += u.duration_proxy
    return CorpusStats(n, w, f)


def stats_table(utts: Iterable[Utterance]) -> str:
    """Per-dialect statistics TSV with Total and Avg. rows."""
    groups: dict[str, list[Utterance]] = {}
    for u in utts:
        groups.setdefault(u.dialect or u.dataset, []).append(u)
    rows = [(k, corpus_stats(v)) for k, v in sorted(groups.items())]
    lines = ["dialect\tutterances\twords\twords_per_utt\thours_proxy"]
    for name, s in rows:
        lines.append(f"{name}\t{s.utterance_count}\t{s.word_count}\t{s.words_per_utterance:.2f}\t{s.hours_proxy:.4f}")
    if rows:
        total = sum((s for _, s in rows), CorpusStats(0, 0, 0))
        lines.append(f"Total\t{total.utterance_count}\t{total.word_count}\t"
                     f"{total.words_per_utterance:.2f}\t{total.hours_proxy:.4f}")
        k = len(rows)
        lines.append(f"Avg.\t{total.utterance_count / k:.1f}\t{total.word_count / k:.1f}\t"
                     f"{sum(s.words_per_utterance for _, s in rows) / k:.2f}\t{total.hours_proxy / k:.4f}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# sampling and splits


def sample_mixture(datasets: Sequence[Sequence[Utterance]], n_segments: int, seed: int) -> list[Utterance]:
    """Uniform sample without replacement from the pooled datasets.

    One seeded permutation of the pool is drawn and its first ``n_segments``
    entries are returned, so samples of different sizes with the same seed nest.
    """
    pool = [u for ds in datasets for u in ds]
    _check_unique(pool)
    if n_segments > len(pool) or n_segments < 0:
        raise SizeExceedsCorpus(f"asked for {n_segments} segments from a pool of {len(pool)}")
    order = np.random.default_rng(seed).permutation(len(pool))
    return [pool[i] for i in order[:n_segments]]


def split(utts: Sequence[Utterance], ratios: Sequence[float], seed: int) -> list[list[Utterance]]:
    """Seeded disjoint partition with sizes proportional to ``ratios`` (largest remainder)."""
    if any(r < 0 for r in ratios) or not math.isclose(sum(ratios), 1.0, abs_tol=1e-9):
        raise ValueError(f"ratios must be non-negative and sum to 1, got {list(ratios)}")
    n = len(utts)
    exact = [r * n for r in ratios]
    sizes = [math.floor(x) for x in exact]
    by_remainder = sorted(range(len(ratios)), key=lambda i: (-(exact[i] - sizes[i]), i))
    for i in by_remainder[: n - sum(sizes)]:
        sizes[i] += 1
    ordered = sorted(utts, key=lambda u: u.id)
    perm = np.random.default_rng(seed).permutation(n)
    out, start = [], 0
    for size in sizes:
        part = [ordered[i] for i in perm[start:start + size]]
        out.append(sorted(part, key=lambda u: u.id))
        start += size
    return out


# ---------------------------------------------------------------------------
# synthetic corpus

DEFAULT_ALPHABET = "ابتجدرسشعفقكلمنهوي"

# A few systematic letter swaps per dialect, e.g. the Gulf ج -> ي shift.
DEFAULT_DIALECT_RULES: dict[str, dict[str, str]] = {
    "ALG": {"ق": "ك", "ت": "د"},
    "JOR": {"ق": "ا", "ج": "ش"},
    "PAL": {"ق": "ا", "ك": "ش"},
    "UAE": {"ج": "ي", "ق": "ج", "ك": "ش"},
    "YEM": {"ق": "ج", "س": "ش", "ت": "د"},
}


@dataclass
class SynthConfig:
    alphabet: str = DEFAULT_ALPHABET
    lexicon_size: int = 300
    word_len: tuple[int, int] = (2, 5)
    utt_words: tuple[int, int] = (2, 5)
    frame_dim: int = 16
    embedding_seed: int = 1234
    noise: float = 0.3
    duplication: float = 0.0
    max_repeat: int = 3
    dialect_rules: dict[str, dict[str, str]] = field(default_factory=lambda: {
        k: dict(v) for k, v in DEFAULT_DIALECT_RULES.items()})
    n_train: int = 5000
    n_dev: int = 500
    n_test: int = 200
    seed: int = 0

    def __post_init__(self):
        self.word_len = tuple(self.word_len)
        self.utt_words = tuple(self.utt_words)
        if self.noise < 0:
            raise ValueError("noise must be >= 0")
        if not 0 <= self.duplication < 1:
            raise ValueError("duplication must be in [0, 1)")
        if " " in self.alphabet or len(set(self.alphabet)) != len(self.alphabet):
            raise ValueError("alphabet must be distinct non-space characters")
        for dialect, rules in self.dialect_rules.items():
            if len(set(rules.values())) != len(rules):
                raise ValueError(f"substitution rules for {dialect} are not injective")
        if self.word_len[0] < 1 or self.utt_words[0] < 1:
            raise ValueError("word and utterance lengths must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "SynthConfig":
        return cls(**d)

    @property
    def symbols(self) -> str:
        """Every character that can appear in a reference, dialect targets included."""
        extra = [c for rules in self.dialect_rules.values() for c in rules.values()]
        out = []
        for c in " " + self.alphabet + "".join(extra):
            if c not in out:
                out.append(c)
        return "".join(out)


@dataclass
class SynthCorpus:
    config: SynthConfig
    train: list[Utterance]
    dev: list[Utterance]
    test: list[Utterance]
    dialects: dict[str, list[Utterance]]
    lexicon: list[str]
    embeddings: dict[str, np.ndarray]

    def eval_sets(self) -> list[tuple[str, str, list[Utterance]]]:
        """``(dataset_id, group, utterances)`` for every evaluation set."""
        out = [("synth-test", "benchmark", self.test)]
        out += [(d, "in-house", u) for d, u in sorted(self.dialects.items())]
        return out


def _embeddings(cfg: SynthConfig) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(cfg.embedding_seed)
    table = rng.normal(0.0, 1.0, size=(len(cfg.symbols), cfg.frame_dim))
    return {c: table[i] for i, c in enumerate(cfg.symbols)}


def _lexicon(cfg: SynthConfig, rng: np.random.Generator) -> list[str]:
    words: list[str] = []
    seen = set()
    letters = list(cfg.alphabet)
    attempts = 0
    while len(words) < cfg.lexicon_size:
        attempts += 1
        if attempts > 100 * cfg.lexicon_size:
            raise ValueError("alphabet too small for the requested lexicon size")
        n = int(rng.integers(cfg.word_len[0], cfg.word_len[1] + 1))
        w = [letters[int(rng.integers(len(letters)))]]
        while len(w) < n:
            c = letters[int(rng.integers(len(letters)))]
            if c != w[-1]:  # no doubled letters, so duplicated frames stay unambiguous
                w.append(c)
        word = "".join(w)
        if word not in seen:
            seen.add(word)
            words.append(word)
    return words


def render_frames(text: str, emb: Mapping[str, np.ndarray], cfg: SynthConfig,
                  rng: np.random.Generator) -> np.ndarray:
    frames = []
    for ch in text:
        reps = 1
        while reps < cfg.max_repeat and rng.random() < cfg.duplication:
            reps += 1
        for _ in range(reps):
            frames.append(emb[ch] + rng.normal(0.0, cfg.noise, cfg.frame_dim))
    return np.asarray(frames, dtype=np.float32)


def synth_corpus(cfg: SynthConfig) -> SynthCorpus:
    rng = np.random.default_rng(cfg.seed)
    emb = _embeddings(cfg)
    lexicon = _lexicon(cfg, rng)

    def sentence() -> str:
        n = int(rng.integers(cfg.utt_words[0], cfg.utt_words[1] + 1))
        return " ".join(lexicon[int(rng.integers(len(lexicon)))] for _ in range(n))

    def make(prefix: str, dataset: str, n: int) -> list[Utterance]:
        return [Utterance(f"{prefix}-{k:05d}", render_frames(text, emb, cfg, rng), text, dataset)
                for k, text in ((k, sentence()) for k in range(n))]

    train = make("train", "synth-train", cfg.n_train)
    dev = make("dev", "synth-dev", cfg.n_dev)
    test = make("test", "synth-test", cfg.n_test)
    dialects = {}
    for name, rules in sorted(cfg.dialect_rules.items()):
        drng = np.random.default_rng([cfg.seed, *name.encode("utf-8")])
        table = str.maketrans(rules)
        out = []
        for k, base in enumerate(test):
            text = base.reference.translate(table)
            out.append(Utterance(f"{name.lower()}-{k:05d}", render_frames(text, emb, cfg, drng),
                                 text, name, dialect=name))
        dialects[name] = out
    return SynthCorpus(cfg, train, dev, test, dialects, lexicon, emb)


def add_noise(utts: Sequence[Utterance], sigma: float, seed: int = 0) -> list[Utterance]:
    """Copies of ``utts`` with extra Gaussian frame noise of standard deviation ``sigma``.

    Noise is drawn per utterance from a generator keyed on ``seed`` and the
    utterance id, so the result does not depend on list order. Independent
    noise adds in quadrature: a corpus rendered at noise ``s`` comes out with
    total noise ``sqrt(s**2 + sigma**2)``.
    """
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    out = []
    for u in utts:
        rng = np.random.default_rng([seed, *u.id.encode("utf-8")])
        frames = (u.frames + rng.normal(0.0, sigma, u.frames.shape)).astype(np.float32)
        out.append(replace(u, frames=frames))
    return out


def oracle_decode(frames: np.ndarray, embeddings: Mapping[str, np.ndarray], collapse: bool = False) -> str:
    """Nearest-embedding transcription of each frame; optionally merge repeats."""
    chars = list(embeddings)
    table = np.stack([embeddings[c] for c in chars])
    d = ((np.asarray(frames, dtype=np.float64)[:, None, :] - table[None]) ** 2).sum(-1)
    idx = d.argmin(1)
    if collapse:
        idx = [i for j, i in enumerate(idx) if j == 0 or i != idx[j - 1]]
    return "".join(chars[i] for i in idx)
