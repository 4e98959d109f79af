"""Teacher training, run records and the resumable end-to-end pipeline.

Every stage writes its artifacts into ``<out>/<stage>-<key>/`` where ``key`` is
a hash of the stage's own settings and the keys of the stages it reads from.
A finished stage leaves a ``DONE`` file listing the SHA-256 of each artifact.
On a rerun a stage whose ``DONE`` file matches its artifacts is skipped; a
mismatch means an artifact was damaged and raises :class:`StageError`.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import platform
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from . import __version__
from .data import SynthConfig, SynthCorpus, Utterance, load_manifest, synth_corpus, write_manifest
from .distill import (DistillConfig, TrainingLog, evaluate, filter_by_wer, parse_flat_config, pseudo_label,
                      read_segments, train_distill, train_supervised, write_segments)
from .errors import BudgetExhausted, StageError
from .metrics import EvalReport, ScorePair, aggregate
from .model import ModelConfig, SeqModel, init_model, init_student, load_checkpoint, save_checkpoint
from .tensorio import canonical_json
from .textnorm import NormalizationMode
from .vocab import Vocab

log = logging.getLogger(__name__)


@dataclass
class TeacherConfig:
    d_model: int = 32
    n_heads: int = 4
    encoder_layers: int = 4
    decoder_layers: int = 4
    ffn_dim: int = 64
    max_target_len: int = 64
    max_source_len: int = 256
    learning_rate: float = 3e-3
    batch_size: int = 32
    epochs: int = 40
    warmup_steps: int = 50
    max_grad_norm: float | None = 1.0
    target_wer: float | None = 10.0
    max_steps: int | None = None
    eval_every: int = 1
    dev_limit: int | None = None
    seed: int = 0
    compute_dtype: str = "float32"

    def model_config(self, vocab: Vocab, frame_dim: int) -> ModelConfig:
        return ModelConfig(vocab_size=len(vocab), frame_dim=frame_dim, d_model=self.d_model,
                           n_heads=self.n_heads, encoder_layers=self.encoder_layers,
                           decoder_layers=self.decoder_layers, ffn_dim=self.ffn_dim,
                           max_target_len=self.max_target_len, max_source_len=self.max_source_len)

    def replace(self, **changes) -> "TeacherConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def train_teacher(train: list[Utterance], dev: list[Utterance], vocab: Vocab, frame_dim: int,
                  config: TeacherConfig, checkpoint: str | Path | None = None
                  ) -> tuple[SeqModel, TrainingLog]:
    """Supervised teacher training until ``target_wer`` on dev or the step budget runs out.

    The parameters with the best dev WER are kept. When a ``checkpoint`` path
    is given they are saved there before returning or raising
    :class:`BudgetExhausted`.
    """
    model = init_model(config.model_config(vocab, frame_dim), config.seed, vocab)
    dev_eval = dev[: config.dev_limit] if config.dev_limit else dev
    model, log_ = train_supervised(
        model, train, dev_eval, epochs=config.epochs, batch_size=config.batch_size,
        learning_rate=config.learning_rate, warmup_steps=config.warmup_steps, seed=config.seed,
        max_grad_norm=config.max_grad_norm, eval_every=config.eval_every, target_wer=config.target_wer,
        max_steps=config.max_steps, compute_dtype=np.dtype(config.compute_dtype), restore_best=True)
    if checkpoint is not None:
        save_checkpoint(model, checkpoint)
    best = min((d["wer"] for d in log_.dev), default=float("nan"))
    if config.target_wer is not None and not best < config.target_wer:
        exc = BudgetExhausted(f"best dev WER {best:.2f} did not reach the target {config.target_wer:.2f} "
                              f"within {len(log_.steps)} steps")
        exc.model, exc.log = model, log_
        raise exc
    return model, log_


# ---------------------------------------------------------------------------
# run records


def run_meta(command: str, config: Mapping, seed: int | None = None) -> dict:
    return {
        "command": command,
        "config": config,
        "seed": seed,
        "tool": "kdasr",
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "argv": sys.argv[1:],
    }


def write_run_meta(out_dir: str | Path, command: str, config: Mapping, seed: int | None = None) -> Path:
    path = Path(out_dir) / "run.meta"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(run_meta(command, config, seed), ensure_ascii=False, indent=2,
                               sort_keys=True, default=str) + "\n", encoding="utf-8")
    return path


def log_jsonl(log_: TrainingLog) -> str:
    lines = [json.dumps({"kind": "step", **s}, sort_keys=True) for s in log_.steps]
    lines += [json.dumps({"kind": "dev", **d}, sort_keys=True) for d in log_.dev]
    lines += [json.dumps({"kind": "note", "text": n}) for n in log_.notes]
    return "".join(line + "\n" for line in lines)


# ---------------------------------------------------------------------------
# pipeline


@dataclass
class PipelineConfig:
    synth: SynthConfig = field(default_factory=SynthConfig)
    teacher: TeacherConfig = field(default_factory=TeacherConfig)
    distill: DistillConfig = field(default_factory=DistillConfig)
    student_el: int = 2
    student_dl: int = 2

    def to_dict(self) -> dict:
        return {"synth": self.synth.to_dict(), "teacher": self.teacher.to_dict(),
                "distill": self.distill.to_dict(), "student_el": self.student_el,
                "student_dl": self.student_dl}

    @classmethod
    def from_text(cls, text: str) -> "PipelineConfig":
        """Flat ``section.key = value`` lines with sections synth, teacher, distill and student."""
        sections: dict[str, list[str]] = {"synth": [], "teacher": [], "distill": [], "student": []}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key = line.split("=", 1)[0].strip()
            section, _, rest = key.partition(".")
            if section not in sections or not rest:
                raise ValueError(f"line {lineno}: expected section.key with section in {sorted(sections)}")
            sections[section].append(rest + line[len(key):])
        student = {}
        for line in sections["student"]:
            k, v = (s.strip() for s in line.split("=", 1))
            if k not in ("el", "dl"):
                raise ValueError(f"unknown student key {k!r}")
            student[k] = int(v)
        return cls(synth=SynthConfig(**parse_flat_config("\n".join(sections["synth"]), SynthConfig)),
                   teacher=TeacherConfig(**parse_flat_config("\n".join(sections["teacher"]), TeacherConfig)),
                   distill=DistillConfig(**parse_flat_config("\n".join(sections["distill"]), DistillConfig)),
                   student_el=student.get("el", 2), student_dl=student.get("dl", 2))


def _key(*parts) -> str:
    return hashlib.sha256(canonical_json(parts).encode("utf-8")).hexdigest()[:16]


def _sha(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


@dataclass
class StageResult:
    name: str
    directory: Path
    skipped: bool


class Pipeline:
    """Runs named stages into content-addressed directories under ``out``."""

    def __init__(self, out: str | Path):
        self.out = Path(out)
        self.results: list[StageResult] = []

    def stage(self, name: str, key: str, produce: Callable[[Path], None]) -> Path:
        d = self.out / f"{name}-{key}"
        done = d / "DONE"
        if done.exists():
            try:
                manifest = json.loads(done.read_text(encoding="utf-8"))
                bad = [f for f, h in manifest.items() if not (d / f).exists() or _sha(d / f) != h]
            except (OSError, json.JSONDecodeError) as exc:
                raise StageError(name, f"unreadable DONE record: {exc}") from exc
            if bad:
                raise StageError(name, f"artifacts changed since the stage finished: {', '.join(sorted(bad))}")
            log.info("stage %s: up to date (%s)", name, d.name)
            self.results.append(StageResult(name, d, True))
            return d
        d.mkdir(parents=True, exist_ok=True)
        log.info("stage %s: running into %s", name, d.name)
        try:
            produce(d)
        except StageError:
            raise
        except Exception as exc:
            raise StageError(name, exc) from exc
        files = sorted(p for p in d.rglob("*") if p.is_file() and p.name != "DONE")
        done.write_text(json.dumps({str(p.relative_to(d)): _sha(p) for p in files}, indent=1, sort_keys=True)
                        + "\n", encoding="utf-8")
        self.results.append(StageResult(name, d, False))
        return d

    @staticmethod
    def load(name: str, loader: Callable, *args):
        """Read an upstream artifact, reporting failures against the stage that wrote it."""
        try:
            return loader(*args)
        except Exception as exc:
            raise StageError(name, exc) from exc


def write_corpus(d: Path, corpus: SynthCorpus) -> None:
    write_manifest(d / "train.jsonl", corpus.train)
    write_manifest(d / "dev.jsonl", corpus.dev)
    write_manifest(d / "test.jsonl", corpus.test)
    for dialect, utts in sorted(corpus.dialects.items()):
        write_manifest(d / f"{dialect.lower()}.jsonl", utts)
    (d / "synth.json").write_text(canonical_json(corpus.config.to_dict()) + "\n", encoding="utf-8")
    (d / "lexicon.txt").write_text("".join(w + "\n" for w in corpus.lexicon), encoding="utf-8")


def read_eval_sets(d: Path, cfg: SynthConfig) -> list[tuple[str, str, list[Utterance]]]:
    out = [("synth-test", "benchmark", load_manifest(d / "test.jsonl"))]
    for dialect in sorted(cfg.dialect_rules):
        out.append((dialect, "in-house", load_manifest(d / f"{dialect.lower()}.jsonl")))
    return out


def evaluation_report(model: SeqModel, eval_sets, dtype=np.float64) -> EvalReport:
    entries = []
    for name, group, utts in eval_sets:
        per_mode = {m: evaluate(model, utts, m, dtype=dtype)[0] for m in NormalizationMode}
        entries.append((name, group, per_mode))
    return aggregate(entries)


def report_jsonl(report: EvalReport) -> str:
    return "".join(json.dumps(r, ensure_ascii=False, sort_keys=True) + "\n" for r in report.rows())


def run_pipeline(config: PipelineConfig, out: str | Path) -> tuple[EvalReport, Pipeline]:
    """gen-corpus, train-teacher, pseudolabel, filter, init-student, distill, evaluate."""
    pipe = Pipeline(out)
    write_run_meta(out, "pipeline", config.to_dict(), config.distill.seed)
    k_corpus = _key("gen-corpus", config.synth.to_dict())
    k_teacher = _key("train-teacher", config.teacher.to_dict(), k_corpus)
    k_labels = _key("pseudolabel", k_teacher)
    k_filter = _key("filter", config.distill.lambda_threshold, k_labels)
    k_init = _key("init-student", config.student_el, config.student_dl, k_teacher)
    k_distill = _key("distill", config.distill.to_dict(), k_filter, k_init)
    k_eval = _key("evaluate", k_distill)

    d_corpus = pipe.stage("gen-corpus", k_corpus, lambda d: write_corpus(d, synth_corpus(config.synth)))
    vocab = Vocab(config.synth.symbols)

    def corpus_split(name):
        return pipe.load("gen-corpus", load_manifest, d_corpus / f"{name}.jsonl")

    def do_teacher(d: Path) -> None:
        try:
            _, tlog = train_teacher(corpus_split("train"), corpus_split("dev"), vocab, config.synth.frame_dim,
                                    config.teacher, d / "teacher.ckpt")
        except BudgetExhausted as exc:
            tlog = exc.log
            tlog.notes.append(str(exc))
            log.warning("%s", exc)
        (d / "log.jsonl").write_text(log_jsonl(tlog), encoding="utf-8")

    d_teacher = pipe.stage("train-teacher", k_teacher, do_teacher)

    def teacher():
        return pipe.load("train-teacher", load_checkpoint, d_teacher / "teacher.ckpt")

    d_labels = pipe.stage("pseudolabel", k_labels, lambda d: write_segments(
        d / "segments.jsonl", pseudo_label(teacher(), corpus_split("train"))))

    def do_filter(d: Path) -> None:
        segs = pipe.load("pseudolabel", read_segments, d_labels / "segments.jsonl")
        kept, frac = filter_by_wer(segs, config.distill.lambda_threshold)
        write_segments(d / "kept.jsonl", kept)
        (d / "summary.json").write_text(canonical_json({"lambda": config.distill.lambda_threshold,
                                                        "kept": len(kept), "retained_fraction": frac}) + "\n",
                                        encoding="utf-8")

    d_filter = pipe.stage("filter", k_filter, do_filter)

    def do_init(d: Path) -> None:
        t = teacher()
        template = t.config.replace(encoder_layers=config.student_el, decoder_layers=config.student_dl)
        save_checkpoint(init_student(t, template), d / "student_init.ckpt")

    d_init = pipe.stage("init-student", k_init, do_init)

    def do_distill(d: Path) -> None:
        kept = pipe.load("filter", read_segments, d_filter / "kept.jsonl")
        frac = json.loads((d_filter / "summary.json").read_text(encoding="utf-8"))["retained_fraction"]
        student0 = pipe.load("init-student", load_checkpoint, d_init / "student_init.ckpt")
        student, dlog = train_distill(teacher(), student0, corpus_split("train"), kept, corpus_split("dev"),
                                      config.distill, frac)
        save_checkpoint(student, d / "student.ckpt")
        (d / "log.jsonl").write_text(log_jsonl(dlog), encoding="utf-8")

    d_distill = pipe.stage("distill", k_distill, do_distill)

    def do_eval(d: Path) -> None:
        student = pipe.load("distill", load_checkpoint, d_distill / "student.ckpt")
        eval_sets = pipe.load("gen-corpus", read_eval_sets, d_corpus, config.synth)
        report = evaluation_report(student, eval_sets, np.dtype(config.distill.compute_dtype))
        (d / "report.tsv").write_text(report.to_tsv(), encoding="utf-8")
        (d / "report.jsonl").write_text(report_jsonl(report), encoding="utf-8")

    d_eval = pipe.stage("evaluate", k_eval, do_eval)
    rows = [json.loads(line) for line in (d_eval / "report.jsonl").read_text(encoding="utf-8").splitlines()]
    return report_from_rows(rows), pipe


def report_from_rows(rows: list[dict]) -> EvalReport:
    entries: dict[str, tuple[str, dict]] = {}
    for r in rows:
        if r["group"] == "average":
            continue
        entries.setdefault(r["dataset"], (r["group"], {}))[1][r["mode"]] = ScorePair(r["wer"], r["cer"])
    return aggregate([(ds, g, modes) for ds, (g, modes) in sorted(entries.items())])
