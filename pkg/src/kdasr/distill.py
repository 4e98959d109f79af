"""Pseudo-labeling, WER filtering, distillation losses, training loop and experiment harnesses.

The student objective is ``alpha_kl * L_KL + alpha_pl * L_PL`` where ``L_KL``
sums ``KL(teacher || student)`` over the pseudo-label positions and ``L_PL`` is
the negative log-likelihood of the pseudo-label tokens. Both are summed per
sequence and averaged over the batch.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .data import Utterance, sample_mixture
from .errors import EmptyReference, KDError, LengthMismatch, NonFiniteLoss, TokenOutOfRange
from .metrics import ScorePair, aggregate, score_corpus, wer
from .model import (
    Batch,
    ModelConfig,
    SeqModel,
    _check_example,
    forward_logits,
    greedy_decode_batch,
    init_student,
    log_softmax,
    loss_gradients,
    make_batch,
    softmax,
)
from .optim import Adam, clip_by_global_norm, constant_with_warmup
from .textnorm import NormalizationMode

log = logging.getLogger(__name__)

ND = NormalizationMode.NORMALIZED_NO_DIACRITICS
DEFAULT_LAMBDAS: tuple[float | None, ...] = (10, 20, 40, 80, None)


# ---------------------------------------------------------------------------
# configuration


@dataclass
class DistillConfig:
    lambda_threshold: float | None = 80.0
    alpha_kl: float = 0.8
    alpha_pl: float = 1.0
    learning_rate: float = 1e-4
    warmup_steps: int = 50
    scheduler: str = "constant_with_warmup"
    batch_size: int = 128
    max_label_length: int = 225
    epochs: int = 10
    seed: int = 0
    max_grad_norm: float | None = 1.0
    eval_every: int = 1
    cache_teacher: bool = False
    compute_dtype: str = "float64"

    def __post_init__(self):
        if self.alpha_kl < 0 or self.alpha_pl < 0:
            raise ValueError("alpha weights must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.lambda_threshold is not None and self.lambda_threshold <= 0:
            raise ValueError("lambda_threshold must be positive or None")
        if self.compute_dtype not in ("float64", "float32"):
            raise ValueError("compute_dtype must be float64 or float32")
        if self.scheduler != "constant_with_warmup":
            raise ValueError(f"unsupported scheduler {self.scheduler!r}")

    def replace(self, **changes) -> "DistillConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_file(cls, path: str | Path) -> "DistillConfig":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))

    @classmethod
    def from_text(cls, text: str) -> "DistillConfig":
        """Parse flat ``key = value`` lines; ``#`` starts a comment."""
        return cls(**parse_flat_config(text, cls))


def parse_flat_config(text: str, cls) -> dict:
    types = {f.name: f.type for f in dataclasses.fields(cls)}
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        out[key] = _coerce(value, str(types[key]))
    return out


def _coerce(value: str, typ: str):
    if value.lower() in ("none", "null", ""):
        return None
    if typ.startswith("tuple"):
        return tuple(int(v) for v in value.split(","))
    if typ.startswith("dict"):
        return json.loads(value)
    if typ.startswith("bool"):
        return value.lower() in ("1", "true", "yes", "on")
    if typ.startswith("int"):
        return int(value)
    if typ.startswith("float"):
        return float(value)
    return value


# ---------------------------------------------------------------------------
# losses on probability distributions


def _as_batch(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x[None] if x.ndim == 2 else x


def kl_loss(teacher: np.ndarray, student: np.ndarray, mask: np.ndarray | None = None) -> float:
    """Sum over positions of ``KL(teacher_i || student_i)``, averaged over sequences.

    Accepts ``(T, V)`` or ``(B, T, V)`` distributions; ``mask`` marks valid positions.
    """
    q, p = _as_batch(teacher), _as_batch(student)
    if q.shape != p.shape:
        raise LengthMismatch(f"teacher {q.shape} vs student {p.shape}")
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(q > 0, q * (np.log(q) - np.log(p)), 0.0).sum(-1)
    if mask is not None:
        terms = terms * _as_mask(mask, terms.shape)
    return float(terms.sum() / q.shape[0])


def pl_loss(student: np.ndarray, tokens: np.ndarray | Sequence[int], mask: np.ndarray | None = None) -> float:
    """Negative log-likelihood of ``tokens`` under ``student``, averaged over sequences."""
    p = _as_batch(student)
    y = np.asarray(tokens)
    y = y[None] if y.ndim == 1 else y
    if y.shape != p.shape[:2]:
        raise LengthMismatch(f"{y.shape[-1]} tokens vs {p.shape[1]} distributions")
    if y.size and (y.min() < 0 or y.max() >= p.shape[-1]):
        raise TokenOutOfRange(f"token ids must lie in [0, {p.shape[-1]})")
    with np.errstate(divide="ignore"):
        nll = -np.log(np.take_along_axis(p, y[..., None], -1)[..., 0])
    if mask is not None:
        nll = nll * _as_mask(mask, nll.shape)
    return float(nll.sum() / p.shape[0])


def _as_mask(mask, shape) -> np.ndarray:
    m = np.asarray(mask, dtype=bool)
    return (m[None] if m.ndim == 1 else m).reshape(shape)


def kd_loss(l_kl: float, l_pl: float, config: DistillConfig | None = None) -> float:
    config = config or DistillConfig()
    return config.alpha_kl * l_kl + config.alpha_pl * l_pl


# ---------------------------------------------------------------------------
# objectives on logits (used by model.loss_gradients)


class DistillObjective:
    """``alpha_kl * KL(teacher || student) + alpha_pl * NLL(labels)`` on a padded batch.

    ``teacher_probs`` has the batch's ``(B, T, V)`` shape; it may be omitted when
    ``alpha_kl`` is zero. After each call ``components`` holds ``(L_KL, L_PL, L_KD)``.
    """

    def __init__(self, teacher_probs: np.ndarray | None, alpha_kl: float = 0.8, alpha_pl: float = 1.0):
        if teacher_probs is None and alpha_kl:
            raise ValueError("teacher distributions required when alpha_kl > 0")
        self.teacher_probs = teacher_probs
        self.alpha_kl = alpha_kl
        self.alpha_pl = alpha_pl
        self.components = (math.nan, math.nan, math.nan)

    def __call__(self, logits: np.ndarray, batch: Batch) -> tuple[float, np.ndarray]:
        b = batch.size
        mask = batch.label_mask[..., None]
        logp = log_softmax(logits)
        p = np.exp(logp)
        onehot = np.zeros_like(logits)
        np.put_along_axis(onehot, batch.labels[..., None], 1.0, -1)
        l_pl = float(-(logp * onehot * mask).sum() / b)
        grad = self.alpha_pl * (p - onehot)
        l_kl = 0.0
        if self.teacher_probs is not None:
            q = self.teacher_probs
            with np.errstate(divide="ignore", invalid="ignore"):
                kl = np.where(q > 0, q * (np.log(q) - logp), 0.0)
            l_kl = float((kl * mask).sum() / b)
            grad = grad + self.alpha_kl * (p - q)
        l_kd = self.alpha_kl * l_kl + self.alpha_pl * l_pl
        self.components = (l_kl, l_pl, l_kd)
        return l_kd, grad * mask / b


def cross_entropy_objective() -> DistillObjective:
    return DistillObjective(None, alpha_kl=0.0, alpha_pl=1.0)


def teacher_distributions(teacher: SeqModel, batch: Batch) -> np.ndarray:
    return softmax(forward_logits(teacher, batch))


# ---------------------------------------------------------------------------
# pseudo-labels


@dataclass
class PseudoLabeledSegment:
    utterance_id: str
    teacher_hypothesis: str
    tokens: list[int]
    wer: float | None
    kept: bool
    diagnostic: str | None = None

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), ensure_ascii=False, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "PseudoLabeledSegment":
        return cls(**json.loads(line))


def write_segments(path: str | Path, segments: Iterable[PseudoLabeledSegment]) -> None:
    Path(path).write_text("".join(s.to_json() + "\n" for s in segments), encoding="utf-8")


def read_segments(path: str | Path) -> list[PseudoLabeledSegment]:
    with open(path, encoding="utf-8") as fh:
        return [PseudoLabeledSegment.from_json(line) for line in fh if line.strip()]


def decode_texts(model: SeqModel, utts: Sequence[Utterance], batch_size: int = 256,
                 dtype=np.float64) -> list[list[int]]:
    """Greedy transcripts in input order; batches are formed from length-sorted utterances."""
    order = sorted(range(len(utts)), key=lambda i: (len(utts[i].frames), i))
    out: list[list[int] | None] = [None] * len(utts)
    for start in range(0, len(order), batch_size):
        chunk = order[start:start + batch_size]
        for i, toks in zip(chunk, greedy_decode_batch(model, [utts[i].frames for i in chunk], dtype=dtype)):
            out[i] = toks
    return out


def pseudo_label(teacher: SeqModel, utts: Sequence[Utterance], batch_size: int = 256,
                 mode: NormalizationMode = ND) -> list[PseudoLabeledSegment]:
    """Greedy teacher transcripts with their WER against the references.

    Utterances the teacher cannot process, or whose reference normalizes to
    empty while the hypothesis does not, get ``kept=False`` and a diagnostic.
    Output is ordered by utterance id.
    """
    if teacher.vocab is None:
        raise ValueError("teacher has no vocabulary attached")
    ordered = sorted(utts, key=lambda u: u.id)
    segments: dict[str, PseudoLabeledSegment] = {}
    ok = []
    for u in ordered:
        try:
            _check_example(teacher.config, u.frames, [])
        except KDError as exc:
            segments[u.id] = PseudoLabeledSegment(u.id, "", [], None, False, f"{type(exc).__name__}: {exc}")
        else:
            ok.append(u)
    for u, tokens in zip(ok, decode_texts(teacher, ok, batch_size)):
        hyp = teacher.vocab.decode(tokens)
        try:
            score = wer(u.reference, hyp, mode)
        except EmptyReference as exc:
            segments[u.id] = PseudoLabeledSegment(u.id, hyp, tokens, None, False, f"EmptyReference: {exc}")
            continue
        segments[u.id] = PseudoLabeledSegment(u.id, hyp, tokens, score, True)
    return [segments[u.id] for u in ordered]


def filter_by_wer(segments: Sequence[PseudoLabeledSegment], lambda_threshold: float | None
                  ) -> tuple[list[PseudoLabeledSegment], float]:
    """Keep segments with ``wer <= lambda_threshold`` (all when ``None``).

    Segments without a WER (diagnostic records) are never kept and do not
    count toward the retained fraction. Returns fresh segment objects with
    ``kept`` set, plus the retained fraction.
    """
    scored = [s for s in segments if s.wer is not None]
    retained = []
    for s in scored:
        if lambda_threshold is None or s.wer <= lambda_threshold:
            retained.append(dataclasses.replace(s, kept=True))
    frac = len(retained) / len(scored) if scored else 1.0
    return retained, frac


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainingLog:
    steps: list[dict] = field(default_factory=list)
    dev: list[dict] = field(default_factory=list)
    retained_fraction: float | None = None
    notes: list[str] = field(default_factory=list)
    failed_step: int | None = None

    def loss_sequence(self) -> list[tuple[float, float, float]]:
        return [(s["l_kl"], s["l_pl"], s["l_kd"]) for s in self.steps]

    def final_dev_wer(self) -> float | None:
        return self.dev[-1]["wer"] if self.dev else None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def evaluate(model: SeqModel, utts: Sequence[Utterance], mode: NormalizationMode = ND,
             batch_size: int = 256, dtype=np.float64) -> tuple[ScorePair, list[str]]:
    """Greedy-decode ``utts`` and return pooled WER/CER plus the hypotheses (in input order)."""
    if not utts:
        return ScorePair(0.0, 0.0), []
    hyps = [model.vocab.decode(t) for t in decode_texts(model, utts, batch_size, dtype)]
    score, _ = score_corpus([(u.id, u.reference, h) for u, h in zip(utts, hyps)], mode)
    return score, hyps


ObjectiveFactory = Callable[[Batch, Sequence[int]], DistillObjective]


def _epoch_batches(examples, batch_size: int, window: int, rng: np.random.Generator) -> list[list[int]]:
    order = [int(i) for i in rng.permutation(len(examples))]
    if window <= 1:
        return [order[i:i + batch_size] for i in range(0, len(order), batch_size)]
    span = batch_size * window
    batches = []
    for w in range(0, len(order), span):
        chunk = sorted(order[w:w + span], key=lambda i: (len(examples[i][0]), i))
        batches.extend(chunk[j:j + batch_size] for j in range(0, len(chunk), batch_size))
    return [batches[i] for i in rng.permutation(len(batches))]


def fit(model: SeqModel, examples: Sequence[tuple[np.ndarray, list[int]]], make_objective: ObjectiveFactory,
        *, epochs: int, batch_size: int, learning_rate: float, warmup_steps: int, seed: int,
        max_grad_norm: float | None = 1.0, dev: Sequence[Utterance] = (), eval_every: int = 1,
        log_: TrainingLog | None = None, max_steps: int | None = None,
        stop: Callable[[TrainingLog], bool] | None = None, compute_dtype=np.float64,
        bucket_window: int = 16, restore_best: bool = False) -> tuple[SeqModel, TrainingLog]:
    """Adam training over ``(frames, tokens)`` examples; mutates and returns ``model``.

    Each epoch draws a permutation seeded by ``(seed, epoch)``, sorts windows of
    ``bucket_window`` batches by source length to cut padding, and visits the
    resulting batches in a seeded random order. ``make_objective(batch, indices)``
    builds the per-batch objective. With ``restore_best`` the parameters of the
    evaluation with the lowest dev WER are restored at the end.
    """
    log_ = log_ if log_ is not None else TrainingLog()
    if not examples:
        log_.notes.append("empty training set: no steps taken")
        return model, log_
    opt = Adam(model.params)
    step = 0
    best: tuple[float, dict] | None = None
    cfg = model.config
    for epoch in range(epochs):
        for idx in _epoch_batches(examples, batch_size, bucket_window, np.random.default_rng([seed, epoch])):
            if max_steps is not None and step >= max_steps:
                break
            batch = make_batch(cfg, [examples[i] for i in idx])
            objective = make_objective(batch, idx)
            try:
                loss, grads = loss_gradients(model, batch, objective, dtype=compute_dtype)
            except NonFiniteLoss as exc:
                log_.failed_step = step
                log_.notes.append(f"non-finite loss at step {step}")
                raise NonFiniteLoss(str(exc), step) from exc
            lr = constant_with_warmup(step, learning_rate, warmup_steps)
            gnorm = clip_by_global_norm(grads, max_grad_norm)
            opt.step(model.params, grads, lr)
            l_kl, l_pl, l_kd = objective.components
            log_.steps.append({"step": step, "epoch": epoch, "l_kl": l_kl, "l_pl": l_pl, "l_kd": l_kd,
                               "lr": lr, "grad_norm": gnorm})
            step += 1
        if dev and ((epoch + 1) % eval_every == 0 or epoch + 1 == epochs):
            score, _ = evaluate(model, dev, dtype=compute_dtype)
            log_.dev.append({"epoch": epoch, "step": step, "wer": score.wer, "cer": score.cer})
            log.info("epoch %d step %d dev WER %.2f CER %.2f", epoch, step, score.wer, score.cer)
            if restore_best and (best is None or score.wer < best[0]):
                best = (score.wer, {k: v.copy() for k, v in model.params.items()})
            if stop is not None and stop(log_):
                break
        if max_steps is not None and step >= max_steps:
            break
    if best is not None:
        model.params.update(best[1])
        log_.notes.append(f"restored parameters with best dev WER {best[0]:.2f}")
    return model, log_


def _label_examples(train: Sequence[Utterance], labels: Sequence[PseudoLabeledSegment], cfg: ModelConfig,
                    max_label_length: int, log_: TrainingLog):
    by_id = {u.id: u for u in train}
    limit = min(max_label_length, cfg.max_target_len)
    examples, ids = [], []
    too_long = 0
    for seg in sorted(labels, key=lambda s: s.utterance_id):
        if not seg.kept:
            continue
        u = by_id.get(seg.utterance_id)
        if u is None:
            raise KeyError(f"no utterance for pseudo-label {seg.utterance_id!r}")
        if len(seg.tokens) + 1 > limit:
            too_long += 1
            continue
        examples.append((u.frames.astype(np.float64), list(seg.tokens)))
        ids.append(u.id)
    if too_long:
        log_.notes.append(f"dropped {too_long} pseudo-labels longer than {limit - 1} tokens")
    return examples, ids


class TeacherCache:
    """Teacher-forced teacher distributions keyed by utterance id and label tokens.

    One cache can be shared by several distillation runs that use the same
    teacher, e.g. the runs of a threshold sweep.
    """

    def __init__(self, teacher: SeqModel, dtype=np.float64):
        self.teacher = teacher
        self.dtype = dtype
        self._store: dict[tuple[str, tuple[int, ...]], np.ndarray] = {}

    def __len__(self) -> int:
        return len(self._store)

    def batch_probs(self, batch: Batch, keys: Sequence[tuple[str, tuple[int, ...]]],
                    examples: Sequence[tuple[np.ndarray, list[int]]]) -> np.ndarray:
        missing = [i for i, k in enumerate(keys) if k not in self._store]
        if missing:
            sub = make_batch(self.teacher.config, [examples[i] for i in missing])
            probs = softmax(forward_logits(self.teacher, sub, self.dtype))
            for row, i in enumerate(missing):
                self._store[keys[i]] = probs[row, : len(keys[i][1]) + 1].astype(np.float64)
        q = np.zeros(batch.labels.shape + (self.teacher.config.vocab_size,))
        q[..., self.teacher.config.pad_id] = 1.0  # padded rows are masked out of the loss
        for row, k in enumerate(keys):
            q[row, : len(k[1]) + 1] = self._store[k]
        return q


def train_distill(teacher: SeqModel, student: SeqModel, train: Sequence[Utterance],
                  labels: Sequence[PseudoLabeledSegment], dev: Sequence[Utterance],
                  config: DistillConfig, retained_fraction: float | None = None,
                  max_steps: int | None = None, cache: TeacherCache | None = None
                  ) -> tuple[SeqModel, TrainingLog]:
    """Distill ``teacher`` into a copy of ``student`` on the kept pseudo-labels.

    Teacher distributions come from teacher forcing on the pseudo-label tokens.
    They are recomputed per batch unless ``config.cache_teacher`` is set or a
    shared ``cache`` is passed.
    """
    dtype = np.dtype(config.compute_dtype)
    student = student.copy()
    log_ = TrainingLog(retained_fraction=retained_fraction)
    examples, ids = _label_examples(train, labels, student.config, config.max_label_length, log_)
    if cache is None and config.cache_teacher:
        cache = TeacherCache(teacher, dtype)

    def make_objective(batch: Batch, idx: Sequence[int]) -> DistillObjective:
        if config.alpha_kl == 0:
            return DistillObjective(None, 0.0, config.alpha_pl)
        if cache is None:
            q = softmax(forward_logits(teacher, batch, dtype)).astype(np.float64)
        else:
            keys = [(ids[i], tuple(examples[i][1])) for i in idx]
            q = cache.batch_probs(batch, keys, [examples[i] for i in idx])
        return DistillObjective(q, config.alpha_kl, config.alpha_pl)

    return fit(student, examples, make_objective, epochs=config.epochs, batch_size=config.batch_size,
               learning_rate=config.learning_rate, warmup_steps=config.warmup_steps, seed=config.seed,
               max_grad_norm=config.max_grad_norm, dev=dev, eval_every=config.eval_every, log_=log_,
               max_steps=max_steps, compute_dtype=dtype)


def train_supervised(model: SeqModel, train: Sequence[Utterance], dev: Sequence[Utterance], *,
                     epochs: int, batch_size: int, learning_rate: float, warmup_steps: int, seed: int,
                     max_grad_norm: float | None = 1.0, eval_every: int = 1, target_wer: float | None = None,
                     max_steps: int | None = None, compute_dtype=np.float64,
                     restore_best: bool = False) -> tuple[SeqModel, TrainingLog]:
    """Cross-entropy training on the reference transcripts (used to build teachers)."""
    examples = [(u.frames.astype(np.float64), model.vocab.encode(u.reference)) for u in train]
    stop = None
    if target_wer is not None:
        def stop(lg: TrainingLog) -> bool:
            return lg.dev[-1]["wer"] < target_wer
    return fit(model, examples, lambda b, i: cross_entropy_objective(), epochs=epochs, batch_size=batch_size,
               learning_rate=learning_rate, warmup_steps=warmup_steps, seed=seed, max_grad_norm=max_grad_norm,
               dev=dev, eval_every=eval_every, max_steps=max_steps, stop=stop, compute_dtype=compute_dtype,
               restore_best=restore_best)


# ---------------------------------------------------------------------------
# experiment harnesses


@dataclass
class RunResult:
    label: str
    retained_fraction: float
    n_train: int
    dev: ScorePair
    eval_scores: dict[str, ScorePair]
    groups: dict[str, str]
    log: TrainingLog
    student: SeqModel | None = None

    def averages(self) -> dict[str, ScorePair | None]:
        if not self.eval_scores:
            return {}
        rep = aggregate([(k, self.groups[k], v) for k, v in self.eval_scores.items()])
        return {"benchmark": rep.benchmark_average[ND], "in-house": rep.in_house_average[ND],
                "overall": rep.overall_average[ND]}


def _run(teacher, template, train, labels, dev, eval_sets, config, label, fraction, keep_model, cache=None):
    dtype = np.dtype(config.compute_dtype)
    student = init_student(teacher, template)
    student, log_ = train_distill(teacher, student, train, labels, dev, config, fraction, cache=cache)
    dev_score = evaluate(student, dev, dtype=dtype)[0] if dev else ScorePair(math.nan, math.nan)
    scores, groups = {}, {}
    for name, group, utts in eval_sets:
        scores[name], _ = evaluate(student, utts, dtype=dtype)
        groups[name] = group
    n_train = sum(1 for s in labels if s.kept)
    return RunResult(label, fraction, n_train, dev_score, scores, groups, log_, student if keep_model else None)


def _fmt_lambda(lam: float | None) -> str:
    return "none" if lam is None else f"{lam:g}"


def results_tsv(results: Sequence[RunResult], key: str) -> str:
    """Long-format table: one row per run and evaluation set, plus average rows."""
    lines = [f"{key}\tfiltered_pct\tretained_fraction\tn_train\tdataset\tgroup\twer\tcer"]
    for r in results:
        head = f"{r.label}\t{100 * (1 - r.retained_fraction):.1f}\t{r.retained_fraction:.4f}\t{r.n_train}"
        lines.append(f"{head}\tdev\tdev\t{r.dev.wer:.2f}\t{r.dev.cer:.2f}")
        for name in sorted(r.eval_scores):
            sp = r.eval_scores[name]
            lines.append(f"{head}\t{name}\t{r.groups[name]}\t{sp.wer:.2f}\t{sp.cer:.2f}")
        for name, sp in r.averages().items():
            if sp is not None:
                lines.append(f"{head}\t{name}-average\taverage\t{sp.wer:.2f}\t{sp.cer:.2f}")
    return "\n".join(lines) + "\n"


def threshold_sweep(teacher: SeqModel, student_template: ModelConfig, train: Sequence[Utterance],
                    dev: Sequence[Utterance], config: DistillConfig,
                    lambdas: Sequence[float | None] = DEFAULT_LAMBDAS,
                    eval_sets: Sequence[tuple[str, str, Sequence[Utterance]]] = (),
                    segments: Sequence[PseudoLabeledSegment] | None = None,
                    keep_models: bool = False) -> list[RunResult]:
    """One distillation run per threshold, sharing a single set of pseudo-labels."""
    if segments is None:
        segments = pseudo_label(teacher, train)
    cache = TeacherCache(teacher, np.dtype(config.compute_dtype)) if config.cache_teacher else None
    results = []
    for lam in lambdas:
        kept, frac = filter_by_wer(segments, lam)
        log.info("lambda=%s keeps %d segments (%.3f)", _fmt_lambda(lam), len(kept), frac)
        results.append(_run(teacher, student_template, train, kept, dev, eval_sets,
                            config.replace(lambda_threshold=lam), _fmt_lambda(lam), frac, keep_models, cache))
    return results


def data_scaling(teacher: SeqModel, student_template: ModelConfig, train: Sequence[Utterance],
                 dev: Sequence[Utterance], config: DistillConfig, sizes: Sequence[int],
                 eval_sets: Sequence[tuple[str, str, Sequence[Utterance]]] = (),
                 segments: Sequence[PseudoLabeledSegment] | None = None,
                 keep_models: bool = False) -> list[RunResult]:
    """Distill on nested seeded subsamples of ``train`` of each requested size."""
    if segments is None:
        segments = pseudo_label(teacher, train)
    by_id = {s.utterance_id: s for s in segments}
    cache = TeacherCache(teacher, np.dtype(config.compute_dtype)) if config.cache_teacher else None
    results = []
    for size in sizes:
        sample = sample_mixture([sorted(train, key=lambda u: u.id)], size, config.seed)
        subset = [by_id[u.id] for u in sample if u.id in by_id]
        kept, frac = filter_by_wer(subset, config.lambda_threshold)
        results.append(_run(teacher, student_template, sample, kept, dev, eval_sets, config,
                            str(size), frac, keep_models, cache))
    return results
