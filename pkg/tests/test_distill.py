import math

import numpy as np
import pytest

from kdasr.data import SynthConfig, synth_corpus
from kdasr.distill import (DEFAULT_LAMBDAS, DistillConfig, DistillObjective, PseudoLabeledSegment, TeacherCache,
                           data_scaling, filter_by_wer, kd_loss, kl_loss, pl_loss, pseudo_label, read_segments,
                           results_tsv, threshold_sweep, train_distill, write_segments)
from kdasr.errors import LengthMismatch, NonFiniteLoss, SizeExceedsCorpus, TokenOutOfRange
from kdasr.model import ModelConfig, forward_logits, init_model, init_student, loss_gradients, make_batch, softmax
from kdasr.optim import Adam, clip_by_global_norm, constant_with_warmup
from kdasr.vocab import Vocab


def _dirichlet(rng, shape, conc=1.0):
    x = rng.gamma(conc, size=shape) + 1e-12
    return x / x.sum(-1, keepdims=True)


# --- loss identities --------------------------------------------------------

def test_kl_of_identical_distributions_is_zero():
    rng = np.random.default_rng(0)
    for _ in range(200):
        p = _dirichlet(rng, (int(rng.integers(1, 9)), int(rng.integers(2, 12))))
        assert abs(kl_loss(p, p)) <= 1e-9


def test_kl_non_negative_over_10k_pairs():
    rng = np.random.default_rng(1)
    q = _dirichlet(rng, (10_000, 7), 0.5)
    p = _dirichlet(rng, (10_000, 7), 0.5)
    per_pair = [kl_loss(q[i:i + 1], p[i:i + 1]) for i in range(10_000)]
    assert min(per_pair) >= -1e-12


def test_kl_hand_value_and_zero_teacher_entries():
    q = np.array([[0.5, 0.5, 0.0]])
    p = np.array([[0.25, 0.25, 0.5]])
    assert kl_loss(q, p) == pytest.approx(math.log(2))
    assert math.isinf(kl_loss(np.array([[1.0, 0.0]]), np.array([[0.0, 1.0]])))


def test_pl_loss_values_and_errors():
    p = np.array([[0.5, 0.25, 0.25], [0.1, 0.8, 0.1]])
    assert pl_loss(p, [0, 1]) == pytest.approx(-math.log(0.5) - math.log(0.8))
    with pytest.raises(LengthMismatch):
        pl_loss(p, [0])
    with pytest.raises(TokenOutOfRange):
        pl_loss(p, [0, 3])
    with pytest.raises(LengthMismatch):
        kl_loss(p, p[:1])


def test_losses_average_over_sequences_and_respect_mask():
    rng = np.random.default_rng(2)
    q, p = _dirichlet(rng, (2, 4, 5)), _dirichlet(rng, (2, 4, 5))
    mask = np.array([[1, 1, 1, 0], [1, 1, 0, 0]], dtype=bool)
    expect = (kl_loss(q[0, :3], p[0, :3]) + kl_loss(q[1, :2], p[1, :2])) / 2
    assert kl_loss(q, p, mask) == pytest.approx(expect)
    y = rng.integers(0, 5, size=(2, 4))
    expect = (pl_loss(p[0, :3], y[0, :3]) + pl_loss(p[1, :2], y[1, :2])) / 2
    assert pl_loss(p, y, mask) == pytest.approx(expect)


def test_kd_loss_default_weights():
    assert kd_loss(2.0, 3.0) == pytest.approx(0.8 * 2.0 + 1.0 * 3.0)
    assert kd_loss(2.0, 3.0, DistillConfig(alpha_kl=0.0)) == 3.0


TINY = ModelConfig(vocab_size=9, frame_dim=5, d_model=8, n_heads=2, encoder_layers=2, decoder_layers=2,
                   ffn_dim=12, max_target_len=12, max_source_len=20)


def _batch(rng, n=3):
    ex = [(rng.normal(size=(int(rng.integers(3, 7)), 5)), [int(t) for t in rng.integers(3, 9, int(rng.integers(1, 5)))])
          for _ in range(n)]
    return make_batch(TINY, ex)


def test_objective_matches_probability_losses():
    rng = np.random.default_rng(3)
    batch = _batch(rng)
    logits = rng.normal(size=batch.labels.shape + (9,))
    q = _dirichlet(rng, logits.shape)
    obj = DistillObjective(q)
    loss, _ = obj(logits, batch)
    p = softmax(logits)
    l_kl = kl_loss(q, p, batch.label_mask)
    l_pl = pl_loss(p, batch.labels, batch.label_mask)
    assert obj.components[0] == pytest.approx(l_kl, rel=1e-10)
    assert obj.components[1] == pytest.approx(l_pl, rel=1e-10)
    assert loss == pytest.approx(0.8 * l_kl + 1.0 * l_pl, rel=1e-12)


def test_objective_logit_gradient_numerically():
    rng = np.random.default_rng(4)
    batch = _batch(rng, 2)
    logits = rng.normal(size=batch.labels.shape + (9,))
    obj = DistillObjective(_dirichlet(rng, logits.shape), 0.7, 1.3)
    _, g = obj(logits, batch)
    eps = 1e-6
    for _ in range(40):
        idx = tuple(int(rng.integers(s)) for s in logits.shape)
        up, down = logits.copy(), logits.copy()
        up[idx] += eps
        down[idx] -= eps
        num = (obj(up, batch)[0] - obj(down, batch)[0]) / (2 * eps)
        assert num == pytest.approx(g[idx], abs=1e-7)


def test_gradient_is_linear_in_the_weights():
    rng = np.random.default_rng(5)
    model = init_model(TINY, 0)
    batch = _batch(rng)
    q = softmax(forward_logits(init_model(TINY, 1), batch))
    _, g_kl = loss_gradients(model, batch, DistillObjective(q, 1.0, 0.0))
    _, g_pl = loss_gradients(model, batch, DistillObjective(q, 0.0, 1.0))
    for a_kl, a_pl in [(0.8, 1.0), (0.3, 2.5), (0.0, 1.0)]:
        _, g = loss_gradients(model, batch, DistillObjective(q, a_kl, a_pl))
        for k in g:
            np.testing.assert_allclose(g[k], a_kl * g_kl[k] + a_pl * g_pl[k], rtol=1e-9, atol=1e-12)


def test_self_distillation_kl_is_zero():
    rng = np.random.default_rng(6)
    model = init_model(TINY, 0)
    batch = _batch(rng)
    q = softmax(forward_logits(model, batch))
    obj = DistillObjective(q, 1.0, 0.0)
    loss, grads = loss_gradients(model, batch, obj)
    assert abs(loss) < 1e-9
    assert max(float(np.abs(g).max()) for g in grads.values()) < 1e-9


def test_objective_requires_teacher_when_kl_weighted():
    with pytest.raises(ValueError):
        DistillObjective(None, 0.8, 1.0)


# --- filtering --------------------------------------------------------------

def _random_segments(rng, n):
    segs = []
    for i in range(n):
        r = rng.random()
        if r < 0.05:
            w = None
        elif r < 0.15:
            w = float(rng.choice([10, 20, 40, 80]))  # exactly on a threshold
        else:
            w = float(rng.exponential(40))
        segs.append(PseudoLabeledSegment(f"u{i:05d}", "", [], w, w is not None))
    return segs


def test_filter_laws_on_10k_segments():
    rng = np.random.default_rng(7)
    segs = _random_segments(rng, 10_000)
    scored = [s for s in segs if s.wer is not None]
    prev_ids, prev_frac = None, -1.0
    for lam in [5, 10, 20, 40, 80, 160]:
        kept, frac = filter_by_wer(segs, lam)
        ids = {s.utterance_id for s in kept}
        assert ids == {s.utterance_id for s in scored if s.wer <= lam}
        boundary = {s.utterance_id for s in scored if s.wer == lam}
        assert boundary <= ids
        assert frac == len(kept) / len(scored)
        if prev_ids is not None:
            assert prev_ids <= ids and prev_frac <= frac
        prev_ids, prev_frac = ids, frac
        assert all(s.kept for s in kept)
    kept, frac = filter_by_wer(segs, None)
    assert frac == 1.0 and len(kept) == len(scored)


def test_filter_does_not_mutate_inputs():
    segs = [PseudoLabeledSegment("a", "x", [3], 50.0, False)]
    kept, _ = filter_by_wer(segs, 80)
    assert kept[0].kept and not segs[0].kept
    assert filter_by_wer([], 10) == ([], 1.0)


def test_segments_round_trip(tmp_path):
    segs = _random_segments(np.random.default_rng(8), 20)
    segs[0].diagnostic = "EmptyReference: x"
    segs[1].teacher_hypothesis = "كتب قلم"
    write_segments(tmp_path / "s.jsonl", segs)
    assert read_segments(tmp_path / "s.jsonl") == segs


# --- schedule and optimizer -------------------------------------------------

def test_warmup_schedule():
    assert constant_with_warmup(0, 1e-3, 10) == 0.0
    assert constant_with_warmup(5, 1e-3, 10) == pytest.approx(5e-4)
    assert constant_with_warmup(10, 1e-3, 10) == 1e-3
    assert constant_with_warmup(0, 1e-3, 0) == 1e-3


def test_clipping():
    g = {"a": np.array([3.0, 0.0]), "b": np.array([4.0])}
    assert clip_by_global_norm(g, 1.0) == pytest.approx(5.0)
    assert math.sqrt(sum((v ** 2).sum() for v in g.values())) == pytest.approx(1.0, abs=1e-6)
    g = {"a": np.array([0.3])}
    clip_by_global_norm(g, 1.0)
    assert g["a"][0] == 0.3


def test_adam_first_step_moves_by_lr():
    params = {"w": np.array([1.0, -2.0], dtype=np.float32)}
    Adam(params).step(params, {"w": np.array([0.5, -3.0])}, 0.1)
    np.testing.assert_allclose(params["w"], [0.9, -1.9], rtol=1e-6)
    assert params["w"].dtype == np.float32


# --- config -----------------------------------------------------------------

def test_config_parsing():
    cfg = DistillConfig.from_text("# comment\nlambda_threshold = none\nlearning_rate = 3e-4\n"
                                  "cache_teacher = true\nepochs = 2  # trailing\n")
    assert cfg.lambda_threshold is None and cfg.learning_rate == 3e-4
    assert cfg.cache_teacher is True and cfg.epochs == 2
    with pytest.raises(ValueError):
        DistillConfig.from_text("bogus = 1")
    with pytest.raises(ValueError):
        DistillConfig.from_text("lambda_threshold 80")
    with pytest.raises(ValueError):
        DistillConfig(lambda_threshold=0)
    with pytest.raises(ValueError):
        DistillConfig(compute_dtype="float16")


def test_defaults():
    cfg = DistillConfig()
    assert (cfg.alpha_kl, cfg.alpha_pl, cfg.lambda_threshold) == (0.8, 1.0, 80.0)
    assert (cfg.learning_rate, cfg.warmup_steps, cfg.batch_size, cfg.epochs) == (1e-4, 50, 128, 10)
    assert DEFAULT_LAMBDAS == (10, 20, 40, 80, None)


# --- end-to-end on a tiny corpus --------------------------------------------

@pytest.fixture(scope="module")
def tiny():
    corpus = synth_corpus(SynthConfig(n_train=48, n_dev=8, n_test=8, duplication=0.0))
    vocab = Vocab.default()
    cfg = ModelConfig(vocab_size=len(vocab), frame_dim=16, d_model=8, n_heads=2, encoder_layers=2,
                      decoder_layers=2, ffn_dim=16, max_target_len=40, max_source_len=64)
    teacher = init_model(cfg, 0, vocab)
    segments = pseudo_label(teacher, corpus.train)
    return corpus, teacher, segments


FAST = DistillConfig(batch_size=16, epochs=2, warmup_steps=2, learning_rate=1e-3, eval_every=1)


def test_pseudo_labels_are_sorted_and_scored(tiny):
    corpus, _, segments = tiny
    assert [s.utterance_id for s in segments] == sorted(u.id for u in corpus.train)
    assert all(s.wer is not None and s.wer >= 0 and s.kept for s in segments)


def test_pseudo_label_flags_unprocessable_utterances(tiny):
    corpus, teacher, _ = tiny
    u = corpus.train[0]
    long = type(u)("zz", np.zeros((65, 16), dtype=np.float32), u.reference, u.dataset)
    seg = pseudo_label(teacher, [long])[0]
    assert not seg.kept and seg.wer is None and seg.diagnostic.startswith("SequenceTooLong")


def test_distill_logs_identity_and_is_deterministic(tiny):
    corpus, teacher, segments = tiny
    student = init_student(teacher, teacher.config.replace(encoder_layers=1, decoder_layers=1))
    kept, frac = filter_by_wer(segments, None)
    _, a = train_distill(teacher, student, corpus.train, kept, corpus.dev, FAST, frac)
    _, b = train_distill(teacher, student, corpus.train, kept, corpus.dev, FAST, frac)
    assert len(a.steps) == 2 * math.ceil(48 / 16)
    for s in a.steps:
        assert abs(s["l_kd"] - (0.8 * s["l_kl"] + 1.0 * s["l_pl"])) <= 1e-6
    assert a.loss_sequence() == b.loss_sequence()
    assert a.dev == b.dev and len(a.dev) == 2
    assert a.steps[0]["lr"] == 0.0


def test_cache_gives_identical_training(tiny):
    corpus, teacher, segments = tiny
    student = init_student(teacher, teacher.config)
    _, plain = train_distill(teacher, student, corpus.train, segments, (), FAST)
    cache = TeacherCache(teacher)
    _, cached = train_distill(teacher, student, corpus.train, segments, (), FAST, cache=cache)
    assert len(cache) == len(segments)
    np.testing.assert_allclose([s["l_kd"] for s in cached.steps], [s["l_kd"] for s in plain.steps], rtol=1e-12)


def test_distill_leaves_student_untouched(tiny):
    corpus, teacher, segments = tiny
    student = init_student(teacher, teacher.config)
    before = {k: v.copy() for k, v in student.params.items()}
    trained, _ = train_distill(teacher, student, corpus.train, segments, (), FAST.replace(epochs=1))
    assert all(np.array_equal(before[k], student.params[k]) for k in before)
    assert any(not np.array_equal(before[k], trained.params[k]) for k in before)


def test_empty_training_set_is_a_note(tiny):
    corpus, teacher, _ = tiny
    student = init_student(teacher, teacher.config)
    out, lg = train_distill(teacher, student, corpus.train, [], (), FAST, 0.0)
    assert lg.steps == [] and lg.notes
    assert all(np.array_equal(out.params[k], student.params[k]) for k in student.params)


def test_non_finite_loss_reports_step(tiny):
    corpus, teacher, segments = tiny
    student = init_student(teacher, teacher.config)
    student.params["out.b"][5] = np.inf
    with pytest.raises(NonFiniteLoss) as info:
        train_distill(teacher, student, corpus.train, segments, (), FAST)
    assert info.value.step == 0


def test_sweep_shape(tiny):
    corpus, teacher, segments = tiny
    tpl = teacher.config.replace(encoder_layers=1, decoder_layers=1)
    cfg = FAST.replace(epochs=1, cache_teacher=True)
    lams = (200, 400, None)
    results = threshold_sweep(teacher, tpl, corpus.train, corpus.dev, cfg, lams,
                              eval_sets=[("test", "benchmark", corpus.test)], segments=segments)
    assert [r.label for r in results] == ["200", "400", "none"]
    fracs = [r.retained_fraction for r in results]
    assert fracs == sorted(fracs) and fracs[-1] == 1.0
    table = results_tsv(results, "lambda").splitlines()
    assert table[0].split("\t") == ["lambda", "filtered_pct", "retained_fraction", "n_train", "dataset", "group",
                                    "wer", "cer"]
    assert len(table) == 1 + 3 * 4


def test_scaling_sizes(tiny):
    corpus, teacher, segments = tiny
    tpl = teacher.config.replace(encoder_layers=1, decoder_layers=1)
    cfg = FAST.replace(epochs=1, lambda_threshold=None)
    results = data_scaling(teacher, tpl, corpus.train, (), cfg, [16, 32], segments=segments)
    assert [r.n_train for r in results] == [16, 32]
    with pytest.raises(SizeExceedsCorpus):
        data_scaling(teacher, tpl, corpus.train, (), cfg, [49], segments=segments)
