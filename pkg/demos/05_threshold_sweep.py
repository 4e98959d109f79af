# Quality versus quantity of pseudo-labels
# ========================================
#
# A good teacher makes few mistakes, so filtering its pseudo-labels by WER
# removes almost nothing. To see the trade-off we hand the teacher noisier
# frames than it was trained on, then sweep the WER threshold lambda.
# Lower lambda means cleaner but fewer training segments.
#
# Pass a teacher checkpoint (e.g. one saved by `kdasr train-teacher`) as
# the first argument, or the script trains one first (about 90 s).

import sys

import numpy as np

from kdasr.data import SynthConfig, add_noise, synth_corpus
from kdasr.distill import DistillConfig, pseudo_label, results_tsv, threshold_sweep
from kdasr.model import load_checkpoint
from kdasr.pipeline import TeacherConfig, train_teacher
from kdasr.vocab import Vocab

synth = SynthConfig(n_train=5000, n_dev=500, n_test=200)
corpus = synth_corpus(synth)
if len(sys.argv) > 1:
    teacher = load_checkpoint(sys.argv[1])
else:
    teacher, _ = train_teacher(corpus.train, corpus.dev, Vocab(synth.symbols), synth.frame_dim, TeacherConfig())

noisy = add_noise(corpus.train, 0.8)
segments = pseudo_label(teacher, noisy)
wers = np.array([s.wer for s in segments])
print(f"pseudo-label WER: mean {wers.mean():.1f}, median {np.median(wers):.1f}")
for lam in (10, 20, 40, 80):
    print(f"  lambda {lam:3d} keeps {np.mean(wers <= lam):.3f}")

config = DistillConfig(learning_rate=5e-4, batch_size=32, epochs=10, eval_every=10,
                       cache_teacher=True, compute_dtype="float32")
template = teacher.config.replace(encoder_layers=2, decoder_layers=2)
results = threshold_sweep(teacher, template, noisy, corpus.dev, config, [None, 80, 40, 20, 10],
                          eval_sets=[("synth-test", "benchmark", corpus.test),
                                     ("ALG", "in-house", corpus.dialects["ALG"])],
                          segments=segments)
print(results_tsv(results, "lambda"))
