# Training a teacher and distilling a smaller student
# ===================================================
#
# This is the desk-scale version of the whole recipe. It takes a few
# minutes on one CPU core:
#
#   1. generate 5000 training and 500 dev utterances
#   2. train a 4+4 layer teacher on the references until dev WER < 10
#   3. let the teacher transcribe the training set (pseudo-labels)
#   4. drop pseudo-labels whose WER is above 80
#   5. distill into a 2+2 student initialized from teacher layers 0 and 3
#
# The student never sees a reference transcript during training.

import logging
import time

import numpy as np

from kdasr.data import SynthConfig, synth_corpus
from kdasr.distill import DistillConfig, evaluate, filter_by_wer, pseudo_label, train_distill
from kdasr.model import init_model, init_student
from kdasr.pipeline import TeacherConfig, train_teacher
from kdasr.vocab import Vocab

logging.basicConfig(level=logging.INFO, format="%(message)s")
start = time.time()

synth = SynthConfig(n_train=5000, n_dev=500, n_test=200)
corpus = synth_corpus(synth)
vocab = Vocab(synth.symbols)

teacher, tlog = train_teacher(corpus.train, corpus.dev, vocab, synth.frame_dim, TeacherConfig())
print(f"teacher: {teacher}, dev WER {tlog.dev[-1]['wer']:.2f} after {len(tlog.steps)} steps")

segments = pseudo_label(teacher, corpus.train)
kept, fraction = filter_by_wer(segments, 80)
print(f"kept {len(kept)} of {len(segments)} pseudo-labels ({fraction:.3f})")
print("example:", segments[0].utterance_id, repr(segments[0].teacher_hypothesis), segments[0].wer)

config = DistillConfig(learning_rate=5e-4, batch_size=32, epochs=10, eval_every=5,
                       cache_teacher=True, compute_dtype="float32")
template = teacher.config.replace(encoder_layers=2, decoder_layers=2)
student, log = train_distill(teacher, init_student(teacher, template), corpus.train, kept, corpus.dev,
                             config, fraction)

# The same budget from a random start, for comparison
scratch, slog = train_distill(teacher, init_model(template, 1000, vocab), corpus.train, kept, corpus.dev,
                              config, fraction)

first = log.steps[0]
print(f"step 0: L_KL {first['l_kl']:.2f}  L_PL {first['l_pl']:.2f}  L_KD {first['l_kd']:.2f}")
print(f"step 0 KL from a random start: {slog.steps[0]['l_kl']:.2f}")
for name, model in (("teacher", teacher), ("student", student), ("random-init", scratch)):
    score, _ = evaluate(model, corpus.test, dtype=np.float32)
    print(f"{name:12s} {model.num_parameters():7d} params  test WER {score.wer:6.2f}  CER {score.cer:6.2f}")
print(f"{time.time() - start:.0f} s")
