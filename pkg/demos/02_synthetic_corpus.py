# A synthetic speech corpus
# =========================
#
# Real audio is out of reach on a desk CPU, so "speech" here is a sequence of
# feature frames: each character has a fixed random embedding, every frame
# gets Gaussian noise, and frames may be repeated to vary the duration.
# Dialect test sets swap a few characters in both text and frames.

import numpy as np

from kdasr.data import (SynthConfig, synth_corpus, oracle_decode, corpus_stats, stats_table,
                        add_noise, sample_mixture)
from kdasr.metrics import score_corpus
from kdasr.textnorm import NormalizationMode

cfg = SynthConfig(n_train=500, n_dev=50, n_test=50)
corpus = synth_corpus(cfg)
u = corpus.train[0]
print(u.id, repr(u.reference), u.frames.shape)

# Nearest-embedding decoding of single frames is a cheap sanity oracle.
print("oracle:", repr(oracle_decode(u.frames, corpus.embeddings, collapse=True)))

# How hard is the task at a given noise level?  Score the oracle on 300 utterances.
O = NormalizationMode.ORTHOGRAPHIC
for sigma in (0.0, 0.5, 1.0, 2.0):
    noisy = add_noise(corpus.train[:300], sigma)
    pairs = [(v.id, v.reference, oracle_decode(v.frames, corpus.embeddings, collapse=True)) for v in noisy]
    print(f"extra noise {sigma:.1f}: oracle WER {score_corpus(pairs, O)[0].wer:6.1f}")

# Corpus statistics in the usual per-dialect layout
dialect_utts = [v for utts in corpus.dialects.values() for v in utts]
print(stats_table(dialect_utts))
print(corpus_stats(corpus.train))

# Nested subsamples: the 100-utterance draw is a prefix of the 300 draw.
small = sample_mixture([corpus.train], 100, seed=3)
large = sample_mixture([corpus.train], 300, seed=3)
print("nested:", [v.id for v in small] == [v.id for v in large[:100]])
