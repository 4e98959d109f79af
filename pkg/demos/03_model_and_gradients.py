# The encoder-decoder and its hand-written gradients
# ==================================================
#
# The model is a small pre-LN transformer written directly in numpy. There
# is no autodiff, so the backward pass is checked against central finite
# differences before anything is trained with it.

import numpy as np

from kdasr.model import (ModelConfig, init_model, make_batch, forward, loss_gradients, greedy_decode,
                         select_layers, init_student_from_teacher)
from kdasr.distill import cross_entropy_objective

cfg = ModelConfig(vocab_size=12, frame_dim=6, d_model=16, n_heads=2,
                  encoder_layers=2, decoder_layers=2, ffn_dim=32, max_target_len=10)
model = init_model(cfg, seed=0).astype(np.float64)
print(model)

rng = np.random.default_rng(0)
examples = [(rng.normal(size=(5, 6)), [3, 4, 5]), (rng.normal(size=(7, 6)), [6, 7])]
batch = make_batch(cfg, examples)
print("decoder input", batch.dec_in.tolist())
print("labels       ", batch.labels.tolist())

# One row of next-token probabilities per prefix, BOS included
p = forward(model, *examples[0])
print(p.shape, p.sum(axis=1).round(6))

loss, grads = loss_gradients(model, batch, cross_entropy_objective())
eps = 1e-5
worst = 0.0
for name in ["encoder.in.w", "decoder.layers.1.cross_attn.wq", "decoder.embed", "out.b"]:
    arr = model.params[name]
    idx = tuple(int(rng.integers(s)) for s in arr.shape)
    old = arr[idx]
    arr[idx] = old + eps
    up, _ = loss_gradients(model, batch, cross_entropy_objective())
    arr[idx] = old - eps
    down, _ = loss_gradients(model, batch, cross_entropy_objective())
    arr[idx] = old
    num = (up - down) / (2 * eps)
    rel = abs(num - grads[name][idx]) / max(abs(num), abs(grads[name][idx]))
    worst = max(worst, rel)
    print(f"{name:32s} numeric {num: .6e} analytic {grads[name][idx]: .6e}")
print("worst relative error", worst)

# Greedy decoding of an untrained model is noise, but it stops at max length.
print("untrained transcript:", greedy_decode(model, examples[0][0]))

# A student with fewer layers copies maximally spaced teacher layers:
print("12 -> 6 layers:", select_layers(12, 6))
print(" 4 -> 2 layers:", select_layers(4, 2))
teacher = init_model(cfg.replace(encoder_layers=4, decoder_layers=4), seed=1)
student = init_student_from_teacher(teacher, 2, 2)
same = np.array_equal(student.params["encoder.layers.1.ffn.w1"], teacher.params["encoder.layers.3.ffn.w1"])
print("student layer 1 is teacher layer 3:", same)
