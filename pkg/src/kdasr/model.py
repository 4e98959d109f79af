"""A small pre-LN encoder-decoder transformer in numpy, with hand-written backprop.

The encoder reads real-valued feature frames through a linear projection; the
decoder is a causal character decoder with cross-attention. Parameters are
stored as float32. Forward and backward passes run in float64 unless a
caller asks for float32.

Token convention: a transcript of ``N`` token ids is fed to the decoder as
``[BOS] + tokens``, producing ``N + 1`` next-token distributions whose labels
are ``tokens + [EOS]``. Distribution ``i`` therefore depends only on
``tokens[:i]``.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import (
    CorruptCheckpoint,
    IncompatibleConfig,
    NonFiniteLoss,
    SequenceTooLong,
    StudentLargerThanTeacher,
    TokenOutOfRange,
)
from .tensorio import read_tensors, write_tensors
from .vocab import Vocab

__all__ = [
    "ModelConfig",
    "SeqModel",
    "Batch",
    "make_batch",
    "init_model",
    "param_shapes",
    "forward",
    "forward_logits",
    "greedy_decode",
    "greedy_decode_batch",
    "loss_gradients",
    "select_layers",
    "init_student_from_teacher",
    "save_checkpoint",
    "load_checkpoint",
]

LN_EPS = 1e-5
_GELU_C = math.sqrt(2.0 / math.pi)


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    frame_dim: int = 16
    d_model: int = 64
    n_heads: int = 4
    encoder_layers: int = 2
    decoder_layers: int = 2
    ffn_dim: int = 128
    max_target_len: int = 225
    max_source_len: int = 1024
    pad_id: int = 0
    bos_id: int = 1
    eos_id: int = 2

    def __post_init__(self):
        if self.d_model % self.n_heads:
            raise ValueError(f"d_model={self.d_model} not divisible by n_heads={self.n_heads}")
        if self.encoder_layers < 1 or self.decoder_layers < 1:
            raise ValueError("need at least one encoder and one decoder layer")
        if self.max_target_len < 1 or self.max_source_len < 1:
            raise ValueError("sequence limits must be positive")
        if self.vocab_size <= max(self.pad_id, self.bos_id, self.eos_id):
            raise ValueError("vocab_size too small for the special token ids")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "ModelConfig":
        return cls(**d)

    def replace(self, **changes) -> "ModelConfig":
        return dataclasses.replace(self, **changes)


# ---------------------------------------------------------------------------
# parameters

# no key bias: softmax is invariant to it, so its gradient is identically zero
_ATTN = ("wq", "bq", "wk", "wv", "bv", "wo", "bo")


def _attn_shapes(prefix: str, d: int) -> dict[str, tuple]:
    out = {}
    for n in _ATTN:
        out[f"{prefix}.{n}"] = (d, d) if n[0] == "w" else (d,)
    return out


def _ln_shapes(prefix: str, d: int) -> dict[str, tuple]:
    return {f"{prefix}.g": (d,), f"{prefix}.b": (d,)}


def _ffn_shapes(prefix: str, d: int, f: int) -> dict[str, tuple]:
    return {f"{prefix}.w1": (d, f), f"{prefix}.b1": (f,), f"{prefix}.w2": (f, d), f"{prefix}.b2": (d,)}


def param_shapes(cfg: ModelConfig) -> dict[str, tuple]:
    d, f = cfg.d_model, cfg.ffn_dim
    s = {"encoder.in.w": (cfg.frame_dim, d), "encoder.in.b": (d,)}
    for i in range(cfg.encoder_layers):
        p = f"encoder.layers.{i}"
        s.update(_ln_shapes(f"{p}.ln1", d))
        s.update(_attn_shapes(f"{p}.self_attn", d))
        s.update(_ln_shapes(f"{p}.ln2", d))
        s.update(_ffn_shapes(f"{p}.ffn", d, f))
    s.update(_ln_shapes("encoder.ln_f", d))
    s["decoder.embed"] = (cfg.vocab_size, d)
    for i in range(cfg.decoder_layers):
        p = f"decoder.layers.{i}"
        s.update(_ln_shapes(f"{p}.ln1", d))
        s.update(_attn_shapes(f"{p}.self_attn", d))
        s.update(_ln_shapes(f"{p}.ln2", d))
        s.update(_attn_shapes(f"{p}.cross_attn", d))
        s.update(_ln_shapes(f"{p}.ln3", d))
        s.update(_ffn_shapes(f"{p}.ffn", d, f))
    s.update(_ln_shapes("decoder.ln_f", d))
    s["out.w"] = (d, cfg.vocab_size)
    s["out.b"] = (cfg.vocab_size,)
    return s


class SeqModel:
    """Model configuration plus a dict of named parameter arrays."""

    def __init__(self, config: ModelConfig, params: dict[str, np.ndarray], vocab: Vocab | None = None):
        self.config = config
        self.params = params
        self.vocab = vocab

    def audit(self) -> None:
        """Check names, shapes and finiteness of every parameter."""
        expected = param_shapes(self.config)
        if set(expected) != set(self.params):
            missing = sorted(set(expected) - set(self.params))
            extra = sorted(set(self.params) - set(expected))
            raise ValueError(f"parameter names differ: missing={missing[:5]} extra={extra[:5]}")
        for name, shape in expected.items():
            arr = self.params[name]
            if arr.shape != shape:
                raise ValueError(f"{name}: shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name}: non-finite values")

    def copy(self) -> "SeqModel":
        return SeqModel(self.config, {k: v.copy() for k, v in self.params.items()}, self.vocab)

    def astype(self, dtype) -> "SeqModel":
        return SeqModel(self.config, {k: v.astype(dtype) for k, v in self.params.items()}, self.vocab)

    def num_parameters(self) -> int:
        return sum(v.size for v in self.params.values())

    def __repr__(self) -> str:
        c = self.config
        return (f"SeqModel(EL={c.encoder_layers}, DL={c.decoder_layers}, d={c.d_model}, "
                f"vocab={c.vocab_size}, params={self.num_parameters()})")


def init_model(cfg: ModelConfig, seed: int = 0, vocab: Vocab | None = None) -> SeqModel:
    """Random initialization: LayerNorm gains 1, biases 0, weights N(0, 1/fan_in)."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in param_shapes(cfg).items():
        leaf = name.rsplit(".", 1)[1]
        if leaf == "g":
            arr = np.ones(shape)
        elif len(shape) == 1:
            arr = np.zeros(shape)
        elif name == "decoder.embed":
            arr = rng.normal(0.0, 1.0, shape)
        else:
            arr = rng.normal(0.0, 1.0 / math.sqrt(shape[0]), shape)
        params[name] = arr.astype(np.float32)
    return SeqModel(cfg, params, vocab)


# ---------------------------------------------------------------------------
# batches


@dataclass
class Batch:
    frames: np.ndarray      # (B, S, F) float64, zero padded
    src_mask: np.ndarray    # (B, S) bool
    dec_in: np.ndarray      # (B, T) int, BOS + tokens, padded
    labels: np.ndarray      # (B, T) int, tokens + EOS, padded
    label_mask: np.ndarray  # (B, T) bool

    @property
    def size(self) -> int:
        return self.frames.shape[0]

    def lengths(self) -> np.ndarray:
        return self.label_mask.sum(axis=1)


def _check_example(cfg: ModelConfig, frames: np.ndarray, tokens: Sequence[int]) -> None:
    if frames.ndim != 2 or frames.shape[1] != cfg.frame_dim:
        raise ValueError(f"frames must have shape (S, {cfg.frame_dim}), got {frames.shape}")
    if len(frames) == 0:
        raise ValueError("empty source")
    if len(frames) > cfg.max_source_len:
        raise SequenceTooLong(f"{len(frames)} source frames > max_source_len={cfg.max_source_len}")
    if len(tokens) + 1 > cfg.max_target_len:
        raise SequenceTooLong(f"{len(tokens)} tokens + BOS > max_target_len={cfg.max_target_len}")
    for t in tokens:
        if not 0 <= t < cfg.vocab_size:
            raise TokenOutOfRange(f"token {t} outside [0, {cfg.vocab_size})")


def make_batch(cfg: ModelConfig, examples: Sequence[tuple[np.ndarray, Sequence[int]]]) -> Batch:
    """Pad ``(frames, tokens)`` pairs into a :class:`Batch`."""
    if not examples:
        raise ValueError("empty batch")
    for frames, tokens in examples:
        _check_example(cfg, np.asarray(frames), tokens)
    b = len(examples)
    s = max(len(f) for f, _ in examples)
    t = max(len(tok) for _, tok in examples) + 1
    frames = np.zeros((b, s, cfg.frame_dim))
    src_mask = np.zeros((b, s), dtype=bool)
    dec_in = np.full((b, t), cfg.pad_id, dtype=np.int64)
    labels = np.full((b, t), cfg.pad_id, dtype=np.int64)
    label_mask = np.zeros((b, t), dtype=bool)
    for i, (f, tok) in enumerate(examples):
        n = len(f)
        frames[i, :n] = f
        src_mask[i, :n] = True
        k = len(tok)
        dec_in[i, 0] = cfg.bos_id
        dec_in[i, 1:k + 1] = tok
        labels[i, :k] = tok
        labels[i, k] = cfg.eos_id
        label_mask[i, :k + 1] = True
    return Batch(frames, src_mask, dec_in, labels, label_mask)


# ---------------------------------------------------------------------------
# primitive layers: forward returns (out, cache), backward takes the cache


def sinusoid(length: int, d: int) -> np.ndarray:
    pos = np.arange(length)[:, None]
    i = np.arange(d // 2)[None, :]
    angle = pos / np.power(10000.0, 2 * i / d)
    pe = np.zeros((length, d))
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle)
    return pe


def _ln_fwd(x, g, b):
    mu = x.mean(-1, keepdims=True)
    xc = x - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(-1, keepdims=True) + LN_EPS)
    xhat = xc * inv
    return xhat * g + b, (xhat, inv, g)


def _ln_bwd(dy, cache):
    xhat, inv, g = cache
    n = xhat.shape[-1]
    dg = (dy * xhat).reshape(-1, n).sum(0)
    db = dy.reshape(-1, n).sum(0)
    dxhat = dy * g
    dx = inv * (dxhat - dxhat.mean(-1, keepdims=True) - xhat * (dxhat * xhat).mean(-1, keepdims=True))
    return dx, dg, db


def _gelu_fwd(x):
    x2 = x * x
    t = np.tanh(_GELU_C * x * (1.0 + 0.044715 * x2))
    return 0.5 * x * (1.0 + t), (x, x2, t)


def _gelu_bwd(dy, cache):
    x, x2, t = cache
    du = _GELU_C * (1.0 + 3 * 0.044715 * x2)
    return dy * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du)


def _lin_bwd(dy, x, w):
    dw = x.reshape(-1, x.shape[-1]).T @ dy.reshape(-1, dy.shape[-1])
    db = dy.reshape(-1, dy.shape[-1]).sum(0)
    return dy @ w.T, dw, db


def _split(x, h):
    b, t, d = x.shape
    return x.reshape(b, t, h, d // h).transpose(0, 2, 1, 3)


def _merge(x):
    b, h, t, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, t, h * dh)


def _attn_fwd(p, pre, xq, xkv, bias, h):
    """Multi-head attention. ``bias`` broadcasts to (B, 1, Tq, Tk): 0 = visible, -inf = hidden."""
    q = _split(xq @ p[pre + ".wq"] + p[pre + ".bq"], h)
    k = _split(xkv @ p[pre + ".wk"], h)
    v = _split(xkv @ p[pre + ".wv"] + p[pre + ".bv"], h)
    scale = 1.0 / math.sqrt(q.shape[-1])
    a = q @ k.transpose(0, 1, 3, 2)
    a *= scale
    a += bias
    a -= a.max(-1, keepdims=True)
    np.exp(a, out=a)
    a /= a.sum(-1, keepdims=True)
    o = _merge(a @ v)
    out = o @ p[pre + ".wo"] + p[pre + ".bo"]
    return out, (xq, xkv, q, k, v, a, o, scale)


def _attn_bwd(dout, p, pre, cache, g):
    xq, xkv, q, k, v, a, o, scale = cache
    h = q.shape[1]
    do, g[pre + ".wo"], g[pre + ".bo"] = _lin_bwd(dout, o, p[pre + ".wo"])
    do = _split(do, h)
    da = do @ v.transpose(0, 1, 3, 2)
    dv = a.transpose(0, 1, 3, 2) @ do
    ds = a * (da - (da * a).sum(-1, keepdims=True)) * scale
    dq = ds @ k
    dk = ds.transpose(0, 1, 3, 2) @ q
    dxq, g[pre + ".wq"], g[pre + ".bq"] = _lin_bwd(_merge(dq), xq, p[pre + ".wq"])
    dk = _merge(dk)
    dxk = dk @ p[pre + ".wk"].T
    g[pre + ".wk"] = xkv.reshape(-1, xkv.shape[-1]).T @ dk.reshape(-1, dk.shape[-1])
    dxv, g[pre + ".wv"], g[pre + ".bv"] = _lin_bwd(_merge(dv), xkv, p[pre + ".wv"])
    return dxq, dxk + dxv


def _ffn_fwd(p, pre, x):
    hpre = x @ p[pre + ".w1"] + p[pre + ".b1"]
    hact, gc = _gelu_fwd(hpre)
    out = hact @ p[pre + ".w2"] + p[pre + ".b2"]
    return out, (x, hact, gc)


def _ffn_bwd(dout, p, pre, cache, g):
    x, hact, gc = cache
    dh, g[pre + ".w2"], g[pre + ".b2"] = _lin_bwd(dout, hact, p[pre + ".w2"])
    dh = _gelu_bwd(dh, gc)
    dx, g[pre + ".w1"], g[pre + ".b1"] = _lin_bwd(dh, x, p[pre + ".w1"])
    return dx


# ---------------------------------------------------------------------------
# full network


def _cast(model: SeqModel, dtype) -> dict[str, np.ndarray]:
    return {k: np.asarray(v, dtype=dtype) for k, v in model.params.items()}


def _bias(visible: np.ndarray, dtype) -> np.ndarray:
    return np.where(visible, 0.0, -np.inf).astype(dtype)


def _encode(p, cfg, frames, src_mask, keep):
    h = cfg.n_heads
    dtype = p["encoder.in.w"].dtype
    frames = frames.astype(dtype, copy=False)
    x = frames @ p["encoder.in.w"] + p["encoder.in.b"]
    x += sinusoid(frames.shape[1], cfg.d_model).astype(dtype)
    kmask = _bias(src_mask[:, None, None, :], dtype)
    caches = []
    for i in range(cfg.encoder_layers):
        pre = f"encoder.layers.{i}"
        a, c1 = _ln_fwd(x, p[pre + ".ln1.g"], p[pre + ".ln1.b"])
        y, c2 = _attn_fwd(p, pre + ".self_attn", a, a, kmask, h)
        x = x + y
        a, c3 = _ln_fwd(x, p[pre + ".ln2.g"], p[pre + ".ln2.b"])
        y, c4 = _ffn_fwd(p, pre + ".ffn", a)
        x = x + y
        if keep:
            caches.append((c1, c2, c3, c4))
    enc, cf = _ln_fwd(x, p["encoder.ln_f.g"], p["encoder.ln_f.b"])
    return enc, (frames, caches, cf) if keep else None


def _encode_bwd(denc, p, cfg, cache, g):
    frames, caches, cf = cache
    dx, g["encoder.ln_f.g"], g["encoder.ln_f.b"] = _ln_bwd(denc, cf)
    for i in reversed(range(cfg.encoder_layers)):
        pre = f"encoder.layers.{i}"
        c1, c2, c3, c4 = caches[i]
        da = _ffn_bwd(dx, p, pre + ".ffn", c4, g)
        dln, g[pre + ".ln2.g"], g[pre + ".ln2.b"] = _ln_bwd(da, c3)
        dx = dx + dln
        dq, dkv = _attn_bwd(dx, p, pre + ".self_attn", c2, g)
        dln, g[pre + ".ln1.g"], g[pre + ".ln1.b"] = _ln_bwd(dq + dkv, c1)
        dx = dx + dln
    _, g["encoder.in.w"], g["encoder.in.b"] = _lin_bwd(dx, frames, p["encoder.in.w"])


def _decode(p, cfg, dec_in, enc, src_mask, keep):
    h = cfg.n_heads
    t = dec_in.shape[1]
    dtype = p["decoder.embed"].dtype
    y = p["decoder.embed"][dec_in] + sinusoid(t, cfg.d_model).astype(dtype)
    causal = _bias(np.tril(np.ones((t, t), dtype=bool))[None, None], dtype)
    kmask = _bias(src_mask[:, None, None, :], dtype)
    caches = []
    for i in range(cfg.decoder_layers):
        pre = f"decoder.layers.{i}"
        a, c1 = _ln_fwd(y, p[pre + ".ln1.g"], p[pre + ".ln1.b"])
        z, c2 = _attn_fwd(p, pre + ".self_attn", a, a, causal, h)
        y = y + z
        a, c3 = _ln_fwd(y, p[pre + ".ln2.g"], p[pre + ".ln2.b"])
        z, c4 = _attn_fwd(p, pre + ".cross_attn", a, enc, kmask, h)
        y = y + z
        a, c5 = _ln_fwd(y, p[pre + ".ln3.g"], p[pre + ".ln3.b"])
        z, c6 = _ffn_fwd(p, pre + ".ffn", a)
        y = y + z
        if keep:
            caches.append((c1, c2, c3, c4, c5, c6))
    hf, cf = _ln_fwd(y, p["decoder.ln_f.g"], p["decoder.ln_f.b"])
    logits = hf @ p["out.w"] + p["out.b"]
    return logits, (dec_in, caches, cf, hf) if keep else None


def _decode_bwd(dlogits, p, cfg, cache, g, enc_shape):
    dec_in, caches, cf, hf = cache
    dh, g["out.w"], g["out.b"] = _lin_bwd(dlogits, hf, p["out.w"])
    dy, g["decoder.ln_f.g"], g["decoder.ln_f.b"] = _ln_bwd(dh, cf)
    denc = np.zeros(enc_shape, dtype=dlogits.dtype)
    for i in reversed(range(cfg.decoder_layers)):
        pre = f"decoder.layers.{i}"
        c1, c2, c3, c4, c5, c6 = caches[i]
        da = _ffn_bwd(dy, p, pre + ".ffn", c6, g)
        dln, g[pre + ".ln3.g"], g[pre + ".ln3.b"] = _ln_bwd(da, c5)
        dy = dy + dln
        dq, dkv = _attn_bwd(dy, p, pre + ".cross_attn", c4, g)
        denc += dkv
        dln, g[pre + ".ln2.g"], g[pre + ".ln2.b"] = _ln_bwd(dq, c3)
        dy = dy + dln
        dq, dkv = _attn_bwd(dy, p, pre + ".self_attn", c2, g)
        dln, g[pre + ".ln1.g"], g[pre + ".ln1.b"] = _ln_bwd(dq + dkv, c1)
        dy = dy + dln
    v, d = p["decoder.embed"].shape
    flat = dec_in.reshape(-1)
    g["decoder.embed"] = np.zeros((v, d), dtype=dlogits.dtype)
    np.add.at(g["decoder.embed"], flat, dy.reshape(-1, d))
    return denc


def forward_logits(model: SeqModel, batch: Batch, dtype=np.float64) -> np.ndarray:
    """Teacher-forced logits of shape (B, T, V), computed in ``dtype``."""
    p = _cast(model, dtype)
    enc, _ = _encode(p, model.config, batch.frames, batch.src_mask, keep=False)
    logits, _ = _decode(p, model.config, batch.dec_in, enc, batch.src_mask, keep=False)
    return logits


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(-1, keepdims=True)
    return z - np.log(np.exp(z).sum(-1, keepdims=True))


def forward(model: SeqModel, frames: np.ndarray, tokens: Sequence[int]) -> np.ndarray:
    """Next-token distributions for one example, shape ``(len(tokens) + 1, V)``.

    Row ``i`` is the distribution over the token following ``[BOS] + tokens[:i]``.
    """
    batch = make_batch(model.config, [(np.asarray(frames, dtype=np.float64), list(tokens))])
    return softmax(forward_logits(model, batch))[0]


Objective = Callable[[np.ndarray, Batch], tuple[float, np.ndarray]]


def loss_gradients(model: SeqModel, batch: Batch, objective: Objective,
                   dtype=np.float64) -> tuple[float, dict[str, np.ndarray]]:
    """Loss and gradients for every parameter, computed in ``dtype``.

    ``objective(logits, batch)`` returns the scalar loss and its gradient with
    respect to the logits; see :mod:`kdasr.distill` for the objectives.
    Float64 is the default; float32 roughly halves the cost of a step.
    """
    cfg = model.config
    p = _cast(model, dtype)
    with np.errstate(over="ignore", invalid="ignore"):
        enc, ecache = _encode(p, cfg, batch.frames, batch.src_mask, keep=True)
        logits, dcache = _decode(p, cfg, batch.dec_in, enc, batch.src_mask, keep=True)
        loss, dlogits = objective(logits, batch)
        dlogits = dlogits.astype(dtype, copy=False)
    if not np.isfinite(loss) or not np.all(np.isfinite(dlogits)):
        raise NonFiniteLoss(f"non-finite loss {loss!r}")
    grads: dict[str, np.ndarray] = {}
    denc = _decode_bwd(dlogits, p, cfg, dcache, grads, enc.shape)
    _encode_bwd(denc, p, cfg, ecache, grads)
    return float(loss), grads


# ---------------------------------------------------------------------------
# greedy decoding with cached self-attention keys/values


def _step_attn(p, pre, xq, k, v, bias, h):
    q = _split(xq @ p[pre + ".wq"] + p[pre + ".bq"], h)
    s = (q @ k.transpose(0, 1, 3, 2)) / math.sqrt(q.shape[-1])
    if bias is not None:
        s += bias
    a = softmax(s)
    return _merge(a @ v) @ p[pre + ".wo"] + p[pre + ".bo"]


def greedy_decode_batch(model: SeqModel, frames_list: Sequence[np.ndarray],
                        max_len: int | None = None, dtype=np.float64) -> list[list[int]]:
    """Greedy decoding for several sources at once.

    Starts from BOS and appends the argmax token (lowest id on ties) until EOS
    or until the decoder input reaches ``max_target_len``. Padding and BOS are
    never emitted; EOS is not included in the returned transcripts.
    """
    cfg = model.config
    if not frames_list:
        return []
    limit = cfg.max_target_len if max_len is None else min(max_len, cfg.max_target_len)
    batch = make_batch(cfg, [(np.asarray(f, dtype=np.float64), []) for f in frames_list])
    p = _cast(model, dtype)
    h = cfg.n_heads
    enc, _ = _encode(p, cfg, batch.frames, batch.src_mask, keep=False)
    kmask = _bias(batch.src_mask[:, None, None, :], dtype)
    cross = []
    for i in range(cfg.decoder_layers):
        pre = f"decoder.layers.{i}.cross_attn"
        cross.append((_split(enc @ p[pre + ".wk"], h),
                      _split(enc @ p[pre + ".wv"] + p[pre + ".bv"], h)))
    b = len(frames_list)
    pe = sinusoid(limit, cfg.d_model).astype(dtype)
    dh = cfg.d_model // h
    selfk = np.zeros((cfg.decoder_layers, b, h, max(limit - 1, 1), dh), dtype=dtype)
    selfv = np.zeros_like(selfk)
    cur = np.full(b, cfg.bos_id, dtype=np.int64)
    out = np.full((b, max(limit - 1, 0)), -1, dtype=np.int64)
    done = np.zeros(b, dtype=bool)
    for t in range(limit - 1):
        y = p["decoder.embed"][cur][:, None, :] + pe[t]
        for i in range(cfg.decoder_layers):
            pre = f"decoder.layers.{i}"
            a, _ = _ln_fwd(y, p[pre + ".ln1.g"], p[pre + ".ln1.b"])
            sp = pre + ".self_attn"
            selfk[i, :, :, t:t + 1] = _split(a @ p[sp + ".wk"], h)
            selfv[i, :, :, t:t + 1] = _split(a @ p[sp + ".wv"] + p[sp + ".bv"], h)
            y = y + _step_attn(p, sp, a, selfk[i, :, :, :t + 1], selfv[i, :, :, :t + 1], None, h)
            a, _ = _ln_fwd(y, p[pre + ".ln2.g"], p[pre + ".ln2.b"])
            y = y + _step_attn(p, pre + ".cross_attn", a, cross[i][0], cross[i][1], kmask, h)
            a, _ = _ln_fwd(y, p[pre + ".ln3.g"], p[pre + ".ln3.b"])
            z, _ = _ffn_fwd(p, pre + ".ffn", a)
            y = y + z
        hf, _ = _ln_fwd(y, p["decoder.ln_f.g"], p["decoder.ln_f.b"])
        logits = (hf @ p["out.w"] + p["out.b"])[:, 0, :]
        logits[:, [cfg.pad_id, cfg.bos_id]] = -np.inf
        nxt = np.argmax(logits, axis=-1)  # first maximum, i.e. lowest id on ties
        out[:, t] = np.where(done, -1, nxt)
        done |= nxt == cfg.eos_id
        cur = nxt
        if done.all():
            break
    results = []
    for row in out:
        seq = []
        for tok in row:
            if tok < 0 or tok == cfg.eos_id:
                break
            seq.append(int(tok))
        results.append(seq)
    return results


def greedy_decode(model: SeqModel, frames: np.ndarray, max_len: int | None = None) -> list[int]:
    return greedy_decode_batch(model, [frames], max_len)[0]


# ---------------------------------------------------------------------------
# student initialization


def select_layers(teacher_layers: int, student_layers: int) -> list[int]:
    """Maximally spaced teacher layer indices, ``round(k * (T - 1) / (S - 1))`` rounded half up."""
    t, s = teacher_layers, student_layers
    if s < 1 or t < 1:
        raise ValueError("layer counts must be positive")
    if s > t:
        raise StudentLargerThanTeacher(f"student has {s} layers, teacher only {t}")
    if s == 1:
        return [0]
    return [(2 * k * (t - 1) + (s - 1)) // (2 * (s - 1)) for k in range(s)]


def init_student_from_teacher(teacher: SeqModel, student_el: int, student_dl: int) -> SeqModel:
    """Copy maximally spaced encoder/decoder layers and all non-layer weights."""
    tc = teacher.config
    enc_idx = select_layers(tc.encoder_layers, student_el)
    dec_idx = select_layers(tc.decoder_layers, student_dl)
    sc = tc.replace(encoder_layers=student_el, decoder_layers=student_dl)
    params = {}
    for name in param_shapes(sc):
        src = name
        for side, idx in (("encoder", enc_idx), ("decoder", dec_idx)):
            head = f"{side}.layers."
            if name.startswith(head):
                k, rest = name[len(head):].split(".", 1)
                src = f"{head}{idx[int(k)]}.{rest}"
        params[name] = teacher.params[src].copy()
    return SeqModel(sc, params, teacher.vocab)


def check_compatible(teacher: ModelConfig, student: ModelConfig) -> None:
    keys = ("vocab_size", "frame_dim", "d_model", "n_heads", "ffn_dim")
    diff = [k for k in keys if getattr(teacher, k) != getattr(student, k)]
    if diff:
        raise IncompatibleConfig(f"teacher and student differ in {diff}")


def init_student(teacher: SeqModel, template: ModelConfig) -> SeqModel:
    """Like :func:`init_student_from_teacher` but validates a full student config first."""
    check_compatible(teacher.config, template)
    return init_student_from_teacher(teacher, template.encoder_layers, template.decoder_layers)


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(model: SeqModel, path: str | Path) -> None:
    header = {"config": model.config.to_dict(),
              "vocab": model.vocab.tokens if model.vocab is not None else None}
    write_tensors(path, header, model.params)


def load_checkpoint(path: str | Path) -> SeqModel:
    header, tensors = read_tensors(path)
    try:
        cfg = ModelConfig.from_dict(header["config"])
        vocab = Vocab.from_tokens(header["vocab"]) if header.get("vocab") else None
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptCheckpoint(f"bad header: {exc}") from exc
    model = SeqModel(cfg, tensors, vocab)
    try:
        model.audit()
    except ValueError as exc:
        raise CorruptCheckpoint(str(exc)) from exc
    return model
