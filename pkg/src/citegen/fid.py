"""From-scratch encoder-decoder transformer with block-wise fusion.

Every citation block is encoded independently (positional indices restart at
0 per block, no attention across blocks), and the decoder cross-attends over
the concatenation of all block states. Encoder attention cost is therefore
linear in the number of blocks rather than quadratic.

Everything runs in float64 with hand-written analytic gradients so finite
difference checks and bit-level invariants are meaningful.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError, NumericalError, ShapeError
from .seeding import substream
from .tokenizer import BOS_ID, EOS_ID, PAD_ID, RESERVED, Vocabulary, encode, tokenize

LN_EPS = 1e-6
NEG_INF = -1e9  # additive mask; exp underflows to exact 0.0 in float64


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    d_model: int = 64
    n_heads: int = 4
    n_enc_layers: int = 2
    n_dec_layers: int = 2
    ffn_dim: int | None = None
    block_len: int = 64
    target_len: int = 32
    max_blocks: int = 8
    dropout: float = 0.0

    def __post_init__(self):
        if self.ffn_dim is None:
            object.__setattr__(self, "ffn_dim", 4 * self.d_model)
        if self.vocab_size < len(RESERVED):
            raise ConfigError(f"vocab_size {self.vocab_size} < reserved prefix {len(RESERVED)}")
        if self.d_model % self.n_heads != 0:
            raise ConfigError(f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")
        if self.block_len < 2 or self.target_len < 2:
            raise ConfigError("block_len and target_len must be >= 2")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")

    @property
    def pos_len(self) -> int:
        return max(self.block_len, self.target_len)

    def to_dict(self) -> dict:
        return {
            "vocab_size": self.vocab_size, "d_model": self.d_model, "n_heads": self.n_heads,
            "n_enc_layers": self.n_enc_layers, "n_dec_layers": self.n_dec_layers,
            "ffn_dim": self.ffn_dim, "block_len": self.block_len, "target_len": self.target_len,
            "max_blocks": self.max_blocks, "dropout": self.dropout,
        }


class AttentionCounter:
    """Counts attention scores actually computed during forward passes."""

    def __init__(self):
        self.scores = 0

    def add(self, n: int) -> None:
        self.scores += n


def _param_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    d, f = config.d_model, config.ffn_dim
    shapes: dict[str, tuple[int, ...]] = {
        "emb": (config.vocab_size, d),
        "pos": (config.pos_len, d),
        "enc.lnf.g": (d,), "enc.lnf.b": (d,),
        "dec.lnf.g": (d,), "dec.lnf.b": (d,),
    }
    def sublayer(prefix: str, attn: str):
        shapes[f"{prefix}.{attn}.wq"] = (d, d)
        shapes[f"{prefix}.{attn}.wk"] = (d, d)
        shapes[f"{prefix}.{attn}.wv"] = (d, d)
        shapes[f"{prefix}.{attn}.wo"] = (d, d)
    for i in range(config.n_enc_layers):
        p = f"enc{i}"
        shapes[f"{p}.ln1.g"] = (d,); shapes[f"{p}.ln1.b"] = (d,)
        sublayer(p, "attn")
        shapes[f"{p}.ln2.g"] = (d,); shapes[f"{p}.ln2.b"] = (d,)
        shapes[f"{p}.ffn.w1"] = (d, f); shapes[f"{p}.ffn.b1"] = (f,)
        shapes[f"{p}.ffn.w2"] = (f, d); shapes[f"{p}.ffn.b2"] = (d,)
    for i in range(config.n_dec_layers):
        p = f"dec{i}"
        shapes[f"{p}.ln1.g"] = (d,); shapes[f"{p}.ln1.b"] = (d,)
        sublayer(p, "self")
        shapes[f"{p}.ln2.g"] = (d,); shapes[f"{p}.ln2.b"] = (d,)
        sublayer(p, "cross")
        shapes[f"{p}.ln3.g"] = (d,); shapes[f"{p}.ln3.b"] = (d,)
        shapes[f"{p}.ffn.w1"] = (d, f); shapes[f"{p}.ffn.b1"] = (f,)
        shapes[f"{p}.ffn.w2"] = (f, d); shapes[f"{p}.ffn.b2"] = (d,)
    return shapes


def init_params(config: ModelConfig, seed: int) -> dict[str, np.ndarray]:
    """N(0, 0.02) weights, unit layer-norm gains, zero biases. Seeded."""
    rng = substream(seed, "init")
    params: dict[str, np.ndarray] = {}
    for name, shape in sorted(_param_shapes(config).items()):
        if name.endswith(".g") or name.endswith("lnf.g"):
            params[name] = np.ones(shape)
        elif name.endswith(".b") or name.endswith(".b1") or name.endswith(".b2"):
            params[name] = np.zeros(shape)
        else:
            params[name] = rng.normal(0.0, 0.02, size=shape)
    return params


# ---------------------------------------------------------------------------
# Primitive ops (forward + backward pairs)

def _softmax(x: np.ndarray) -> np.ndarray:
    x = x - x.max(axis=-1, keepdims=True)
    e = np.exp(x)
    return e / e.sum(axis=-1, keepdims=True)


def _ln_fwd(x, g, b):
    mu = x.mean(-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = xc * inv
    return g * xhat + b, (xhat, inv, g)


def _ln_bwd(dout, cache):
    xhat, inv, g = cache
    axes = tuple(range(dout.ndim - 1))
    dg = (dout * xhat).sum(axis=axes)
    db = dout.sum(axis=axes)
    dxh = dout * g
    dx = inv * (dxh - dxh.mean(-1, keepdims=True) - xhat * (dxh * xhat).mean(-1, keepdims=True))
    return dx, dg, db


def _split_heads(x, n_heads):
    b, s, d = x.shape
    return x.reshape(b, s, n_heads, d // n_heads).transpose(0, 2, 1, 3)


def _merge_heads(x):
    b, h, s, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, s, h * dh)


def _attn_fwd(q_in, kv_in, w, n_heads, mask, counter=None):
    """Scaled dot-product multi-head attention. mask is additive, broadcastable
    to (B, H, Sq, Sk); fully masked rows degrade to uniform weights."""
    b, sq, d = q_in.shape
    sk = kv_in.shape[1]
    dh = d // n_heads
    qh = _split_heads(q_in @ w["wq"], n_heads)
    kh = _split_heads(kv_in @ w["wk"], n_heads)
    vh = _split_heads(kv_in @ w["wv"], n_heads)
    scores = qh @ kh.transpose(0, 1, 3, 2) * (dh ** -0.5)
    if mask is not None:
        scores = scores + mask
    if counter is not None:
        counter.add(b * n_heads * sq * sk)
    p = _softmax(scores)
    o = _merge_heads(p @ vh)
    out = o @ w["wo"]
    return out, (q_in, kv_in, qh, kh, vh, p, o, w, n_heads)


def _attn_bwd(dout, cache):
    q_in, kv_in, qh, kh, vh, p, o, w, n_heads = cache
    b, sq, d = q_in.shape
    sk = kv_in.shape[1]
    dh = d // n_heads
    dwo = o.reshape(-1, d).T @ dout.reshape(-1, d)
    do = dout @ w["wo"].T
    doh = _split_heads(do, n_heads)
    dp = doh @ vh.transpose(0, 1, 3, 2)
    dvh = p.transpose(0, 1, 3, 2) @ doh
    ds = p * (dp - (dp * p).sum(-1, keepdims=True))
    ds = ds * (dh ** -0.5)
    dqh = ds @ kh
    dkh = ds.transpose(0, 1, 3, 2) @ qh
    dq = _merge_heads(dqh)
    dk = _merge_heads(dkh)
    dv = _merge_heads(dvh)
    grads = {
        "wq": q_in.reshape(-1, d).T @ dq.reshape(-1, d),
        "wk": kv_in.reshape(-1, d).T @ dk.reshape(-1, d),
        "wv": kv_in.reshape(-1, d).T @ dv.reshape(-1, d),
        "wo": dwo,
    }
    dq_in = dq @ w["wq"].T
    dkv_in = dk @ w["wk"].T + dv @ w["wv"].T
    return dq_in, dkv_in, grads


def _ffn_fwd(x, w1, b1, w2, b2):
    h = x @ w1 + b1
    a = np.maximum(h, 0.0)
    return a @ w2 + b2, (x, h, a, w1, w2)


def _ffn_bwd(dout, cache):
    x, h, a, w1, w2 = cache
    d = x.shape[-1]
    f = w1.shape[1]
    dw2 = a.reshape(-1, f).T @ dout.reshape(-1, d)
    db2 = dout.reshape(-1, d).sum(0)
    da = dout @ w2.T
    dh = da * (h > 0)
    dw1 = x.reshape(-1, d).T @ dh.reshape(-1, f)
    db1 = dh.reshape(-1, f).sum(0)
    dx = dh @ w1.T
    return dx, {"w1": dw1, "b1": db1, "w2": dw2, "b2": db2}


def _dropout_mask(shape, rate, rng):
    if rng is None or rate <= 0.0:
        return None
    return (rng.random(shape) >= rate) / (1.0 - rate)


# ---------------------------------------------------------------------------
# Encoder / decoder stacks

def _attn_params(params, prefix):
    return {k: params[f"{prefix}.{k}"] for k in ("wq", "wk", "wv", "wo")}


def _encoder_fwd(params, config: ModelConfig, flat_ids, counter=None, drop_rng=None,
                 key_real=None):
    """flat_ids: (rows, L) where each row is one independently encoded block."""
    rows, length = flat_ids.shape
    x = params["emb"][flat_ids] + params["pos"][:length]
    if key_real is None:
        key_real = flat_ids != PAD_ID
    mask = np.where(key_real, 0.0, NEG_INF)[:, None, None, :]
    layers = []
    for i in range(config.n_enc_layers):
        p = f"enc{i}"
        a_in, ln1c = _ln_fwd(x, params[f"{p}.ln1.g"], params[f"{p}.ln1.b"])
        attn_out, attnc = _attn_fwd(a_in, a_in, _attn_params(params, f"{p}.attn"),
                                    config.n_heads, mask, counter)
        m1 = _dropout_mask(attn_out.shape, config.dropout, drop_rng)
        if m1 is not None:
            attn_out = attn_out * m1
        x1 = x + attn_out
        f_in, ln2c = _ln_fwd(x1, params[f"{p}.ln2.g"], params[f"{p}.ln2.b"])
        ffn_out, ffnc = _ffn_fwd(f_in, params[f"{p}.ffn.w1"], params[f"{p}.ffn.b1"],
                                 params[f"{p}.ffn.w2"], params[f"{p}.ffn.b2"])
        m2 = _dropout_mask(ffn_out.shape, config.dropout, drop_rng)
        if m2 is not None:
            ffn_out = ffn_out * m2
        x = x1 + ffn_out
        layers.append((ln1c, attnc, m1, ln2c, ffnc, m2))
    out, lnfc = _ln_fwd(x, params["enc.lnf.g"], params["enc.lnf.b"])
    return out, (flat_ids, layers, lnfc)


def _encoder_bwd(params, config: ModelConfig, dout, cache, grads):
    flat_ids, layers, lnfc = cache
    dx, dg, db = _ln_bwd(dout, lnfc)
    grads["enc.lnf.g"] += dg
    grads["enc.lnf.b"] += db
    for i in reversed(range(config.n_enc_layers)):
        p = f"enc{i}"
        ln1c, attnc, m1, ln2c, ffnc, m2 = layers[i]
        dffn_out = dx if m2 is None else dx * m2
        dfin, fg = _ffn_bwd(dffn_out, ffnc)
        for k, v in fg.items():
            grads[f"{p}.ffn.{k}"] += v
        dx1, dg, db = _ln_bwd(dfin, ln2c)
        grads[f"{p}.ln2.g"] += dg
        grads[f"{p}.ln2.b"] += db
        dx1 = dx1 + dx
        dattn_out = dx1 if m1 is None else dx1 * m1
        dq_in, dkv_in, ag = _attn_bwd(dattn_out, attnc)
        for k, v in ag.items():
            grads[f"{p}.attn.{k}"] += v
        da_in = dq_in + dkv_in
        dx0, dg, db = _ln_bwd(da_in, ln1c)
        grads[f"{p}.ln1.g"] += dg
        grads[f"{p}.ln1.b"] += db
        dx = dx0 + dx1
    length = flat_ids.shape[1]
    np.add.at(grads["emb"], flat_ids.reshape(-1), dx.reshape(-1, dx.shape[-1]))
    grads["pos"][:length] += dx.sum(axis=0)
    return grads


def _decoder_fwd(params, config: ModelConfig, dec_ids, enc_states, enc_mask,
                 drop_rng=None):
    """dec_ids: (B, T); enc_states: (B, S, d); enc_mask additive (B,1,1,S).

    The attention counter never reaches the decoder: the cost accounting
    tracks encoder self-attention, where block fusion changes the total."""
    b, t = dec_ids.shape
    x = params["emb"][dec_ids] + params["pos"][:t]
    causal = np.where(np.triu(np.ones((t, t), dtype=bool), k=1), NEG_INF, 0.0)[None, None]
    layers = []
    for i in range(config.n_dec_layers):
        p = f"dec{i}"
        a_in, ln1c = _ln_fwd(x, params[f"{p}.ln1.g"], params[f"{p}.ln1.b"])
        self_out, selfc = _attn_fwd(a_in, a_in, _attn_params(params, f"{p}.self"),
                                    config.n_heads, causal)
        m1 = _dropout_mask(self_out.shape, config.dropout, drop_rng)
        if m1 is not None:
            self_out = self_out * m1
        x1 = x + self_out
        c_in, ln2c = _ln_fwd(x1, params[f"{p}.ln2.g"], params[f"{p}.ln2.b"])
        cross_out, crossc = _attn_fwd(c_in, enc_states, _attn_params(params, f"{p}.cross"),
                                      config.n_heads, enc_mask)
        m2 = _dropout_mask(cross_out.shape, config.dropout, drop_rng)
        if m2 is not None:
            cross_out = cross_out * m2
        x2 = x1 + cross_out
        f_in, ln3c = _ln_fwd(x2, params[f"{p}.ln3.g"], params[f"{p}.ln3.b"])
        ffn_out, ffnc = _ffn_fwd(f_in, params[f"{p}.ffn.w1"], params[f"{p}.ffn.b1"],
                                 params[f"{p}.ffn.w2"], params[f"{p}.ffn.b2"])
        m3 = _dropout_mask(ffn_out.shape, config.dropout, drop_rng)
        if m3 is not None:
            ffn_out = ffn_out * m3
        x = x2 + ffn_out
        layers.append((ln1c, selfc, m1, ln2c, crossc, m2, ln3c, ffnc, m3))
    out, lnfc = _ln_fwd(x, params["dec.lnf.g"], params["dec.lnf.b"])
    return out, (dec_ids, layers, lnfc)


def _decoder_bwd(params, config: ModelConfig, dout, cache, grads):
    """Returns gradient w.r.t. enc_states (accumulated over layers)."""
    dec_ids, layers, lnfc = cache
    dx, dg, db = _ln_bwd(dout, lnfc)
    grads["dec.lnf.g"] += dg
    grads["dec.lnf.b"] += db
    denc = None
    for i in reversed(range(config.n_dec_layers)):
        p = f"dec{i}"
        ln1c, selfc, m1, ln2c, crossc, m2, ln3c, ffnc, m3 = layers[i]
        dffn_out = dx if m3 is None else dx * m3
        dfin, fg = _ffn_bwd(dffn_out, ffnc)
        for k, v in fg.items():
            grads[f"{p}.ffn.{k}"] += v
        dx2, dg, db = _ln_bwd(dfin, ln3c)
        grads[f"{p}.ln3.g"] += dg
        grads[f"{p}.ln3.b"] += db
        dx2 = dx2 + dx
        dcross_out = dx2 if m2 is None else dx2 * m2
        dc_in, dkv, cg = _attn_bwd(dcross_out, crossc)
        for k, v in cg.items():
            grads[f"{p}.cross.{k}"] += v
        denc = dkv if denc is None else denc + dkv
        dx1, dg, db = _ln_bwd(dc_in, ln2c)
        grads[f"{p}.ln2.g"] += dg
        grads[f"{p}.ln2.b"] += db
        dx1 = dx1 + dx2
        dself_out = dx1 if m1 is None else dx1 * m1
        dq_in, dkv_in, sg = _attn_bwd(dself_out, selfc)
        for k, v in sg.items():
            grads[f"{p}.self.{k}"] += v
        da_in = dq_in + dkv_in
        dx0, dg, db = _ln_bwd(da_in, ln1c)
        grads[f"{p}.ln1.g"] += dg
        grads[f"{p}.ln1.b"] += db
        dx = dx0 + dx1
    t = dec_ids.shape[1]
    np.add.at(grads["emb"], dec_ids.reshape(-1), dx.reshape(-1, dx.shape[-1]))
    grads["pos"][:t] += dx.sum(axis=0)
    return denc


# ---------------------------------------------------------------------------
# Model-level forward / backward

@dataclass(frozen=True, eq=False)
class FidInput:
    """Token ids of the citation blocks: (n_blocks, block_len)."""

    ids: np.ndarray

    def __post_init__(self):
        if self.ids.ndim != 2:
            raise ShapeError(f"FidInput.ids must be 2-d, got shape {self.ids.shape}")

    @property
    def n_blocks(self) -> int:
        return self.ids.shape[0]


def _as_batch(x_ids, y_ids):
    """Normalize (N,L)/(T,) or (B,N,L)/(B,T) to batched arrays."""
    x = np.asarray(x_ids)
    y = np.asarray(y_ids)
    single = x.ndim == 2
    if single:
        x = x[None]
        y = y[None]
    return x, y, single


def _forward(params, config: ModelConfig, x, y, counter=None, drop_rng=None):
    b, n, length = x.shape
    if length != config.block_len:
        raise ShapeError(f"block length {length} != config.block_len {config.block_len}")
    if not 1 <= n <= config.max_blocks:
        raise ShapeError(f"{n} blocks outside [1, {config.max_blocks}]")
    enc_out, enc_cache = _encoder_fwd(params, config, x.reshape(b * n, length), counter, drop_rng)
    d = config.d_model
    enc_states = enc_out.reshape(b, n * length, d)
    enc_key_pad = (x.reshape(b, n * length) == PAD_ID)
    enc_mask = np.where(enc_key_pad, NEG_INF, 0.0)[:, None, None, :]
    t = y.shape[1]
    dec_in = np.concatenate([np.full((b, 1), BOS_ID, dtype=np.int64), y[:, :-1]], axis=1)
    dec_out, dec_cache = _decoder_fwd(params, config, dec_in, enc_states, enc_mask, drop_rng)
    logits = dec_out @ params["emb"].T
    real = y != PAD_ID
    n_real = int(real.sum())
    zmax = logits.max(axis=-1)
    logz = zmax + np.log(np.exp(logits - zmax[..., None]).sum(axis=-1))
    gold = np.take_along_axis(logits, y[..., None], axis=-1)[..., 0]
    ce = np.where(real, logz - gold, 0.0)
    loss = float(ce.sum() / max(n_real, 1))
    if not np.isfinite(loss):
        raise NumericalError(f"non-finite loss {loss}")
    cache = (x, y, enc_cache, dec_cache, dec_out, enc_states, logits, logz, real, n_real)
    return loss, logits, cache


def _backward(params, config: ModelConfig, cache):
    x, y, enc_cache, dec_cache, dec_out, enc_states, logits, logz, real, n_real = cache
    b, n, length = x.shape
    grads = {k: np.zeros_like(v) for k, v in params.items()}
    probs = np.exp(logits - logz[..., None])
    donehot = np.zeros_like(logits)
    np.put_along_axis(donehot, y[..., None], 1.0, axis=-1)
    dlogits = (probs - donehot) * real[..., None] / max(n_real, 1)
    v = config.vocab_size
    d = config.d_model
    grads["emb"] += dlogits.reshape(-1, v).T @ dec_out.reshape(-1, d)
    ddec_out = dlogits @ params["emb"]
    denc_states = _decoder_bwd(params, config, ddec_out, dec_cache, grads)
    _encoder_bwd(params, config, denc_states.reshape(b * n, length, d), enc_cache, grads)
    return grads


def forward_loss(params, config: ModelConfig, fid_input, target, counter=None):
    """Teacher-forced cross-entropy over non-pad target positions, plus logits."""
    ids = fid_input.ids if isinstance(fid_input, FidInput) else fid_input
    x, y, single = _as_batch(ids, target)
    loss, logits, _ = _forward(params, config, x, y, counter)
    return loss, (logits[0] if single else logits)


def backward(params, config: ModelConfig, fid_input, target):
    """Analytic gradients of forward_loss for every parameter tensor."""
    ids = fid_input.ids if isinstance(fid_input, FidInput) else fid_input
    x, y, _ = _as_batch(ids, target)
    _, _, cache = _forward(params, config, x, y)
    return _backward(params, config, cache)


def encode_block(params, config: ModelConfig, block_ids, mask=None, counter=None):
    """Encoder states (block_len, d_model) for one block in isolation.

    ``mask`` marks real (attendable) positions; by default every non-<PAD>
    token is real. Masked positions cannot influence any other position."""
    ids = np.asarray(block_ids, dtype=np.int64)
    if ids.shape != (config.block_len,):
        raise ShapeError(f"block shape {ids.shape} != ({config.block_len},)")
    key_real = None if mask is None else np.asarray(mask, dtype=bool)[None]
    out, _ = _encoder_fwd(params, config, ids[None], counter, key_real=key_real)
    return out[0]


def encode_blocks(params, config: ModelConfig, ids, counter=None):
    """All blocks of one instance: (N, L) → (N*L, d_model)."""
    ids = np.asarray(ids, dtype=np.int64)
    out, _ = _encoder_fwd(params, config, ids, counter)
    return out.reshape(ids.shape[0] * ids.shape[1], config.d_model)


def encode_monolithic(params, config: ModelConfig, concat_ids, counter=None):
    """Reference encoder over one concatenated sequence (no block structure).

    Positional rows are tiled modulo block_len so any length is accepted;
    used to measure the quadratic attention cost of not fusing blocks.
    """
    ids = np.asarray(concat_ids, dtype=np.int64)[None]
    s = ids.shape[1]
    pos = params["pos"]
    tiled = pos[np.arange(s) % pos.shape[0]]
    patched = dict(params)
    patched["pos"] = tiled
    out, _ = _encoder_fwd(patched, config, ids, counter)
    return out[0]


def attention_cost(config: ModelConfig, n_blocks: int) -> tuple[int, int]:
    """(fused score count, monolithic score count) for the encoder stack."""
    if n_blocks > config.max_blocks:
        raise ConfigError(f"n_blocks {n_blocks} > max_blocks {config.max_blocks}")
    per_block = config.block_len ** 2
    fid = config.n_enc_layers * config.n_heads * n_blocks * per_block
    mono = config.n_enc_layers * config.n_heads * (n_blocks * config.block_len) ** 2
    return fid, mono


# ---------------------------------------------------------------------------
# Training

@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 16
    lr: float = 3e-4
    betas: tuple[float, float] = (0.9, 0.98)
    adam_eps: float = 1e-9
    grad_clip: float = 1.0
    seed: int = 0


def _pad_batch(items: Sequence[tuple[np.ndarray, np.ndarray]]):
    """Stack instances with unequal block counts using fully padded blocks."""
    n_max = max(x.shape[0] for x, _ in items)
    length = items[0][0].shape[1]
    t = items[0][1].shape[0]
    x = np.full((len(items), n_max, length), PAD_ID, dtype=np.int64)
    y = np.zeros((len(items), t), dtype=np.int64)
    for i, (xi, yi) in enumerate(items):
        x[i, : xi.shape[0]] = xi
        y[i] = yi
    return x, y


def _dataset_loss(params, config, data, batch_size):
    total = 0.0
    count = 0
    for start in range(0, len(data), batch_size):
        x, y = _pad_batch(data[start : start + batch_size])
        n_real = int((y != PAD_ID).sum())
        loss, _, _ = _forward(params, config, x, y)
        total += loss * n_real
        count += n_real
    return total / max(count, 1)


def train(
    params: dict[str, np.ndarray],
    config: ModelConfig,
    train_data: Sequence[tuple[np.ndarray, np.ndarray]],
    valid_data: Sequence[tuple[np.ndarray, np.ndarray]] = (),
    hyper: TrainConfig = TrainConfig(),
) -> tuple[dict[str, np.ndarray], dict[str, list[float]]]:
    """Adam with global-norm gradient clipping; keeps the best-validation
    parameters when a validation set is given, else the final ones.

    Aborts with NumericalError if the epoch loss exceeds 10x the first
    epoch's loss or stops being finite.
    """
    if not train_data:
        raise ConfigError("train_data is empty")
    params = {k: v.copy() for k, v in params.items()}
    m = {k: np.zeros_like(v) for k, v in params.items()}
    v2 = {k: np.zeros_like(v) for k, v in params.items()}
    b1, b2 = hyper.betas
    rng = substream(hyper.seed, "shuffle")
    drop_rng = substream(hyper.seed, "dropout") if config.dropout > 0 else None
    history: dict[str, list[float]] = {"train_loss": [], "val_loss": []}
    best_val = np.inf
    best_params = None
    initial = None
    step = 0
    n = len(train_data)
    for _ in range(hyper.epochs):
        order = rng.permutation(n)
        total = 0.0
        count = 0
        for start in range(0, n, hyper.batch_size):
            batch = [train_data[i] for i in order[start : start + hyper.batch_size]]
            x, y = _pad_batch(batch)
            loss, _, cache = _forward(params, config, x, y, drop_rng=drop_rng)
            grads = _backward(params, config, cache)
            norm = np.sqrt(sum(float((g * g).sum()) for g in grads.values()))
            if hyper.grad_clip > 0 and norm > hyper.grad_clip:
                scale = hyper.grad_clip / norm
                for g in grads.values():
                    g *= scale
            step += 1
            bc1 = 1.0 - b1 ** step
            bc2 = 1.0 - b2 ** step
            for k in params:
                m[k] = b1 * m[k] + (1 - b1) * grads[k]
                v2[k] = b2 * v2[k] + (1 - b2) * grads[k] ** 2
                params[k] -= hyper.lr * (m[k] / bc1) / (np.sqrt(v2[k] / bc2) + hyper.adam_eps)
            n_real = int((y != PAD_ID).sum())
            total += loss * n_real
            count += n_real
        epoch_loss = total / max(count, 1)
        history["train_loss"].append(epoch_loss)
        if initial is None:
            initial = epoch_loss
        if not np.isfinite(epoch_loss) or epoch_loss > 10.0 * max(initial, 1e-12):
            raise NumericalError(
                f"training diverged: epoch loss {epoch_loss:.4f} vs initial {initial:.4f}"
            )
        if valid_data:
            val = _dataset_loss(params, config, valid_data, hyper.batch_size)
            history["val_loss"].append(val)
            if val < best_val:
                best_val = val
                best_params = {k: p.copy() for k, p in params.items()}
    if valid_data and best_params is not None:
        params = best_params
    return params, history


# ---------------------------------------------------------------------------
# Decoding

def _step_logprobs(params, config, prefixes, enc_states, enc_mask):
    """Log-probs of the next token for each prefix row; <PAD> is forbidden."""
    dec_out, _ = _decoder_fwd(params, config, prefixes, enc_states, enc_mask)
    logits = dec_out[:, -1] @ params["emb"].T
    zmax = logits.max(axis=-1, keepdims=True)
    logp = logits - (zmax + np.log(np.exp(logits - zmax).sum(axis=-1, keepdims=True)))
    logp[:, PAD_ID] = -np.inf
    return logp


def generate(params, config: ModelConfig, fid_input, mode: str = "greedy",
             beam_size: int = 4, max_len: int | None = None) -> list[int]:
    """Decode one instance. Returns generated ids (no <BOS>; <EOS> kept if hit).

    Greedy picks the argmax each step (lowest id on ties); beam search ranks
    by log-probability normalized by length^0.7, ties broken by token ids.
    """
    ids = fid_input.ids if isinstance(fid_input, FidInput) else np.asarray(fid_input)
    max_len = config.target_len if max_len is None else min(max_len, config.pos_len)
    enc = encode_blocks(params, config, ids)[None]
    enc_mask = np.where(ids.reshape(1, -1) == PAD_ID, NEG_INF, 0.0)[:, None, None, :]
    if mode == "greedy":
        seq = [BOS_ID]
        while len(seq) - 1 < max_len:
            logp = _step_logprobs(params, config, np.array([seq]), enc, enc_mask)[0]
            nxt = int(np.argmax(logp))
            seq.append(nxt)
            if nxt == EOS_ID:
                break
        return seq[1:]
    if mode != "beam":
        raise ConfigError(f"unknown decode mode {mode!r}")

    def norm_score(logprob: float, length: int) -> float:
        return logprob / max(length, 1) ** 0.7

    beams: list[tuple[list[int], float, bool]] = [([BOS_ID], 0.0, False)]
    for _ in range(max_len):
        live = [bm for bm in beams if not bm[2]]
        if not live:
            break
        prefixes = np.array([bm[0] for bm in live])
        logp = _step_logprobs(params, config, prefixes,
                              np.repeat(enc, len(live), axis=0),
                              np.repeat(enc_mask, len(live), axis=0))
        candidates: list[tuple[float, list[int], float, bool]] = [
            (norm_score(bm[1], len(bm[0]) - 1), bm[0], bm[1], True) for bm in beams if bm[2]
        ]
        for row, (seq, lp, _) in enumerate(live):
            order = np.argsort(-logp[row], kind="stable")[:beam_size]  # ties: lowest id first
            for tok in order:
                tok = int(tok)
                nlp = lp + float(logp[row, tok])
                nseq = seq + [tok]
                candidates.append((norm_score(nlp, len(nseq) - 1), nseq, nlp, tok == EOS_ID))
        candidates.sort(key=lambda c: (-c[0], c[1]))
        beams = [(seq, lp, fin) for _, seq, lp, fin in candidates[:beam_size]]
        if all(fin for _, _, fin in beams):
            break
    best = max(beams, key=lambda bm: (norm_score(bm[1], len(bm[0]) - 1), [-t for t in bm[0]]))
    return best[0][1:]


# ---------------------------------------------------------------------------
# Input assembly

def build_block_ids(citing_tokens: list[str], block_tag: str, title_tokens: list[str],
                    abstract_tokens: list[str], intent_token: str | None,
                    vocab: Vocabulary, block_len: int) -> np.ndarray:
    """One block's ids with the truncation priority: intent code first, then
    the placeholder tag and cited title, then citing abstract, then cited
    abstract tail; padded to block_len."""
    budget = block_len
    head: list[str] = []
    if intent_token is not None:
        head.append(intent_token)
        budget -= 1
    title = title_tokens[: max(budget - 1, 0)]
    budget -= 1 + len(title)
    citing = citing_tokens[: max(budget, 0)]
    budget -= len(citing)
    cited = abstract_tokens[: max(budget, 0)]
    tokens = head + citing + [block_tag] + title + cited
    ids = [vocab.id(t) for t in tokens][:block_len]
    ids += [PAD_ID] * (block_len - len(ids))
    return np.array(ids, dtype=np.int64)


def build_fid_input(instance, vocab: Vocabulary, config: ModelConfig,
                    with_intent: bool = True) -> FidInput:
    """Assemble the per-cited-document blocks for one CitationInstance."""
    citing_toks = tokenize(instance.citing.abstract)
    blocks = []
    for n, (doc, intent) in enumerate(zip(instance.cited, instance.intents), start=1):
        blocks.append(
            build_block_ids(
                citing_toks, f"<B{n}>", tokenize(doc.title), tokenize(doc.abstract),
                intent.token if with_intent else None, vocab, config.block_len,
            )
        )
    return FidInput(ids=np.stack(blocks))


def encode_target(instance, vocab: Vocabulary, config: ModelConfig) -> np.ndarray:
    return np.array(encode(instance.target, vocab, config.target_len, add_eos=True),
                    dtype=np.int64)


def prepare_data(instances, vocab: Vocabulary, config: ModelConfig,
                 with_intent: bool = True) -> list[tuple[np.ndarray, np.ndarray]]:
    return [
        (build_fid_input(inst, vocab, config, with_intent).ids,
         encode_target(inst, vocab, config))
        for inst in instances
    ]


# ---------------------------------------------------------------------------
# Checkpoints

_MAGIC = b"CGFID001"


def save_checkpoint(path: str | Path, config: ModelConfig, params: Mapping[str, np.ndarray],
                    vocab_file: str = "vocab.tsv", with_intent: bool = True) -> None:
    names = sorted(params)
    header = {
        "config": config.to_dict(),
        "vocab_file": vocab_file,
        "with_intent": with_intent,
        "tensors": [{"name": n, "shape": list(params[n].shape)} for n in names],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<q", len(blob)))
        f.write(blob)
        for n in names:
            f.write(np.ascontiguousarray(params[n], dtype="<f8").tobytes())


def load_checkpoint(path: str | Path) -> tuple[ModelConfig, dict[str, np.ndarray], dict]:
    with open(path, "rb") as f:
        if f.read(8) != _MAGIC:
            raise ValueError(f"{path} is not a model checkpoint")
        (hlen,) = struct.unpack("<q", f.read(8))
        header = json.loads(f.read(hlen).decode("utf-8"))
        params: dict[str, np.ndarray] = {}
        for spec in header["tensors"]:
            shape = tuple(spec["shape"])
            n_items = int(np.prod(shape)) if shape else 1
            buf = f.read(8 * n_items)
            params[spec["name"]] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
    config = ModelConfig(**header["config"])
    meta = {"vocab_file": header["vocab_file"], "with_intent": header["with_intent"]}
    return config, params, meta
