"""Causal Transformer encoder shared by the inference and generative networks."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ShapeError

NEG_INF = -1e9


@dataclass(frozen=True)
class EncoderConfig:
    D: int = 64
    H: int = 4
    d_k: int = 16
    d_v: int = 16
    n_layers: int = 2
    dropout: float = 0.1
    d_ff: int | None = None  # defaults to 4 * D

    def __post_init__(self):
        if min(self.D, self.H, self.d_k, self.d_v, self.n_layers) < 1:
            raise ValueError("encoder dimensions must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.d_ff is None:
            object.__setattr__(self, "d_ff", 4 * self.D)

    def to_json(self) -> dict:
        return asdict(self)


def temporal_encoding(t, D: int) -> np.ndarray:
    """Sinusoidal encoding of timestamps, shape ``np.shape(t) + (D,)``.

    Even index ``l``: ``sin(t / 10000**(l/D))``; odd ``l``: ``cos(t / 10000**((l-1)/D))``.
    """
    t = np.asarray(t, dtype=np.float64)
    l = np.arange(D)
    even = l - (l % 2)
    angle = t[..., None] / np.power(10000.0, even / D)
    return np.where(l % 2 == 0, np.sin(angle), np.cos(angle))


def xavier(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def init_encoder_params(cfg: EncoderConfig, rng: np.random.Generator, prefix: str = "enc") -> dict[str, Tensor]:
    p = {}
    D = cfg.D
    for i in range(cfg.n_layers):
        n = f"{prefix}.{i}"
        p[f"{n}.wq"] = xavier(rng, D, cfg.H * cfg.d_k)
        p[f"{n}.wk"] = xavier(rng, D, cfg.H * cfg.d_k)
        p[f"{n}.wv"] = xavier(rng, D, cfg.H * cfg.d_v)
        p[f"{n}.wo"] = xavier(rng, cfg.H * cfg.d_v, D)
        p[f"{n}.ln1_g"] = np.ones(D)
        p[f"{n}.ln1_b"] = np.zeros(D)
        p[f"{n}.w1"] = xavier(rng, D, cfg.d_ff)
        p[f"{n}.b1"] = np.zeros(cfg.d_ff)
        p[f"{n}.w2"] = xavier(rng, cfg.d_ff, D)
        p[f"{n}.b2"] = np.zeros(D)
        p[f"{n}.ln2_g"] = np.ones(D)
        p[f"{n}.ln2_b"] = np.zeros(D)
    return {k: Tensor(v, requires_grad=True, name=k) for k, v in p.items()}


def embed_events(types: np.ndarray, times: np.ndarray, U) -> Tensor:
    """``U[k_i] + PE(t_i)`` per position; ``U`` is the ``[(K+1), D]`` type table (row K = padding)."""
    types = np.asarray(types)
    D = U.shape[1]
    return ad.embedding_lookup(U, types) + temporal_encoding(times, D)


def attention_mask(mask: np.ndarray) -> np.ndarray:
    """Additive ``[B, 1, P, P]`` logit mask: query ``i`` may see key ``j`` iff ``j <= i`` and ``j`` is real."""
    mask = np.asarray(mask, dtype=bool)
    P = mask.shape[1]
    causal = np.tril(np.ones((P, P), dtype=bool))
    allowed = causal[None, :, :] & mask[:, None, :]
    return np.where(allowed, 0.0, NEG_INF)[:, None, :, :]


def causal_self_attention(x: Tensor, add_mask: np.ndarray, params: dict, name: str, cfg: EncoderConfig) -> Tensor:
    """Multi-head attention with per-head projections ``D -> d_k`` and output map ``W^O``."""
    if x.ndim != 3 or x.shape[-1] != cfg.D:
        raise ShapeError(f"attention input must be [B, P, {cfg.D}], got {x.shape}")
    B, P, _ = x.shape
    H, dk, dv = cfg.H, cfg.d_k, cfg.d_v

    def heads(w, d):
        return (x @ params[w]).reshape(B, P, H, d).transpose(0, 2, 1, 3)

    q = heads(f"{name}.wq", dk)
    k = heads(f"{name}.wk", dk)
    v = heads(f"{name}.wv", dv)
    logits = (q @ k.transpose(0, 1, 3, 2)) * (1.0 / math.sqrt(dk)) + add_mask
    attn = ad.softmax(logits)
    ctx = (attn @ v).transpose(0, 2, 1, 3).reshape(B, P, H * dv)
    return ctx @ params[f"{name}.wo"]


def encoder_layer(x: Tensor, add_mask, params, name, cfg, train, rng) -> Tensor:
    keep = 1.0 - cfg.dropout
    a = causal_self_attention(x, add_mask, params, name, cfg)
    x = ad.layer_norm(x + ad.dropout(a, keep, train, rng), params[f"{name}.ln1_g"], params[f"{name}.ln1_b"])
    f = ad.relu(x @ params[f"{name}.w1"] + params[f"{name}.b1"]) @ params[f"{name}.w2"] + params[f"{name}.b2"]
    return ad.layer_norm(x + ad.dropout(f, keep, train, rng), params[f"{name}.ln2_g"], params[f"{name}.ln2_b"])


def encode(x: Tensor, mask: np.ndarray, params: dict, cfg: EncoderConfig, prefix: str = "enc",
           train: bool = False, rng: np.random.Generator | None = None) -> Tensor:
    """Run the stack on embedded inputs ``[B, P, D]``; padded positions come out as zeros."""
    if train and cfg.dropout > 0 and rng is None:
        raise ValueError("train mode with dropout needs an rng")
    add_mask = attention_mask(mask)
    h = x
    for i in range(cfg.n_layers):
        h = encoder_layer(h, add_mask, params, f"{prefix}.{i}", cfg, train, rng)
    return h * np.asarray(mask, dtype=np.float64)[:, :, None]
