"""Transformer encoder with token/position/segment embeddings and a QA span head.

Post-norm residual ordering throughout; attention masking is additive (-1e9 on
padded positions before the softmax).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .tokenizer import Encoding

ATTENTION_MASK_VALUE = -1e9
INIT_STD = 0.02
LAYER_NORM_EPS = 1e-12


@dataclass(frozen=True)
class ModelConfig:
    num_layers: int = 2
    hidden_size: int = 64
    num_heads: int = 4
    ff_size: int = 256
    vocab_size: int = 2000
    max_positions: int = 128
    type_vocab: int = 2
    dropout_rate: float = 0.1

    def __post_init__(self):
        if self.hidden_size % self.num_heads != 0:
            raise ValueError(
                f"hidden_size {self.hidden_size} not divisible by num_heads {self.num_heads}"
            )
        if min(self.num_layers, self.hidden_size, self.num_heads, self.ff_size) < 1:
            raise ValueError("all encoder dimensions must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")

    @property
    def head_size(self) -> int:
        return self.hidden_size // self.num_heads

    def to_json(self) -> dict:
        return {
            "num_layers": self.num_layers,
            "hidden_size": self.hidden_size,
            "num_heads": self.num_heads,
            "ff_size": self.ff_size,
            "vocab_size": self.vocab_size,
            "max_positions": self.max_positions,
            "type_vocab": self.type_vocab,
            "dropout_rate": self.dropout_rate,
        }

    @staticmethod
    def from_json(raw: dict) -> "ModelConfig":
        return ModelConfig(**raw)


def parameter_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Canonical parameter name -> shape map; also fixes serialization order."""
    h, f = config.hidden_size, config.ff_size
    shapes: dict[str, tuple[int, ...]] = {
        "embed.token": (config.vocab_size, h),
        "embed.position": (config.max_positions, h),
        "embed.segment": (config.type_vocab, h),
        "embed.ln_gain": (h,),
        "embed.ln_bias": (h,),
    }
    for i in range(config.num_layers):
        p = f"layer{i}"
        shapes[f"{p}.attn.wq"] = (h, h)
        shapes[f"{p}.attn.bq"] = (h,)
        shapes[f"{p}.attn.wk"] = (h, h)
        shapes[f"{p}.attn.bk"] = (h,)
        shapes[f"{p}.attn.wv"] = (h, h)
        shapes[f"{p}.attn.bv"] = (h,)
        shapes[f"{p}.attn.wo"] = (h, h)
        shapes[f"{p}.attn.bo"] = (h,)
        shapes[f"{p}.attn.ln_gain"] = (h,)
        shapes[f"{p}.attn.ln_bias"] = (h,)
        shapes[f"{p}.ff.w1"] = (h, f)
        shapes[f"{p}.ff.b1"] = (f,)
        shapes[f"{p}.ff.w2"] = (f, h)
        shapes[f"{p}.ff.b2"] = (h,)
        shapes[f"{p}.ff.ln_gain"] = (h,)
        shapes[f"{p}.ff.ln_bias"] = (h,)
    shapes["qa_head.weight"] = (h, 2)
    shapes["qa_head.bias"] = (2,)
    return shapes


@dataclass
class ModelWeights:
    params: dict[str, Tensor] = field(default_factory=dict)

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def named(self) -> Iterable[tuple[str, Tensor]]:
        return self.params.items()

    def set_requires_grad(self, flag: bool) -> None:
        for t in self.params.values():
            t.requires_grad = flag


def _truncated_normal(rng: np.random.Generator, shape, std: float) -> np.ndarray:
    """Normal(0, std) resampled until everything lies within two deviations."""
    out = rng.normal(0.0, std, size=shape)
    while True:
        bad = np.abs(out) > 2.0 * std
        if not bad.any():
            return out
        out[bad] = rng.normal(0.0, std, size=int(bad.sum()))


def init_weights(config: ModelConfig, seed: int) -> ModelWeights:
    """Deterministic init: truncated normal matrices, unit gains, zero biases."""
    rng = np.random.default_rng(seed)
    params: dict[str, Tensor] = {}
    for name, shape in parameter_shapes(config).items():
        if name.endswith(("ln_gain",)):
            data = np.ones(shape)
        elif name.endswith(("ln_bias", ".bq", ".bk", ".bv", ".bo", ".b1", ".b2", ".bias")):
            data = np.zeros(shape)
        else:
            data = _truncated_normal(rng, shape, INIT_STD)
        params[name] = Tensor(data, requires_grad=True)
    return ModelWeights(params)


def is_no_decay_param(name: str) -> bool:
    """Layer-norm gains/biases and every bias vector are exempt from weight decay."""
    return name.endswith(
        ("ln_gain", "ln_bias", ".bq", ".bk", ".bv", ".bo", ".b1", ".b2", ".bias")
    )


def batch_arrays(batch: list[Encoding]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stack encodings into (ids, segment_ids, attention_mask) arrays."""
    if not batch:
        raise ValueError("empty batch")
    length = len(batch[0].ids)
    for enc in batch:
        if len(enc.ids) != length:
            raise ad.ShapeError(f"encoding length mismatch: {len(enc.ids)} != {length}")
    ids = np.array([enc.ids for enc in batch], dtype=np.intp)
    segs = np.array([enc.segment_ids for enc in batch], dtype=np.intp)
    mask = np.array([enc.attention_mask for enc in batch], dtype=np.float64)
    return ids, segs, mask


def _dropout_seed(base: int, step: int, site: int) -> int:
    # stable mixing for reproducible training; not cryptographic
    return (base * 1_000_003 + step * 10_007 + site * 97) & 0x7FFFFFFF


def _linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    return ad.add(ad.matmul(x, w), b)


def forward(
    weights: ModelWeights,
    config: ModelConfig,
    batch: list[Encoding],
    training: bool = False,
    dropout_seed: int = 0,
    step: int = 0,
    attention_out: list[np.ndarray] | None = None,
) -> tuple[Tensor, Tensor]:
    """Run the encoder; returns (start_logits, end_logits), each (batch, seq_len).

    When ``attention_out`` is a list, each layer's softmaxed attention
    probabilities (batch, heads, seq, seq) are appended to it.
    """
    ids, segs, mask = batch_arrays(batch)
    n_batch, seq_len = ids.shape
    if seq_len > config.max_positions:
        raise ad.ShapeError(f"sequence length {seq_len} exceeds max_positions {config.max_positions}")
    if ids.max() >= config.vocab_size:
        raise ad.ShapeError(f"token id {ids.max()} out of range for vocab_size {config.vocab_size}")
    p = weights.params
    rate = config.dropout_rate
    site = iter(range(10_000))

    def drop(x: Tensor) -> Tensor:
        return ad.dropout(x, rate, training, _dropout_seed(dropout_seed, step, next(site)))

    tok_emb = ad.embedding_lookup(p["embed.token"], ids)
    pos_emb = ad.embedding_lookup(p["embed.position"], np.arange(seq_len))
    seg_emb = ad.embedding_lookup(p["embed.segment"], segs)
    x = ad.add(ad.add(tok_emb, pos_emb), seg_emb)
    x = ad.layer_norm(x, p["embed.ln_gain"], p["embed.ln_bias"], LAYER_NORM_EPS)
    x = drop(x)

    # additive mask: 0 where attendable, -1e9 where padded
    mask_add = Tensor(((1.0 - mask) * ATTENTION_MASK_VALUE)[:, None, None, :])
    heads, d = config.num_heads, config.head_size

    def split_heads(t: Tensor) -> Tensor:
        return ad.transpose(ad.reshape(t, (n_batch, seq_len, heads, d)), (0, 2, 1, 3))

    for i in range(config.num_layers):
        prefix = f"layer{i}"
        q = split_heads(_linear(x, p[f"{prefix}.attn.wq"], p[f"{prefix}.attn.bq"]))
        k = split_heads(_linear(x, p[f"{prefix}.attn.wk"], p[f"{prefix}.attn.bk"]))
        v = split_heads(_linear(x, p[f"{prefix}.attn.wv"], p[f"{prefix}.attn.bv"]))
        scores = ad.scale(ad.matmul(q, ad.transpose(k, (0, 1, 3, 2))), 1.0 / np.sqrt(d))
        probs = ad.softmax(ad.add(scores, mask_add))
        if attention_out is not None:
            attention_out.append(probs.data)
        ctx = ad.matmul(probs, v)
        ctx = ad.reshape(ad.transpose(ctx, (0, 2, 1, 3)), (n_batch, seq_len, config.hidden_size))
        attn_out = drop(_linear(ctx, p[f"{prefix}.attn.wo"], p[f"{prefix}.attn.bo"]))
        x = ad.layer_norm(
            ad.add(x, attn_out), p[f"{prefix}.attn.ln_gain"], p[f"{prefix}.attn.ln_bias"], LAYER_NORM_EPS
        )
        ff = _linear(ad.gelu(_linear(x, p[f"{prefix}.ff.w1"], p[f"{prefix}.ff.b1"])),
                     p[f"{prefix}.ff.w2"], p[f"{prefix}.ff.b2"])
        x = ad.layer_norm(
            ad.add(x, drop(ff)), p[f"{prefix}.ff.ln_gain"], p[f"{prefix}.ff.ln_bias"], LAYER_NORM_EPS
        )

    logits = _linear(x, p["qa_head.weight"], p["qa_head.bias"])  # (B, T, 2)
    return ad.index_last(logits, 0), ad.index_last(logits, 1)
