"""Sentence embeddings from one of three interchangeable providers.

The trainable provider is a compact pre-norm transformer encoder written
directly in numpy, with a handwritten backward pass so analytic gradients
can be verified against finite differences. The other providers are a
deterministic random-projection encoder (a fast test double) and a loader
for precomputed embeddings produced externally.

Conventions: learned positional embeddings, GELU feedforward, no dropout,
layer norm eps 1e-5, weight init from a seeded normal with std 0.02.
Attention scores at padding positions are masked to -inf before softmax;
causal mode additionally masks future positions. Pooling takes the final
hidden state at position 0 (cls) or at the last unpadded position (eos).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import erf

from .corpus import TokenSequence, Vocabulary, encode_bert_style, encode_gpt_style
from .rng import derive_rng

POOL_CLS = "cls"
POOL_EOS = "eos"

_LN_EPS = 1e-5
_INIT_STD = 0.02


@dataclass(frozen=True)
class EncoderConfig:
    """Architecture of the compact transformer encoder.

    ``pooling="cls"`` pairs with bidirectional attention, ``pooling="eos"``
    with causal attention, mirroring the two encoder families the pipeline
    supports.
    """

    vocab_size: int
    max_len: int = 128
    model_dim: int = 64
    num_layers: int = 2
    num_heads: int = 4
    feedforward_dim: int = 128
    pooling: str = POOL_CLS
    causal: bool = False

    def __post_init__(self):
        if self.model_dim % self.num_heads != 0:
            raise ValueError(
                f"model_dim {self.model_dim} not divisible by num_heads {self.num_heads}"
            )
        if self.pooling not in (POOL_CLS, POOL_EOS):
            raise ValueError(f"pooling must be cls or eos, got {self.pooling!r}")
        if (self.pooling == POOL_EOS) != self.causal:
            raise ValueError("cls pooling requires non-causal attention, eos requires causal")
        for name in ("vocab_size", "max_len", "model_dim", "num_layers", "num_heads",
                     "feedforward_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    @property
    def head_dim(self) -> int:
        return self.model_dim // self.num_heads

    def to_payload(self) -> dict:
        return {
            "vocab_size": self.vocab_size, "max_len": self.max_len,
            "model_dim": self.model_dim, "num_layers": self.num_layers,
            "num_heads": self.num_heads, "feedforward_dim": self.feedforward_dim,
            "pooling": self.pooling, "causal": self.causal,
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "EncoderConfig":
        return cls(**payload)


@dataclass(frozen=True)
class Embedding:
    """Pooled sentence vector plus the provider that produced it."""

    values: np.ndarray
    source: str

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(values)):
            raise ValueError("embedding contains NaN or Inf")
        object.__setattr__(self, "values", values)

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])


def init_encoder_weights(config: EncoderConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Seeded weight tensors; layer norms start at identity."""
    d, ff = config.model_dim, config.feedforward_dim
    w = {
        "tok_emb": rng.normal(0.0, _INIT_STD, size=(config.vocab_size, d)),
        "pos_emb": rng.normal(0.0, _INIT_STD, size=(config.max_len, d)),
        "final_ln.gamma": np.ones(d),
        "final_ln.beta": np.zeros(d),
    }
    for i in range(config.num_layers):
        p = f"layer{i}."
        w[p + "ln1.gamma"] = np.ones(d)
        w[p + "ln1.beta"] = np.zeros(d)
        for name in ("wq", "wk", "wv", "wo"):
            w[p + "attn." + name] = rng.normal(0.0, _INIT_STD, size=(d, d))
        for name in ("bq", "bk", "bv", "bo"):
            w[p + "attn." + name] = np.zeros(d)
        w[p + "ln2.gamma"] = np.ones(d)
        w[p + "ln2.beta"] = np.zeros(d)
        w[p + "ff.w1"] = rng.normal(0.0, _INIT_STD, size=(d, ff))
        w[p + "ff.b1"] = np.zeros(ff)
        w[p + "ff.w2"] = rng.normal(0.0, _INIT_STD, size=(ff, d))
        w[p + "ff.b2"] = np.zeros(d)
    return w


def batch_from_sequences(sequences) -> tuple[np.ndarray, np.ndarray]:
    """Stack TokenSequences into (ids, mask) int64/float64 arrays."""
    ids = np.array([s.ids for s in sequences], dtype=np.int64)
    mask = np.array([s.mask for s in sequences], dtype=np.float64)
    return ids, mask


def _gelu(x):
    return 0.5 * x * (1.0 + erf(x / math.sqrt(2.0)))


def _gelu_grad(x):
    return 0.5 * (1.0 + erf(x / math.sqrt(2.0))) + x * np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


def _layer_norm(x, gamma, beta):
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + _LN_EPS)
    xhat = (x - mu) * inv_std
    return gamma * xhat + beta, (xhat, inv_std, gamma)


def _layer_norm_backward(dy, cache):
    xhat, inv_std, gamma = cache
    dgamma = (dy * xhat).sum(axis=tuple(range(dy.ndim - 1)))
    dbeta = dy.sum(axis=tuple(range(dy.ndim - 1)))
    dxhat = dy * gamma
    dx = inv_std * (
        dxhat
        - dxhat.mean(axis=-1, keepdims=True)
        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
    )
    return dx, dgamma, dbeta


def _split_heads(x, num_heads):
    b, length, d = x.shape
    return x.reshape(b, length, num_heads, d // num_heads).transpose(0, 2, 1, 3)


def _merge_heads(x):
    b, h, length, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, length, h * dh)


def _attention_mask(mask, causal: bool):
    # True where a query may attend to a key
    b, length = mask.shape
    allowed = (mask > 0.5)[:, None, None, :]
    allowed = np.broadcast_to(allowed, (b, 1, length, length))
    if causal:
        allowed = allowed & np.tril(np.ones((length, length), dtype=bool))
    return allowed


def encoder_forward(ids, mask, weights, config: EncoderConfig, train: bool = False):
    """Run the encoder on a batch.

    Args:
        ids: (B, L) int token ids, L == config.max_len.
        mask: (B, L) attention mask, 1 on real tokens.
        train: when True, also return the activation cache for the
            backward pass.

    Returns:
        ``pooled`` of shape (B, model_dim), and the cache (or None).
    """
    ids = np.asarray(ids, dtype=np.int64)
    mask = np.asarray(mask, dtype=np.float64)
    if ids.ndim != 2 or ids.shape[1] != config.max_len:
        raise ValueError(f"ids must be (B, {config.max_len}), got {ids.shape}")
    if ids.min() < 0 or ids.max() >= config.vocab_size:
        raise ValueError(f"token id out of range [0, {config.vocab_size})")

    b = ids.shape[0]
    scale = 1.0 / math.sqrt(config.head_dim)
    allowed = _attention_mask(mask, config.causal)

    x = weights["tok_emb"][ids] + weights["pos_emb"][None, :, :]
    layer_caches = []
    for i in range(config.num_layers):
        p = f"layer{i}."
        x_in = x
        h1, ln1_cache = _layer_norm(x, weights[p + "ln1.gamma"], weights[p + "ln1.beta"])
        q = _split_heads(h1 @ weights[p + "attn.wq"] + weights[p + "attn.bq"], config.num_heads)
        k = _split_heads(h1 @ weights[p + "attn.wk"] + weights[p + "attn.bk"], config.num_heads)
        v = _split_heads(h1 @ weights[p + "attn.wv"] + weights[p + "attn.bv"], config.num_heads)
        scores = np.where(allowed, (q @ k.transpose(0, 1, 3, 2)) * scale, -np.inf)
        scores_max = scores.max(axis=-1, keepdims=True)
        exp = np.exp(scores - scores_max)
        probs = exp / exp.sum(axis=-1, keepdims=True)
        ctx = _merge_heads(probs @ v)
        attn_out = ctx @ weights[p + "attn.wo"] + weights[p + "attn.bo"]
        x_mid = x_in + attn_out

        h2, ln2_cache = _layer_norm(x_mid, weights[p + "ln2.gamma"], weights[p + "ln2.beta"])
        a = h2 @ weights[p + "ff.w1"] + weights[p + "ff.b1"]
        g = _gelu(a)
        x = x_mid + g @ weights[p + "ff.w2"] + weights[p + "ff.b2"]

        if train:
            layer_caches.append({
                "ln1": ln1_cache, "h1": h1, "q": q, "k": k, "v": v, "probs": probs,
                "ctx": ctx, "ln2": ln2_cache, "h2": h2, "a": a, "g": g,
            })

    y, final_cache = _layer_norm(x, weights["final_ln.gamma"], weights["final_ln.beta"])
    if config.pooling == POOL_CLS:
        pool_idx = np.zeros(b, dtype=np.int64)
    else:
        pool_idx = mask.sum(axis=1).astype(np.int64) - 1
    pooled = y[np.arange(b), pool_idx]

    cache = None
    if train:
        cache = {
            "ids": ids, "pool_idx": pool_idx, "config": config, "scale": scale,
            "layers": layer_caches, "final_ln": final_cache, "weights": weights,
            "final_states": y,
        }
    return pooled, cache


def encoder_backward(d_pooled, cache) -> dict[str, np.ndarray]:
    """Gradients of a scalar loss w.r.t. every encoder weight tensor.

    ``d_pooled`` is the loss gradient at the pooled output, shape (B, d).
    """
    config: EncoderConfig = cache["config"]
    weights = cache["weights"]
    ids = cache["ids"]
    b = ids.shape[0]
    grads = {name: np.zeros_like(w) for name, w in weights.items()}

    dy = np.zeros((b, config.max_len, config.model_dim))
    dy[np.arange(b), cache["pool_idx"]] = d_pooled

    dx, dgamma, dbeta = _layer_norm_backward(dy, cache["final_ln"])
    grads["final_ln.gamma"] += dgamma
    grads["final_ln.beta"] += dbeta

    for i in reversed(range(config.num_layers)):
        p = f"layer{i}."
        lc = cache["layers"][i]

        # feedforward block
        df = dx
        da = (df @ weights[p + "ff.w2"].T) * _gelu_grad(lc["a"])
        grads[p + "ff.w2"] += lc["g"].reshape(-1, lc["g"].shape[-1]).T @ df.reshape(-1, df.shape[-1])
        grads[p + "ff.b2"] += df.sum(axis=(0, 1))
        grads[p + "ff.w1"] += lc["h2"].reshape(-1, lc["h2"].shape[-1]).T @ da.reshape(-1, da.shape[-1])
        grads[p + "ff.b1"] += da.sum(axis=(0, 1))
        dh2 = da @ weights[p + "ff.w1"].T
        dx_ln2, dgamma2, dbeta2 = _layer_norm_backward(dh2, lc["ln2"])
        grads[p + "ln2.gamma"] += dgamma2
        grads[p + "ln2.beta"] += dbeta2
        dx_mid = dx + dx_ln2

        # attention block
        dattn = dx_mid
        dctx = dattn @ weights[p + "attn.wo"].T
        grads[p + "attn.wo"] += lc["ctx"].reshape(-1, config.model_dim).T @ dattn.reshape(-1, config.model_dim)
        grads[p + "attn.bo"] += dattn.sum(axis=(0, 1))
        dctx_h = _split_heads(dctx, config.num_heads)
        dprobs = dctx_h @ lc["v"].transpose(0, 1, 3, 2)
        dv = lc["probs"].transpose(0, 1, 3, 2) @ dctx_h
        dscores = lc["probs"] * (dprobs - (dprobs * lc["probs"]).sum(axis=-1, keepdims=True))
        dq = (dscores @ lc["k"]) * cache["scale"]
        dk = (dscores.transpose(0, 1, 3, 2) @ lc["q"]) * cache["scale"]

        h1_flat = lc["h1"].reshape(-1, config.model_dim)
        dh1 = np.zeros_like(lc["h1"])
        for name, dmat in (("wq", dq), ("wk", dk), ("wv", dv)):
            merged = _merge_heads(dmat)
            grads[p + "attn." + name] += h1_flat.T @ merged.reshape(-1, config.model_dim)
            grads[p + "attn.b" + name[1]] += merged.sum(axis=(0, 1))
            dh1 += merged @ weights[p + "attn." + name].T
        dx_ln1, dgamma1, dbeta1 = _layer_norm_backward(dh1, lc["ln1"])
        grads[p + "ln1.gamma"] += dgamma1
        grads[p + "ln1.beta"] += dbeta1
        dx = dx_mid + dx_ln1

    grads["pos_emb"] += dx.sum(axis=0)
    np.add.at(grads["tok_emb"], ids, dx)
    return grads


def random_projection_encode(tokens: TokenSequence, seed: int, dim: int) -> Embedding:
    """Bag of seeded token-hash unit vectors, averaged over unpadded positions.

    Each token id maps to a fixed pseudo-random unit vector derived from
    ``(seed, id)``; the embedding is the mean over real token positions.
    """
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    real_ids = [tid for tid, m in zip(tokens.ids, tokens.mask) if m]
    if not real_ids:
        raise ValueError("token sequence has no unpadded positions")
    total = np.zeros(dim)
    for tid in real_ids:
        total += _token_unit_vector(seed, tid, dim)
    return Embedding(values=total / len(real_ids), source="random-projection")


def _token_unit_vector(seed: int, token_id: int, dim: int) -> np.ndarray:
    vec = derive_rng(seed, "token-vector", token_id).standard_normal(dim)
    return vec / np.linalg.norm(vec)


class TransformerEncoderProvider:
    """Trainable transformer provider bound to a vocabulary and weights."""

    kind = "transformer"

    def __init__(self, vocab: Vocabulary, config: EncoderConfig, weights: dict):
        if config.vocab_size != vocab.size:
            raise ValueError(
                f"config vocab_size {config.vocab_size} != vocabulary size {vocab.size}"
            )
        self.vocab = vocab
        self.config = config
        self.weights = weights

    @property
    def dim(self) -> int:
        return self.config.model_dim

    def encode_tokens(self, text: str) -> TokenSequence:
        if self.config.pooling == POOL_CLS:
            return encode_bert_style(text, self.vocab, self.config.max_len)
        return encode_gpt_style(text, self.vocab, self.config.max_len)

    def embed(self, text: str, sentence_id: str | None = None) -> np.ndarray:
        return self.embed_batch([text])[0]

    def embed_batch(self, texts, batch_size: int = 64) -> np.ndarray:
        out = np.zeros((len(texts), self.dim))
        for start in range(0, len(texts), batch_size):
            chunk = texts[start:start + batch_size]
            ids, mask = batch_from_sequences([self.encode_tokens(t) for t in chunk])
            pooled, _ = encoder_forward(ids, mask, self.weights, self.config)
            out[start:start + len(chunk)] = pooled
        return out

    def describe(self) -> dict:
        return {"kind": self.kind, "encoder_config": self.config.to_payload(),
                "vocab": self.vocab.to_payload()}


class RandomProjectionProvider:
    """Deterministic, training-free provider for fast pipeline runs."""

    kind = "random-projection"

    def __init__(self, vocab: Vocabulary, seed: int, dim: int = 64, max_len: int = 128):
        self.vocab = vocab
        self.seed = int(seed)
        self._dim = int(dim)
        self.max_len = int(max_len)

    @property
    def dim(self) -> int:
        return self._dim

    def embed(self, text: str, sentence_id: str | None = None) -> np.ndarray:
        tokens = encode_bert_style(text, self.vocab, self.max_len)
        return random_projection_encode(tokens, self.seed, self._dim).values

    def embed_batch(self, texts, batch_size: int = 64) -> np.ndarray:
        return np.stack([self.embed(t) for t in texts])

    def describe(self) -> dict:
        return {"kind": self.kind, "seed": self.seed, "dim": self._dim,
                "max_len": self.max_len, "vocab": self.vocab.to_payload()}


class PrecomputedProvider:
    """Embeddings looked up by sentence id from an external table."""

    kind = "precomputed"

    def __init__(self, table: dict[str, np.ndarray]):
        if not table:
            raise ValueError("empty embedding table")
        self.table = table
        self._dim = int(next(iter(table.values())).shape[0])

    @property
    def dim(self) -> int:
        return self._dim

    def embed(self, text: str, sentence_id: str | None = None) -> np.ndarray:
        if sentence_id is None:
            raise ValueError("precomputed provider needs a sentence id")
        if sentence_id not in self.table:
            raise ValueError(f"no precomputed embedding for id {sentence_id!r}")
        return self.table[sentence_id]

    def embed_batch(self, texts, sentence_ids=None, batch_size: int = 64) -> np.ndarray:
        if sentence_ids is None:
            raise ValueError("precomputed provider needs sentence ids")
        return np.stack([self.embed(t, sid) for t, sid in zip(texts, sentence_ids)])

    def describe(self) -> dict:
        return {"kind": self.kind, "dim": self._dim}


def store_precomputed(path, items) -> None:
    """Write an id-to-embedding table as JSONL with full float precision."""
    if hasattr(items, "items"):
        items = items.items()
    with Path(path).open("w", encoding="utf-8") as fh:
        for sid, values in items:
            values = np.asarray(values, dtype=float)
            row = {"id": str(sid), "dim": int(values.shape[0]),
                   "values": [float(v) for v in values]}
            fh.write(json.dumps(row) + "\n")


def load_precomputed(path) -> dict[str, np.ndarray]:
    """Parse an embedding JSONL file into an ordered id-to-vector table.

    Raises:
        ValueError: duplicate id, dim mismatch across rows, or a row whose
            declared dim differs from its value count.
    """
    table: dict[str, np.ndarray] = {}
    dim = None
    with Path(path).open(encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            row = json.loads(line)
            sid = str(row["id"])
            values = np.asarray(row["values"], dtype=float)
            if values.ndim != 1 or values.shape[0] != int(row["dim"]):
                raise ValueError(f"{path}: line {line_number}: declared dim does not match values")
            if sid in table:
                raise ValueError(f"{path}: line {line_number}: duplicate id {sid!r}")
            if dim is None:
                dim = values.shape[0]
            elif values.shape[0] != dim:
                raise ValueError(
                    f"{path}: line {line_number}: dim {values.shape[0]} != expected {dim}"
                )
            table[sid] = values
    if not table:
        raise ValueError(f"{path}: no embeddings found")
    return table
