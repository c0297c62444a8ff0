"""Losses, optimizers, schedules, early stopping, and two-phase training.

Phase 1 fine-tunes the transformer encoder end to end with a temporary
linear regression head, AdamW, and linear warmup; the head is discarded
afterwards. Phase 2 trains a one-hidden-layer MLP with RMSprop on frozen
sentence embeddings concatenated with standardized readability features.
Both phases keep the checkpoint with the lowest early-stopping RMSE.

All parameter collections are flat ``name -> ndarray`` dicts so the
optimizers, checkpointing, and gradient checks share one representation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .corpus import RatedSentence, build_vocab
from .encoder import (
    EncoderConfig,
    PrecomputedProvider,
    RandomProjectionProvider,
    TransformerEncoderProvider,
    batch_from_sequences,
    encoder_backward,
    encoder_forward,
    init_encoder_weights,
    load_precomputed,
)
from .features import FeatureCatalog, FeatureScaler, apply_scaler, extract_features, fit_scaler
from .metrics import rmse
from .rng import derive_rng

_INIT_STD = 0.02


@dataclass(frozen=True)
class TrainingConfig:
    """Hyperparameters for both training phases."""

    batch_size: int = 16
    phase1_lr: float = 5e-5
    phase2_lr: float = 1e-3
    warmup_fraction: float = 0.3
    phase1_max_epochs: int = 100
    phase1_patience: int = 5
    phase1_warmup_grace: int = 300
    phase2_max_epochs: int = 5000
    phase2_patience: int = 100
    eval_every: int | None = None
    mlp_hidden: int = 128
    seed: int = 0

    def __post_init__(self):
        positive = (
            "batch_size", "phase1_lr", "phase2_lr", "phase1_max_epochs",
            "phase1_patience", "phase2_max_epochs", "phase2_patience", "mlp_hidden",
        )
        for name in positive:
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.phase1_warmup_grace < 0:
            raise ValueError("phase1_warmup_grace must be >= 0")
        if not (0.0 < self.warmup_fraction < 1.0):
            raise ValueError(f"warmup_fraction must be in (0, 1), got {self.warmup_fraction}")
        if self.eval_every is not None and self.eval_every <= 0:
            raise ValueError("eval_every must be positive when set")


def mse_loss(pred, target) -> tuple[float, np.ndarray]:
    """Mean squared error and its gradient w.r.t. the predictions."""
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {target.shape}")
    diff = pred - target
    loss = float(np.mean(diff ** 2))
    return loss, 2.0 * diff / diff.size


def warmup_lr(step: int, total_steps: int, eta: float, fraction: float) -> float:
    """Linear warmup from 0 to eta over the first ``fraction`` of steps, then constant."""
    if total_steps <= 0:
        raise ValueError(f"total_steps must be positive, got {total_steps}")
    warmup_end = math.ceil(fraction * total_steps)
    if step < warmup_end:
        return eta * step / warmup_end
    return eta


class AdamWState:
    """Per-parameter moment estimates for AdamW with decoupled weight decay."""

    def __init__(self, params: dict, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8, weight_decay: float = 0.01):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = {name: np.zeros_like(p) for name, p in params.items()}
        self.v = {name: np.zeros_like(p) for name, p in params.items()}


def adamw_step(params: dict, grads: dict, state: AdamWState, lr: float) -> dict:
    """One AdamW update, in place; weight decay is decoupled from the moments."""
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape mismatch for {name}: {g.shape} vs {p.shape}")
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= lr * ((m / bc1) / (np.sqrt(v / bc2) + state.eps) + state.weight_decay * p)
    return params


class RMSPropState:
    """Running squared-gradient average for RMSprop."""

    def __init__(self, params: dict, alpha: float = 0.99, eps: float = 1e-8):
        self.alpha = alpha
        self.eps = eps
        self.sq = {name: np.zeros_like(p) for name, p in params.items()}


def rmsprop_step(params: dict, grads: dict, state: RMSPropState, lr: float) -> dict:
    """One RMSprop update, in place."""
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape mismatch for {name}: {g.shape} vs {p.shape}")
        sq = state.sq[name]
        sq *= state.alpha
        sq += (1.0 - state.alpha) * g * g
        p -= lr * g / (np.sqrt(sq) + state.eps)
    return params


def init_mlp(n_in: int, hidden: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Hidden layer + single output neuron; seeded normal weights, zero biases."""
    return {
        "w1": rng.normal(0.0, _INIT_STD, size=(n_in, hidden)),
        "b1": np.zeros(hidden),
        "w2": rng.normal(0.0, _INIT_STD, size=hidden),
        "b2": np.array(0.0),
    }


def mlp_forward(x, w: dict):
    """Score = w2 . relu(w1 x + b1) + b2 for a single vector or a batch.

    Returns the scores and the activation cache for mlp_backward.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xb = x[None, :] if single else x
    if xb.shape[1] != w["w1"].shape[0]:
        raise ValueError(f"input dim {xb.shape[1]} != mlp input dim {w['w1'].shape[0]}")
    z = xb @ w["w1"] + w["b1"]
    h = np.maximum(z, 0.0)
    scores = h @ w["w2"] + w["b2"]
    cache = (xb, z, h)
    return (float(scores[0]) if single else scores), cache


def mlp_backward(d_scores, cache, w: dict):
    """Gradients of a scalar loss w.r.t. the MLP weights given d(loss)/d(scores)."""
    xb, z, h = cache
    d_scores = np.atleast_1d(np.asarray(d_scores, dtype=float))
    dh = d_scores[:, None] * w["w2"][None, :]
    dz = dh * (z > 0.0)
    return {
        "w1": xb.T @ dz,
        "b1": dz.sum(axis=0),
        "w2": h.T @ d_scores,
        "b2": np.array(d_scores.sum()),
    }


@dataclass
class EarlyStopState:
    """Best-so-far tracker with patience and a warmup grace window.

    Stopping is suppressed until ``updates_done`` exceeds ``grace``;
    improvement means a strictly lower RMSE than the best seen so far.
    """

    patience: int
    grace: int = 0
    best_rmse: float = math.inf
    best_checkpoint: object = None
    evals_since_best: int = 0
    updates_done: int = 0

CONTINUE = "continue"
STOP = "stop"


def early_stop_update(state: EarlyStopState, current_rmse: float, checkpoint=None) -> str:
    """Record one evaluation; returns ``"stop"`` or ``"continue"``.

    ``checkpoint`` may be a value or a zero-argument callable; it is
    snapshotted only on improvement.
    """
    if math.isnan(current_rmse):
        raise ValueError("early stopping received NaN rmse")
    if current_rmse < state.best_rmse:
        state.best_rmse = current_rmse
        state.best_checkpoint = checkpoint() if callable(checkpoint) else checkpoint
        state.evals_since_best = 0
    else:
        state.evals_since_best += 1
    if state.evals_since_best >= state.patience and state.updates_done > state.grace:
        return STOP
    return CONTINUE


def _copy_params(params: dict) -> dict:
    return {name: p.copy() for name, p in params.items()}


@dataclass
class Phase1Result:
    weights: dict
    best_rmse: float
    updates_done: int
    evals_done: int
    eval_every: int


def train_phase1(train: list[RatedSentence], early_stop: list[RatedSentence],
                 vocab, encoder_config: EncoderConfig, config: TrainingConfig) -> Phase1Result:
    """Fine-tune the encoder end to end with a temporary linear head.

    AdamW with linear warmup on MSE; the early-stopping set is scored every
    ``eval_every`` gradient updates (default: half an epoch, rounded up).
    Training stops at the epoch cap or when the early-stopping RMSE has not
    improved for ``phase1_patience`` evaluations outside the grace window.
    The head is dropped; only the best encoder weights are returned.
    """
    if not train or not early_stop:
        raise ValueError("phase 1 needs non-empty train and early-stop sets")
    train_ids_set = {s.id for s in train}
    if any(s.id in train_ids_set for s in early_stop):
        raise ValueError("train and early-stop sets overlap")

    provider = TransformerEncoderProvider(vocab, encoder_config,
                                          init_encoder_weights(encoder_config,
                                                               derive_rng(config.seed, "encoder-init")))
    weights = provider.weights
    head_rng = derive_rng(config.seed, "head-init")
    params = dict(weights)
    params["head.w"] = head_rng.normal(0.0, _INIT_STD, size=encoder_config.model_dim)
    params["head.b"] = np.array(0.0)

    ids, mask = batch_from_sequences([provider.encode_tokens(s.text) for s in train])
    y = np.array([s.mos for s in train])
    es_ids, es_mask = batch_from_sequences([provider.encode_tokens(s.text) for s in early_stop])
    es_y = np.array([s.mos for s in early_stop])

    n = len(train)
    steps_per_epoch = math.ceil(n / config.batch_size)
    eval_every = config.eval_every or math.ceil(steps_per_epoch / 2)
    total_steps = steps_per_epoch * config.phase1_max_epochs

    opt = AdamWState(params)
    stopper = EarlyStopState(patience=config.phase1_patience, grace=config.phase1_warmup_grace)
    updates_done = 0
    evals_done = 0

    def head_predict(ids_arr, mask_arr):
        preds = np.zeros(ids_arr.shape[0])
        for start in range(0, ids_arr.shape[0], 64):
            pooled, _ = encoder_forward(ids_arr[start:start + 64], mask_arr[start:start + 64],
                                        params, encoder_config)
            preds[start:start + 64] = pooled @ params["head.w"] + params["head.b"]
        return preds

    def evaluate():
        nonlocal evals_done
        evals_done += 1
        stopper.updates_done = updates_done
        return early_stop_update(stopper, rmse(es_y, head_predict(es_ids, es_mask)),
                                 checkpoint=lambda: _copy_params(params))

    stopped = False
    for epoch in range(config.phase1_max_epochs):
        order = derive_rng(config.seed, "phase1-batch-order", epoch).permutation(n)
        for start in range(0, n, config.batch_size):
            pick = order[start:start + config.batch_size]
            pooled, cache = encoder_forward(ids[pick], mask[pick], params, encoder_config,
                                            train=True)
            pred = pooled @ params["head.w"] + params["head.b"]
            _, d_pred = mse_loss(pred, y[pick])
            grads = encoder_backward(d_pred[:, None] * params["head.w"][None, :], cache)
            grads["head.w"] = pooled.T @ d_pred
            grads["head.b"] = np.array(d_pred.sum())
            lr = warmup_lr(updates_done, total_steps, config.phase1_lr, config.warmup_fraction)
            adamw_step(params, grads, opt, lr)
            updates_done += 1
            if updates_done % eval_every == 0 and evaluate() == STOP:
                stopped = True
                break
        if stopped:
            break
    if not stopped and updates_done % eval_every != 0:
        evaluate()

    best = stopper.best_checkpoint
    best_weights = {name: best[name] for name in weights}
    return Phase1Result(weights=best_weights, best_rmse=stopper.best_rmse,
                        updates_done=updates_done, evals_done=evals_done,
                        eval_every=eval_every)


@dataclass
class Phase2Result:
    mlp: dict
    scaler: FeatureScaler
    best_rmse: float
    epochs_done: int


def train_phase2(train_embeddings, train_features, train_labels,
                 es_embeddings, es_features, es_labels,
                 config: TrainingConfig) -> Phase2Result:
    """Train the feature-aware MLP on frozen embeddings with RMSprop.

    The scaler is fitted on the training feature vectors only; inputs are
    the embeddings concatenated with standardized features. One
    early-stopping evaluation per epoch, best checkpoint kept.
    """
    train_features = list(train_features)
    es_features = list(es_features)
    if not train_features or not es_features:
        raise ValueError("phase 2 needs non-empty train and early-stop sets")
    scaler = fit_scaler(train_features)

    def assemble(embeddings, feature_vectors):
        emb = np.asarray(embeddings, dtype=float)
        feats = np.stack([apply_scaler(scaler, v).values for v in feature_vectors])
        if emb.shape[0] != feats.shape[0]:
            raise ValueError(f"{emb.shape[0]} embeddings vs {feats.shape[0]} feature vectors")
        return np.concatenate([emb, feats], axis=1)

    x_train = assemble(train_embeddings, train_features)
    x_es = assemble(es_embeddings, es_features)
    y_train = np.asarray(train_labels, dtype=float)
    y_es = np.asarray(es_labels, dtype=float)

    mlp = init_mlp(x_train.shape[1], config.mlp_hidden, derive_rng(config.seed, "mlp-init"))
    opt = RMSPropState(mlp)
    stopper = EarlyStopState(patience=config.phase2_patience, grace=0)
    n = x_train.shape[0]
    epochs_done = 0

    for epoch in range(config.phase2_max_epochs):
        order = derive_rng(config.seed, "phase2-batch-order", epoch).permutation(n)
        for start in range(0, n, config.batch_size):
            pick = order[start:start + config.batch_size]
            scores, cache = mlp_forward(x_train[pick], mlp)
            _, d_scores = mse_loss(scores, y_train[pick])
            rmsprop_step(mlp, mlp_backward(d_scores, cache, mlp), opt, config.phase2_lr)
        epochs_done += 1
        stopper.updates_done = epochs_done
        es_scores, _ = mlp_forward(x_es, mlp)
        if early_stop_update(stopper, rmse(y_es, es_scores),
                             checkpoint=lambda: _copy_params(mlp)) == STOP:
            break

    return Phase2Result(mlp=stopper.best_checkpoint, scaler=scaler,
                        best_rmse=stopper.best_rmse, epochs_done=epochs_done)


@dataclass
class TrainedModel:
    """Everything needed to score a sentence: provider, MLP, scaler."""

    provider: object
    mlp: dict
    scaler: FeatureScaler
    catalog_version: str

    def __post_init__(self):
        expected = self.provider.dim + self.scaler.size
        actual = self.mlp["w1"].shape[0]
        if actual != expected:
            raise ValueError(
                f"mlp input dim {actual} != embedding dim {self.provider.dim} "
                f"+ feature dim {self.scaler.size}"
            )


def predict(text: str, model: TrainedModel, lexicon, catalog: FeatureCatalog,
            sentence_id: str | None = None) -> float:
    """Score one sentence; raw output, no clamping (filtering is ensemble-side)."""
    embedding = model.provider.embed(text, sentence_id)
    features = apply_scaler(model.scaler, extract_features(text, lexicon, catalog))
    score, _ = mlp_forward(np.concatenate([embedding, features.values]), model.mlp)
    return score


def predict_many(sentences, model: TrainedModel, lexicon, catalog: FeatureCatalog) -> np.ndarray:
    """Score a list of RatedSentences in order (batch embedding path)."""
    texts = [s.text for s in sentences]
    if model.provider.kind == "precomputed":
        emb = model.provider.embed_batch(texts, sentence_ids=[s.id for s in sentences])
    else:
        emb = model.provider.embed_batch(texts)
    feats = np.stack([
        apply_scaler(model.scaler, extract_features(t, lexicon, catalog)).values for t in texts
    ])
    scores, _ = mlp_forward(np.concatenate([emb, feats], axis=1), model.mlp)
    return scores


@dataclass(frozen=True)
class ProviderSpec:
    """Which embedding provider a member uses, and how to build it."""

    kind: str = "transformer"  # transformer | random-projection | precomputed
    encoder: EncoderConfig | None = None
    projection_dim: int = 64
    vocab_max_size: int = 4000
    embeddings_path: str | None = None

    def __post_init__(self):
        if self.kind not in ("transformer", "random-projection", "precomputed"):
            raise ValueError(f"unknown provider kind {self.kind!r}")
        if self.kind == "precomputed" and not self.embeddings_path:
            raise ValueError("precomputed provider needs embeddings_path")


@dataclass
class MemberResult:
    model: TrainedModel
    phase1_rmse: float | None
    phase2_rmse: float


def train_member(train: list[RatedSentence], early_stop: list[RatedSentence],
                 lexicon, catalog: FeatureCatalog, spec: ProviderSpec,
                 config: TrainingConfig) -> MemberResult:
    """Run the full per-member pipeline: phase 1 (if trainable), then phase 2."""
    phase1_rmse = None
    if spec.kind == "transformer":
        encoder_config = spec.encoder or EncoderConfig(vocab_size=1)
        vocab = build_vocab(train, spec.vocab_max_size)
        encoder_config = replace(encoder_config, vocab_size=vocab.size)
        result = train_phase1(train, early_stop, vocab, encoder_config, config)
        provider = TransformerEncoderProvider(vocab, encoder_config, result.weights)
        phase1_rmse = result.best_rmse
    elif spec.kind == "random-projection":
        vocab = build_vocab(train, spec.vocab_max_size)
        max_len = spec.encoder.max_len if spec.encoder else 128
        provider = RandomProjectionProvider(vocab, seed=config.seed,
                                            dim=spec.projection_dim, max_len=max_len)
    else:
        provider = PrecomputedProvider(load_precomputed(spec.embeddings_path))

    def embeddings_for(sentences):
        texts = [s.text for s in sentences]
        if spec.kind == "precomputed":
            return provider.embed_batch(texts, sentence_ids=[s.id for s in sentences])
        return provider.embed_batch(texts)

    features_for = lambda sentences: [
        extract_features(s.text, lexicon, catalog) for s in sentences
    ]
    phase2 = train_phase2(
        embeddings_for(train), features_for(train), [s.mos for s in train],
        embeddings_for(early_stop), features_for(early_stop), [s.mos for s in early_stop],
        config,
    )
    model = TrainedModel(provider=provider, mlp=phase2.mlp, scaler=phase2.scaler,
                         catalog_version=catalog.version)
    return MemberResult(model=model, phase1_rmse=phase1_rmse, phase2_rmse=phase2.best_rmse)
