"""Model checkpoint IO: JSON manifest plus raw float32 tensor file.

A checkpoint is a pair ``<prefix>.json`` / ``<prefix>.bin``. The manifest
carries the provider description, catalog version, and a tensor index;
the binary file holds all tensors as little-endian IEEE-754 float32,
concatenated in lexicographic name order, so identical models always
serialize to identical bytes.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .corpus import Vocabulary
from .encoder import (
    EncoderConfig,
    PrecomputedProvider,
    RandomProjectionProvider,
    TransformerEncoderProvider,
    load_precomputed,
)
from .features import FeatureScaler
from .training import TrainedModel

FORMAT = "lesbar-checkpoint-v1"


def _collect_tensors(model: TrainedModel) -> dict[str, np.ndarray]:
    tensors = {f"mlp.{name}": arr for name, arr in model.mlp.items()}
    tensors["scaler.mean"] = model.scaler.mean
    tensors["scaler.std"] = model.scaler.std
    if model.provider.kind == "transformer":
        for name, arr in model.provider.weights.items():
            tensors[f"encoder.{name}"] = arr
    return tensors


def save_checkpoint(prefix, model: TrainedModel) -> None:
    """Write ``<prefix>.json`` and ``<prefix>.bin`` for a trained model."""
    prefix = Path(prefix)
    tensors = _collect_tensors(model)
    index = []
    offset = 0
    blobs = []
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype="<f4")
        blob = arr.tobytes()
        index.append({"name": name, "shape": list(tensors[name].shape), "offset": offset})
        blobs.append(blob)
        offset += len(blob)
    manifest = {
        "format": FORMAT,
        "provider": model.provider.describe(),
        "catalog_version": model.catalog_version,
        "tensor_index": index,
    }
    Path(str(prefix) + ".bin").write_bytes(b"".join(blobs))
    Path(str(prefix) + ".json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_checkpoint(prefix, embeddings_path=None) -> TrainedModel:
    """Rebuild a TrainedModel from a checkpoint prefix.

    The precomputed provider stores no table in the checkpoint; pass the
    embedding JSONL via ``embeddings_path`` when loading such a model.
    """
    prefix = Path(prefix)
    manifest = json.loads(Path(str(prefix) + ".json").read_text(encoding="utf-8"))
    if manifest.get("format") != FORMAT:
        raise ValueError(f"{prefix}: unknown checkpoint format {manifest.get('format')!r}")
    raw = Path(str(prefix) + ".bin").read_bytes()

    tensors: dict[str, np.ndarray] = {}
    for entry in manifest["tensor_index"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        arr = np.frombuffer(raw, dtype="<f4", count=count, offset=start)
        tensors[entry["name"]] = arr.astype(float).reshape(shape)

    provider_info = manifest["provider"]
    kind = provider_info["kind"]
    if kind == "transformer":
        vocab = Vocabulary.from_payload(provider_info["vocab"])
        config = EncoderConfig.from_payload(provider_info["encoder_config"])
        weights = {
            name[len("encoder."):]: arr for name, arr in tensors.items()
            if name.startswith("encoder.")
        }
        provider = TransformerEncoderProvider(vocab, config, weights)
    elif kind == "random-projection":
        vocab = Vocabulary.from_payload(provider_info["vocab"])
        provider = RandomProjectionProvider(
            vocab, seed=provider_info["seed"], dim=provider_info["dim"],
            max_len=provider_info["max_len"],
        )
    elif kind == "precomputed":
        if embeddings_path is None:
            raise ValueError("checkpoint uses precomputed embeddings: pass embeddings_path")
        provider = PrecomputedProvider(load_precomputed(embeddings_path))
    else:
        raise ValueError(f"{prefix}: unknown provider kind {kind!r}")

    mlp = {name[len("mlp."):]: arr for name, arr in tensors.items() if name.startswith("mlp.")}
    scaler = FeatureScaler(mean=tensors["scaler.mean"], std=tensors["scaler.std"],
                           catalog_version=manifest["catalog_version"])
    return TrainedModel(provider=provider, mlp=mlp, scaler=scaler,
                        catalog_version=manifest["catalog_version"])
