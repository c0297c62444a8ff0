"""Pooled last-hidden-state extraction for a sentence CSV.

Bridges real pretrained language models into the readability pipeline's
``precomputed`` encoder provider: each input sentence becomes one JSONL
row ``{"id": ..., "dim": <hidden size>, "values": [...]}``, in input
order. Pooling is either the first position (cls, bidirectional encoder
models) or the last unpadded position (eos, causal models).

Sentences are truncated to 128 tokens; for eos pooling the end-of-sequence
token is always kept as the last unpadded token. Models whose tokenizer
has no padding token get one added (with the embedding matrix resized).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import torch
from transformers import AutoModel, AutoTokenizer

MAX_TOKENS = 128
PAD_TOKEN_FALLBACK = "<|pad|>"

POOL_CLS = "cls"
POOL_EOS = "eos"


@dataclass(frozen=True)
class ExportJob:
    """One export run: which model, which pooling, which files."""

    input_csv: str
    model_id: str
    pooling: str
    output_path: str
    batch_size: int = 8

    def __post_init__(self):
        if self.pooling not in (POOL_CLS, POOL_EOS):
            raise ValueError(f"pooling must be {POOL_CLS} or {POOL_EOS}, got {self.pooling!r}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


def read_sentence_csv(path) -> list[tuple[str, str]]:
    """Read ``id,sentence[,mos]`` rows, stripping one pair of masking quotes."""
    rows: list[tuple[str, str]] = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:2] != ["id", "sentence"]:
            raise ValueError(f"{path}: expected header starting with id,sentence")
        for number, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) < 2 or not row[0]:
                raise ValueError(f"{path}: row {number}: expected id,sentence[,...]")
            text = row[1]
            if len(text) >= 2 and text.startswith('"') and text.endswith('"'):
                text = text[1:-1]
            rows.append((row[0], text))
    if not rows:
        raise ValueError(f"{path}: no sentences found")
    return rows


def _ensure_pad_token(tokenizer, model) -> None:
    if tokenizer.pad_token is not None:
        return
    tokenizer.add_special_tokens({"pad_token": PAD_TOKEN_FALLBACK})
    model.resize_token_embeddings(len(tokenizer))


def _eos_style_batch(tokenizer, texts: list[str]) -> dict[str, torch.Tensor]:
    """[bos] tokens [eos] with right padding; eos survives truncation."""
    if tokenizer.eos_token_id is None:
        raise ValueError("eos pooling needs a tokenizer with an end-of-sequence token")
    sequences = []
    for text in texts:
        ids = tokenizer.encode(text, add_special_tokens=False)
        prefix = [tokenizer.bos_token_id] if tokenizer.bos_token_id is not None else []
        body_budget = MAX_TOKENS - len(prefix) - 1
        ids = prefix + ids[:body_budget] + [tokenizer.eos_token_id]
        sequences.append(ids)
    input_ids = torch.full((len(sequences), MAX_TOKENS), tokenizer.pad_token_id,
                           dtype=torch.long)
    attention_mask = torch.zeros((len(sequences), MAX_TOKENS), dtype=torch.long)
    for row, ids in enumerate(sequences):
        input_ids[row, :len(ids)] = torch.tensor(ids, dtype=torch.long)
        attention_mask[row, :len(ids)] = 1
    return {"input_ids": input_ids, "attention_mask": attention_mask}


def _cls_style_batch(tokenizer, texts: list[str]) -> dict[str, torch.Tensor]:
    encoded = tokenizer(texts, padding="max_length", truncation=True,
                        max_length=MAX_TOKENS, return_tensors="pt")
    return {"input_ids": encoded["input_ids"], "attention_mask": encoded["attention_mask"]}


def export_embeddings(job: ExportJob) -> int:
    """Run one export job; returns the number of rows written."""
    rows = read_sentence_csv(job.input_csv)
    tokenizer = AutoTokenizer.from_pretrained(job.model_id)
    model = AutoModel.from_pretrained(job.model_id)
    model.eval()
    _ensure_pad_token(tokenizer, model)

    hidden_size = model.config.hidden_size
    written = 0
    with Path(job.output_path).open("w", encoding="utf-8") as out:
        for start in range(0, len(rows), job.batch_size):
            chunk = rows[start:start + job.batch_size]
            texts = [text for _, text in chunk]
            if job.pooling == POOL_EOS:
                batch = _eos_style_batch(tokenizer, texts)
            else:
                batch = _cls_style_batch(tokenizer, texts)
            with torch.no_grad():
                states = model(**batch).last_hidden_state
            if job.pooling == POOL_EOS:
                last = batch["attention_mask"].sum(dim=1) - 1
                pooled = states[torch.arange(states.shape[0]), last]
            else:
                pooled = states[:, 0]
            for (sentence_id, _), vector in zip(chunk, pooled):
                values = [float(v) for v in vector.tolist()]
                out.write(json.dumps({"id": sentence_id, "dim": hidden_size,
                                      "values": values}) + "\n")
                written += 1
    return written
