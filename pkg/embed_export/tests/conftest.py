import os

os.environ.setdefault("HF_HUB_OFFLINE", "1")
os.environ.setdefault("TRANSFORMERS_OFFLINE", "1")

import pytest
import torch
from transformers import (
    BertConfig,
    BertModel,
    BertTokenizer,
    GPT2Config,
    GPT2Model,
    GPT2Tokenizer,
)
from transformers.convert_slow_tokenizer import bytes_to_unicode

SENTENCES = [
    ("s00", "Der Hund bellt laut."),
    ("s01", "Die Katze schläft."),
    ("s02", '"Er sagte, hallo."'),
    ("s03", "Ein Baum steht im Wald."),
    ("s04", "Heute scheint die Sonne."),
    ("s05", "Das Wasser ist kalt."),
    ("s06", "Wir lesen ein Buch."),
    ("s07", "Der Zug kommt um acht."),
    ("s08", "Sie spielt gern Schach."),
    ("s09", "Morgen regnet es vielleicht."),
]


@pytest.fixture(scope="session")
def sentence_csv(tmp_path_factory):
    import csv

    path = tmp_path_factory.mktemp("data") / "sentences.csv"
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "sentence", "mos"])
        for i, (sid, text) in enumerate(SENTENCES):
            writer.writerow([sid, text, 1.0 + i * 0.5])
    return path


@pytest.fixture(scope="session")
def bidirectional_model_dir(tmp_path_factory):
    """Randomly initialized bidirectional encoder with hidden size 1024."""
    directory = tmp_path_factory.mktemp("bert-tiny-1024")
    words = sorted({w.lower() for _, text in SENTENCES for w in text.split()})
    vocab = {token: index for index, token in
             enumerate(["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", *words])}
    tokenizer = BertTokenizer(vocab=vocab)
    tokenizer.save_pretrained(directory)
    torch.manual_seed(0)
    config = BertConfig(
        vocab_size=len(vocab), hidden_size=1024, num_hidden_layers=1,
        num_attention_heads=8, intermediate_size=256, max_position_embeddings=192,
    )
    BertModel(config).save_pretrained(directory)
    return directory


@pytest.fixture(scope="session")
def causal_model_dir(tmp_path_factory):
    """Randomly initialized causal model with hidden size 1600 and no pad token."""
    directory = tmp_path_factory.mktemp("gpt2-tiny-1600")
    byte_symbols = list(bytes_to_unicode().values())
    vocab = {symbol: index for index, symbol in enumerate(byte_symbols)}
    vocab["<|endoftext|>"] = len(vocab)
    tokenizer = GPT2Tokenizer(vocab=vocab, merges=[])
    tokenizer.save_pretrained(directory)
    torch.manual_seed(0)
    config = GPT2Config(
        vocab_size=len(vocab), n_embd=1600, n_layer=1, n_head=8,
        n_positions=256, n_inner=400,
    )
    GPT2Model(config).save_pretrained(directory)
    return directory
