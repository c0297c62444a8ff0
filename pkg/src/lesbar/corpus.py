"""Labeled sentence corpus: loading, cleanup, splits, and tokenization.

The corpus file is a UTF-8 CSV with the exact header ``id,sentence,mos``.
Sentence fields may carry one extra pair of masking double quotes (a
producer quirk when sentences contain commas); loading strips exactly one
leading and one trailing quote when both are present.

Cross-validation and early-stopping splits are pure functions of
``(corpus, k, es_fraction, seed)``; manifests serialize to JSON.
"""

from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass
from pathlib import Path

from .rng import derive_rng

MOS_MIN = 1.0
MOS_MAX = 7.0

_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
CLS_TOKEN = "<cls>"
BOS_TOKEN = "<bos>"
EOS_TOKEN = "<eos>"
SPECIAL_TOKENS = (PAD_TOKEN, UNK_TOKEN, CLS_TOKEN, BOS_TOKEN, EOS_TOKEN)


@dataclass(frozen=True)
class RatedSentence:
    """One labeled sentence: the unit of supervision.

    Attributes:
        id: Opaque string identifier, unique within a corpus.
        text: Cleaned UTF-8 sentence text, non-empty.
        mos: Mean opinion score on the 1..7 scale.
    """

    id: str
    text: str
    mos: float


@dataclass(frozen=True)
class FoldSplit:
    """Disjoint id sets for one cross-validation fold.

    ``train_ids + early_stop_ids + validation_ids`` partition the corpus;
    ids are kept in corpus order so manifests are deterministic.
    """

    fold_index: int
    train_ids: tuple[str, ...]
    early_stop_ids: tuple[str, ...]
    validation_ids: tuple[str, ...]


@dataclass(frozen=True)
class TokenSequence:
    """Fixed-length token ids with an attention mask.

    ``ids`` has exactly ``len(mask)`` entries; the mask is 1 on real tokens
    and 0 on the contiguous padding tail.
    """

    ids: tuple[int, ...]
    mask: tuple[int, ...]

    def __post_init__(self):
        if len(self.ids) != len(self.mask):
            raise ValueError("ids and mask lengths differ")

    @property
    def length(self) -> int:
        return len(self.ids)

    @property
    def real_length(self) -> int:
        return int(sum(self.mask))


def clean_sentence(text: str) -> str:
    """Strip one leading and one trailing double quote when both are present."""
    if len(text) >= 2 and text.startswith('"') and text.endswith('"'):
        return text[1:-1]
    return text


def tokenize(text: str) -> list[str]:
    """Case-preserving split on whitespace and punctuation boundaries."""
    return _TOKEN_RE.findall(text)


def load_corpus(path) -> list[RatedSentence]:
    """Load and clean a labeled corpus CSV.

    Raises:
        ValueError: on a bad header, a malformed row (named by file row
            number), a duplicate id, an empty cleaned sentence, or an MOS
            outside [1, 7] (named by id).
    """
    path = Path(path)
    sentences: list[RatedSentence] = []
    seen: set[str] = set()
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file, expected header id,sentence,mos")
        if header != ["id", "sentence", "mos"]:
            raise ValueError(f"{path}: bad header {header!r}, expected ['id', 'sentence', 'mos']")
        for row_number, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise ValueError(f"{path}: row {row_number}: expected 3 fields, got {len(row)}")
            sid, raw_text, raw_mos = row
            if not sid:
                raise ValueError(f"{path}: row {row_number}: empty id")
            if sid in seen:
                raise ValueError(f"{path}: row {row_number}: duplicate id {sid!r}")
            text = clean_sentence(raw_text)
            if not text.strip():
                raise ValueError(f"{path}: row {row_number}: sentence empty after cleanup")
            try:
                mos = float(raw_mos)
            except ValueError:
                raise ValueError(f"{path}: row {row_number}: malformed mos {raw_mos!r}") from None
            if not (MOS_MIN <= mos <= MOS_MAX):
                raise ValueError(f"mos {mos} outside [1, 7] for id {sid!r}")
            seen.add(sid)
            sentences.append(RatedSentence(id=sid, text=text, mos=mos))
    return sentences


def write_corpus(path, sentences) -> None:
    """Write sentences as a corpus CSV that round-trips through load_corpus.

    Texts that themselves start and end with a double quote get one masking
    pair added, which loading strips back off.
    """
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "sentence", "mos"])
        for s in sentences:
            text = s.text
            if len(text) >= 2 and text.startswith('"') and text.endswith('"'):
                text = f'"{text}"'
            writer.writerow([s.id, text, repr(float(s.mos))])


def _fold_sizes(n: int, k: int) -> list[int]:
    base, rem = divmod(n, k)
    return [base + (1 if i < rem else 0) for i in range(k)]


def _rounded_count(fraction: float, n: int) -> int:
    # round half up, so 0.8 -> 1 and 80.0 -> 80
    return int(fraction * n + 0.5)


def _in_corpus_order(ids, order: dict[str, int]) -> tuple[str, ...]:
    return tuple(sorted(ids, key=order.__getitem__))


def make_cv_splits(corpus, k: int, es_fraction: float, seed: int) -> list[FoldSplit]:
    """Shuffle the corpus and produce k folds with early-stopping carve-outs.

    Per fold, one k-th of the shuffled corpus becomes the validation set and
    ``es_fraction`` of the remainder is carved out for early stopping. The
    result is a pure function of ``(corpus, k, es_fraction, seed)``.
    """
    ids = [s.id for s in corpus]
    n = len(ids)
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if k > n:
        raise ValueError(f"k={k} exceeds corpus size {n}")
    if not (0.0 < es_fraction < 1.0):
        raise ValueError(f"es_fraction must be in (0, 1), got {es_fraction}")

    order = {sid: i for i, sid in enumerate(ids)}
    perm = derive_rng(seed, "cv-shuffle").permutation(n)
    shuffled = [ids[i] for i in perm]

    splits: list[FoldSplit] = []
    start = 0
    for fold, size in enumerate(_fold_sizes(n, k)):
        validation = shuffled[start:start + size]
        start += size
        val_set = set(validation)
        non_val = [sid for sid in shuffled if sid not in val_set]
        es_count = _rounded_count(es_fraction, len(non_val))
        if es_count < 1 or es_count >= len(non_val):
            raise ValueError(
                f"fold {fold}: early-stop carve of {es_count} from {len(non_val)} "
                "leaves no training data"
            )
        picks = derive_rng(seed, "early-stop", fold).choice(
            len(non_val), size=es_count, replace=False
        )
        es_set = {non_val[i] for i in picks}
        train = [sid for sid in non_val if sid not in es_set]
        splits.append(FoldSplit(
            fold_index=fold,
            train_ids=_in_corpus_order(train, order),
            early_stop_ids=_in_corpus_order(es_set, order),
            validation_ids=_in_corpus_order(validation, order),
        ))
    return splits


def carve_final_split(corpus, es_fraction: float = 0.075, seed: int = 0) -> tuple[tuple[str, ...], tuple[str, ...]]:
    """Carve an early-stopping set out of the full corpus, no validation fold.

    Returns:
        ``(train_ids, early_stop_ids)`` in corpus order.
    """
    ids = [s.id for s in corpus]
    n = len(ids)
    if n == 0:
        raise ValueError("empty corpus")
    if not (0.0 < es_fraction < 1.0):
        raise ValueError(f"es_fraction must be in (0, 1), got {es_fraction}")
    es_count = _rounded_count(es_fraction, n)
    if es_count < 1 or es_count >= n:
        raise ValueError(f"early-stop carve of {es_count} from {n} leaves no training data")
    order = {sid: i for i, sid in enumerate(ids)}
    perm = derive_rng(seed, "final-shuffle").permutation(n)
    shuffled = [ids[i] for i in perm]
    es = shuffled[:es_count]
    train = shuffled[es_count:]
    return _in_corpus_order(train, order), _in_corpus_order(es, order)


def write_split_manifest(path, split: FoldSplit, seed: int) -> None:
    """Write one fold's split manifest as JSON."""
    payload = {
        "fold": split.fold_index,
        "train": list(split.train_ids),
        "early_stop": list(split.early_stop_ids),
        "validation": list(split.validation_ids),
        "seed": seed,
    }
    Path(path).write_text(json.dumps(payload, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def load_split_manifest(path) -> tuple[FoldSplit, int]:
    """Read a split manifest back into a FoldSplit plus its seed."""
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    split = FoldSplit(
        fold_index=int(payload["fold"]),
        train_ids=tuple(payload["train"]),
        early_stop_ids=tuple(payload["early_stop"]),
        validation_ids=tuple(payload["validation"]),
    )
    return split, int(payload["seed"])


class Vocabulary:
    """Token-to-id map with fixed special tokens.

    Ids 0..4 are reserved for ``<pad>, <unk>, <cls>, <bos>, <eos>``; corpus
    tokens follow. Lookup of an unknown token yields the <unk> id.
    """

    def __init__(self, tokens):
        self._token_to_id: dict[str, int] = {}
        for i, tok in enumerate(SPECIAL_TOKENS):
            self._token_to_id[tok] = i
        for tok in tokens:
            if tok in self._token_to_id:
                raise ValueError(f"duplicate or reserved token {tok!r}")
            self._token_to_id[tok] = len(self._token_to_id)

    @property
    def pad_id(self) -> int:
        return self._token_to_id[PAD_TOKEN]

    @property
    def unk_id(self) -> int:
        return self._token_to_id[UNK_TOKEN]

    @property
    def cls_id(self) -> int:
        return self._token_to_id[CLS_TOKEN]

    @property
    def bos_id(self) -> int:
        return self._token_to_id[BOS_TOKEN]

    @property
    def eos_id(self) -> int:
        return self._token_to_id[EOS_TOKEN]

    @property
    def size(self) -> int:
        return len(self._token_to_id)

    def __contains__(self, token: str) -> bool:
        return token in self._token_to_id

    def lookup(self, token: str) -> int:
        return self._token_to_id.get(token, self._token_to_id[UNK_TOKEN])

    def tokens(self) -> list[str]:
        """All tokens in id order, specials first."""
        return sorted(self._token_to_id, key=self._token_to_id.__getitem__)

    def to_payload(self) -> dict:
        return {"tokens": self.tokens()[len(SPECIAL_TOKENS):]}

    @classmethod
    def from_payload(cls, payload: dict) -> "Vocabulary":
        return cls(payload["tokens"])


def build_vocab(sentences, max_size: int) -> Vocabulary:
    """Build a vocabulary from training sentences only.

    The ``max_size`` most frequent tokens are kept, frequency ties broken
    lexicographically; special tokens are always included on top.
    """
    if max_size < 1:
        raise ValueError(f"max_size must be >= 1, got {max_size}")
    counts: dict[str, int] = {}
    for s in sentences:
        text = s.text if isinstance(s, RatedSentence) else s
        for tok in tokenize(text):
            counts[tok] = counts.get(tok, 0) + 1
    ranked = sorted(counts, key=lambda t: (-counts[t], t))
    return Vocabulary(ranked[:max_size])


def encode_bert_style(text: str, vocab: Vocabulary, max_len: int) -> TokenSequence:
    """Encode as ``[<cls>, tokens..., <pad>...]``, truncating at the tail."""
    if max_len < 1:
        raise ValueError(f"max_len must be >= 1, got {max_len}")
    ids = [vocab.cls_id] + [vocab.lookup(t) for t in tokenize(text)]
    ids = ids[:max_len]
    real = len(ids)
    ids.extend([vocab.pad_id] * (max_len - real))
    mask = [1] * real + [0] * (max_len - real)
    return TokenSequence(ids=tuple(ids), mask=tuple(mask))


def encode_gpt_style(text: str, vocab: Vocabulary, max_len: int) -> TokenSequence:
    """Encode as ``[<bos>, tokens..., <eos>, <pad>...]``.

    When truncating, <eos> is always retained as the last unpadded token.
    """
    if max_len < 2:
        raise ValueError(f"max_len must be >= 2, got {max_len}")
    body = [vocab.lookup(t) for t in tokenize(text)][:max_len - 2]
    ids = [vocab.bos_id] + body + [vocab.eos_id]
    real = len(ids)
    ids.extend([vocab.pad_id] * (max_len - real))
    mask = [1] * real + [0] * (max_len - real)
    return TokenSequence(ids=tuple(ids), mask=tuple(mask))
