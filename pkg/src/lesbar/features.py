"""Surface, lexical, and rarity features per sentence, plus standardization.

The catalog is an explicit, fixed-order list spanning the classic feature
families: length and punctuation counts, long-word counts at several
character thresholds, type-token ratio, syllable estimates, and
frequency-lexicon rarity. Its version string is derived from the feature
names and parameters, so any change to the order or the rules changes the
version.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

_WORD_RE = re.compile(r"\w+", re.UNICODE)
_PUNCT_RE = re.compile(r"[^\w\s]", re.UNICODE)

# vowels for the syllable heuristic, including the German umlauts and
# common accented forms; a maximal run of these counts as one nucleus
_VOWELS = set("aeiouyäöüàáâãåæèéêëìíîïòóôõøùúûœ")

DEFAULT_LONG_WORD_THRESHOLDS = (6, 8, 10, 13)
DEFAULT_FREQUENCY_FLOOR = 0.01


def count_syllables(word: str) -> int:
    """Estimate syllables as maximal vowel groups, at least 1 per word.

    Approximate by construction: consecutive vowels count as one nucleus,
    and vowel-free tokens (digits, abbreviations) count as one syllable.
    """
    groups = 0
    in_group = False
    for ch in word.lower():
        if ch in _VOWELS:
            if not in_group:
                groups += 1
            in_group = True
        else:
            in_group = False
    return max(groups, 1)


class FrequencyLexicon:
    """Case-insensitive word-frequency lookup with a floor for missing words."""

    def __init__(self, frequencies: dict[str, float], floor: float = DEFAULT_FREQUENCY_FLOOR):
        if floor <= 0.0:
            raise ValueError(f"floor frequency must be > 0, got {floor}")
        for word, freq in frequencies.items():
            if freq <= 0.0:
                raise ValueError(f"frequency for {word!r} must be > 0, got {freq}")
        self._frequencies = {word.lower(): float(freq) for word, freq in frequencies.items()}
        self.floor = float(floor)

    def __len__(self) -> int:
        return len(self._frequencies)

    def __contains__(self, word: str) -> bool:
        return word.lower() in self._frequencies

    def lookup(self, word: str) -> float:
        """Frequency of ``word`` (case-insensitive), or the floor if absent."""
        return self._frequencies.get(word.lower(), self.floor)


def load_frequency_lexicon(path, floor: float = DEFAULT_FREQUENCY_FLOOR) -> FrequencyLexicon:
    """Parse a ``word<TAB>frequency`` TSV; duplicates keep the first occurrence.

    Raises:
        ValueError: malformed line or non-positive frequency, named by line
            number.
    """
    frequencies: dict[str, float] = {}
    with Path(path).open(encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0]:
                raise ValueError(f"{path}: line {line_number}: expected word<TAB>frequency")
            word, raw = parts
            try:
                freq = float(raw)
            except ValueError:
                raise ValueError(f"{path}: line {line_number}: bad frequency {raw!r}") from None
            if freq <= 0.0:
                raise ValueError(f"{path}: line {line_number}: frequency must be > 0, got {freq}")
            key = word.lower()
            if key not in frequencies:
                frequencies[key] = freq
    return FrequencyLexicon(frequencies, floor=floor)


@dataclass(frozen=True)
class FeatureCatalog:
    """Fixed-order feature list; the version pins order and parameters."""

    long_word_thresholds: tuple[int, ...] = DEFAULT_LONG_WORD_THRESHOLDS
    names: tuple[str, ...] = field(init=False)
    version: str = field(init=False)

    def __post_init__(self):
        names = ["token_count", "char_count", "mean_word_length", "max_word_length"]
        for c in self.long_word_thresholds:
            names.append(f"words_over_{c}_count")
            names.append(f"words_over_{c}_ratio")
        names += [
            "punctuation_count",
            "comma_count",
            "digit_count",
            "type_token_ratio",
            "unique_word_count",
            "mean_log_frequency",
            "min_log_frequency",
            "oov_count",
            "syllable_count",
            "mean_syllables_per_word",
            "max_syllables_per_word",
            "monosyllable_ratio",
            "polysyllable_count",
            "polysyllable_ratio",
            "uppercase_initial_ratio",
        ]
        object.__setattr__(self, "names", tuple(names))
        digest = hashlib.blake2s(";".join(names).encode("utf-8"), digest_size=4).hexdigest()
        object.__setattr__(self, "version", f"catalog-v1-{digest}")

    @property
    def size(self) -> int:
        return len(self.names)


@dataclass(frozen=True)
class FeatureVector:
    """Feature values for one sentence, tied to a catalog version."""

    values: np.ndarray
    catalog_version: str

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(values)):
            raise ValueError("feature vector contains NaN or Inf")
        object.__setattr__(self, "values", values)


def extract_features(text: str, lexicon: FrequencyLexicon,
                     catalog: FeatureCatalog | None = None) -> FeatureVector:
    """Compute the catalog's feature vector for one sentence.

    Words are the ``\\w+`` runs of the text, punctuation the remaining
    non-space characters. Word-based statistics of a word-free text are 0.
    """
    if catalog is None:
        catalog = FeatureCatalog()
    if not text.strip():
        raise ValueError("cannot extract features from empty text")

    words = _WORD_RE.findall(text)
    n_words = len(words)
    lengths = [len(w) for w in words]
    syllables = [count_syllables(w) for w in words]
    log_freqs = [math.log10(lexicon.lookup(w)) for w in words]

    values: list[float] = [
        float(n_words),
        float(len(text)),
        float(np.mean(lengths)) if words else 0.0,
        float(max(lengths)) if words else 0.0,
    ]
    for c in catalog.long_word_thresholds:
        over = sum(1 for ln in lengths if ln > c)
        values.append(float(over))
        values.append(over / n_words if n_words else 0.0)

    unique = {w.lower() for w in words}
    values += [
        float(len(_PUNCT_RE.findall(text))),
        float(text.count(",")),
        float(sum(ch.isdigit() for ch in text)),
        len(unique) / n_words if n_words else 0.0,
        float(len(unique)),
        float(np.mean(log_freqs)) if words else 0.0,
        float(min(log_freqs)) if words else 0.0,
        float(sum(1 for w in words if w not in lexicon)),
        float(sum(syllables)),
        float(np.mean(syllables)) if words else 0.0,
        float(max(syllables)) if words else 0.0,
        sum(1 for s in syllables if s == 1) / n_words if n_words else 0.0,
        float(sum(1 for s in syllables if s >= 3)),
        sum(1 for s in syllables if s >= 3) / n_words if n_words else 0.0,
        sum(1 for w in words if w[:1].isupper()) / n_words if n_words else 0.0,
    ]
    return FeatureVector(values=np.array(values, dtype=float), catalog_version=catalog.version)


@dataclass
class FeatureScaler:
    """Per-feature standardizer fitted on training vectors only."""

    mean: np.ndarray
    std: np.ndarray
    catalog_version: str

    STD_FLOOR = 1e-12

    @property
    def size(self) -> int:
        return int(self.mean.shape[0])


def fit_scaler(vectors) -> FeatureScaler:
    """Fit per-feature mean and population standard deviation."""
    vectors = list(vectors)
    if not vectors:
        raise ValueError("cannot fit scaler on an empty vector list")
    version = vectors[0].catalog_version
    for v in vectors:
        if v.catalog_version != version:
            raise ValueError("mixed catalog versions in scaler fit")
    matrix = np.stack([v.values for v in vectors])
    return FeatureScaler(
        mean=matrix.mean(axis=0),
        std=matrix.std(axis=0),
        catalog_version=version,
    )


def apply_scaler(scaler: FeatureScaler, vector: FeatureVector) -> FeatureVector:
    """Standardize one vector; features with near-zero spread map to 0."""
    if vector.catalog_version != scaler.catalog_version:
        raise ValueError(
            f"catalog version mismatch: scaler {scaler.catalog_version}, "
            f"vector {vector.catalog_version}"
        )
    if vector.values.shape != scaler.mean.shape:
        raise ValueError("feature length does not match scaler")
    live = scaler.std >= FeatureScaler.STD_FLOOR
    scaled = np.zeros_like(vector.values)
    scaled[live] = (vector.values[live] - scaler.mean[live]) / scaler.std[live]
    return FeatureVector(values=scaled, catalog_version=vector.catalog_version)


def write_feature_table(csv_path, ids, vectors, catalog: FeatureCatalog) -> None:
    """Dump features as CSV (id + one column per feature) plus a JSON sidecar."""
    csv_path = Path(csv_path)
    with csv_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", *catalog.names])
        for sid, vec in zip(ids, vectors):
            if vec.catalog_version != catalog.version:
                raise ValueError(f"vector for {sid!r} has a different catalog version")
            writer.writerow([sid, *[repr(float(x)) for x in vec.values]])
    sidecar = {"catalog_version": catalog.version, "feature_names": list(catalog.names)}
    csv_path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2) + "\n", encoding="utf-8")


def read_feature_table(csv_path) -> tuple[list[str], list[FeatureVector]]:
    """Load a feature dump written by write_feature_table."""
    csv_path = Path(csv_path)
    sidecar = json.loads(csv_path.with_suffix(".json").read_text(encoding="utf-8"))
    version = sidecar["catalog_version"]
    names = sidecar["feature_names"]
    ids: list[str] = []
    vectors: list[FeatureVector] = []
    with csv_path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[0] != "id" or header[1:len(names) + 1] != names:
            raise ValueError(f"{csv_path}: header does not match sidecar feature names")
        for row in reader:
            ids.append(row[0])
            vectors.append(FeatureVector(
                values=np.array([float(x) for x in row[1:len(names) + 1]]),
                catalog_version=version,
            ))
    return ids, vectors
