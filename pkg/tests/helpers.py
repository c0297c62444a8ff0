"""Shared synthetic-data builders for the test suite."""

from __future__ import annotations

import numpy as np

from lesbar.corpus import RatedSentence
from lesbar.features import FrequencyLexicon
from lesbar.rng import derive_rng

SHORT_WORDS = [
    "der", "die", "das", "und", "ist", "ein", "mit", "auf", "Hund", "Haus",
    "Baum", "rot", "gut", "alt", "neu", "Wald", "Berg", "See", "Tag", "Jahr",
]
LONG_WORDS = [
    "Geschwindigkeit", "Verantwortung", "Wahrscheinlichkeit", "Entwicklung",
    "Grundlage", "Verwaltung", "Zusammenarbeit", "Untersuchung",
]


def lexicon_for_tests() -> FrequencyLexicon:
    freqs = {w.lower(): 120.0 for w in SHORT_WORDS}
    freqs.update({w.lower(): 3.5 for w in LONG_WORDS})
    return FrequencyLexicon(freqs)


def synthetic_corpus(n: int, seed: int, noise: float = 0.25,
                     long_word_prob: float = 0.25) -> list[RatedSentence]:
    """Sentences whose labels are a clamped affine function of surface features.

    label = clamp(0.9 + 0.32 * token_count + 0.45 * long_word_count + noise, 1, 7)
    """
    rng = derive_rng(seed, "synthetic-corpus")
    sentences = []
    for i in range(n):
        k = int(rng.integers(3, 13))
        words = []
        n_long = 0
        for _ in range(k):
            if rng.random() < long_word_prob:
                words.append(LONG_WORDS[rng.integers(len(LONG_WORDS))])
                n_long += 1
            else:
                words.append(SHORT_WORDS[rng.integers(len(SHORT_WORDS))])
        text = " ".join(words) + "."
        label = 0.9 + 0.32 * k + 0.45 * n_long + rng.normal(0.0, noise)
        sentences.append(RatedSentence(id=f"s{i:04d}", text=text,
                                       mos=float(np.clip(label, 1.0, 7.0))))
    return sentences


def count_corpus(n: int, seed: int, slope: float = 0.5) -> list[RatedSentence]:
    """Noise-free corpus where the label is affine in the token count."""
    rng = derive_rng(seed, "count-corpus")
    sentences = []
    for i in range(n):
        k = int(rng.integers(2, 12))
        text = " ".join(SHORT_WORDS[rng.integers(len(SHORT_WORDS))] for _ in range(k))
        sentences.append(RatedSentence(id=f"c{i:04d}", text=text,
                                       mos=float(np.clip(1.0 + slope * k, 1.0, 7.0))))
    return sentences
