"""Frozen toy text encoder and caption utilities.

A seeded embedding table stands in for a pretrained language model: captions
are lowercased, stripped of punctuation, split on whitespace, and mapped to
fixed random embedding rows.  The table is frozen; nothing here trains.

An empty caption encodes to the reserved null sequence, which denoisers
treat as "no conditioning" (they substitute their own learned null row, so
the tau payload of a null sequence is never read).
"""

from __future__ import annotations

import string
from dataclasses import dataclass

import numpy as np

from audiodiff.errors import ContractError, ParameterError

# Whole-word markers of captions that describe more than one event in time.
TEMPORAL_IDENTIFIERS = frozenset({"while", "before", "after", "then",
                                  "followed"})
MULTIPLE_EVENTS = "multiple-events"
SINGLE_EVENT = "single-event"

UNKNOWN_ID = 0

_PUNCT_TABLE = str.maketrans({ch: " " for ch in string.punctuation})


def normalize_caption(text: str) -> list[str]:
    """Lowercase, turn punctuation into spaces, split on whitespace."""
    return text.lower().translate(_PUNCT_TABLE).split()


@dataclass(frozen=True, eq=False)
class ConditioningSequence:
    """Token ids plus their embedding rows (L x d_text).

    tau always has at least one row.  is_null marks the reserved empty
    conditioning; its tau content is a placeholder that consumers must not
    read.
    """

    tokens: tuple[int, ...]
    tau: np.ndarray
    is_null: bool = False

    def __post_init__(self):
        if self.tau.ndim != 2 or self.tau.shape[0] < 1:
            raise ContractError("tau must be (L, d_text) with L >= 1")
        if not np.all(np.isfinite(self.tau)):
            raise ContractError("tau values must be finite")


def null_sequence(d_text: int = 1) -> ConditioningSequence:
    return ConditioningSequence(tokens=(), tau=np.zeros((1, d_text)),
                                is_null=True)


class ToyVocabulary:
    """Seeded frozen word embeddings with a reserved unknown id 0.

    The table is generated row-major from the seed, so loading a saved
    vocabulary (seed plus word-id lines) rebuilds identical embeddings, and
    existing rows are stable when the vocabulary grows.
    """

    def __init__(self, words, d_text: int = 16, seed: int = 0):
        if d_text < 1:
            raise ParameterError("d_text must be >= 1")
        self.d_text = int(d_text)
        self.seed = int(seed)
        self.word_to_id: dict[str, int] = {}
        for word in words:
            if not word or word != word.lower() or " " in word:
                raise ParameterError(f"bad vocabulary word: {word!r}")
            if word not in self.word_to_id:
                self.word_to_id[word] = len(self.word_to_id) + 1
        rng = np.random.default_rng(self.seed)
        self.table = rng.standard_normal(
            (len(self.word_to_id) + 1, self.d_text))
        self.table.setflags(write=False)

    @classmethod
    def from_captions(cls, captions, d_text: int = 16, seed: int = 0):
        words = []
        for cap in captions:
            words.extend(normalize_caption(cap))
        return cls(dict.fromkeys(words), d_text=d_text, seed=seed)

    def __len__(self):
        return len(self.word_to_id) + 1

    def encode(self, caption: str) -> ConditioningSequence:
        """Embed a caption; the empty caption yields the null sequence."""
        tokens = normalize_caption(caption)
        if not tokens:
            return null_sequence(self.d_text)
        ids = tuple(self.word_to_id.get(t, UNKNOWN_ID) for t in tokens)
        return ConditioningSequence(tokens=ids, tau=self.table[list(ids)],
                                    is_null=False)

    # -------------------------------------------------------- persistence

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"#audiodiff-vocab v1 d_text={self.d_text} "
                     f"seed={self.seed}\n")
            for word, idx in sorted(self.word_to_id.items(),
                                    key=lambda kv: kv[1]):
                fh.write(f"{word} {idx}\n")

    @classmethod
    def load(cls, path) -> "ToyVocabulary":
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
        if not lines or not lines[0].startswith("#audiodiff-vocab v1"):
            raise ParameterError("not a vocabulary file")
        header = dict(item.split("=", 1)
                      for item in lines[0].split()[1:] if "=" in item)
        by_id = {}
        for line in lines[1:]:
            if not line.strip():
                continue
            word, idx = line.rsplit(" ", 1)
            by_id[int(idx)] = word
        if sorted(by_id) != list(range(1, len(by_id) + 1)):
            raise ParameterError("vocabulary ids must be 1..V")
        words = [by_id[i] for i in range(1, len(by_id) + 1)]
        return cls(words, d_text=int(header["d_text"]),
                   seed=int(header["seed"]))


def concat_captions(a: str, b: str) -> str:
    """Join two captions for a mixed clip with a single-space separator."""
    if not normalize_caption(a) or not normalize_caption(b):
        raise ParameterError("both captions must be non-empty")
    return f"{a} {b}"


def classify_temporal(caption: str) -> str:
    """Tag a caption as multiple-events when it contains any whole-word
    temporal identifier (while/before/after/then/followed)."""
    tokens = normalize_caption(caption)
    if any(tok in TEMPORAL_IDENTIFIERS for tok in tokens):
        return MULTIPLE_EVENTS
    return SINGLE_EVENT


def read_captions(path) -> list[str]:
    """One caption per line, UTF-8."""
    with open(path, "r", encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh]


def write_captions(path, captions) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for cap in captions:
            fh.write(cap + "\n")
