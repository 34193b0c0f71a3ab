"""Neighborhood embedding table and the two payload encoders."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataFormatError, DimensionError, VocabularyError

log = logging.getLogger(__name__)

DEFAULT_DIM = 200
DEFAULT_SCALE = 0.1


def _uniform(shape, seed, scale) -> np.ndarray:
    if not scale > 0:
        raise DimensionError(f"init scale must be > 0, got {scale}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return rng.uniform(-scale, scale, size=shape)


@dataclass
class EmbeddingTable:
    ids: list[str]
    matrix: np.ndarray

    @property
    def dim(self) -> int:
        return int(self.matrix.shape[1])

    def __len__(self):
        return int(self.matrix.shape[0])

    def copy(self) -> "EmbeddingTable":
        return EmbeddingTable(list(self.ids), self.matrix.copy())


def init_embeddings(n: int, d: int = DEFAULT_DIM, seed=0, scale: float = DEFAULT_SCALE,
                    ids: Sequence[str] | None = None) -> EmbeddingTable:
    """``n x d`` table with entries i.i.d. uniform in ``[-scale, scale]``."""
    if n < 1 or d < 1:
        raise DimensionError(f"embedding table needs N >= 1 and d >= 1, got ({n}, {d})")
    if ids is None:
        ids = [str(i) for i in range(n)]
    if len(ids) != n:
        raise DimensionError("ids length does not match N")
    return EmbeddingTable(list(ids), _uniform((n, d), seed, scale))


@dataclass
class FeatureEncoder:
    """Linear projection ``W x + b`` from precomputed image features to R^d."""

    weight: np.ndarray  # d x F
    bias: np.ndarray  # d

    def __post_init__(self):
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise DimensionError(f"encoder shapes disagree: W {self.weight.shape}, b {self.bias.shape}")

    @property
    def dim(self) -> int:
        return int(self.weight.shape[0])

    @property
    def in_dim(self) -> int:
        return int(self.weight.shape[1])


def init_feature_encoder(in_dim: int, d: int = DEFAULT_DIM, seed=0, scale: float = DEFAULT_SCALE) -> FeatureEncoder:
    """Uniform ``W`` scaled by ``1/sqrt(in_dim)``; zero bias."""
    if in_dim < 1 or d < 1:
        raise DimensionError(f"encoder needs positive dims, got F={in_dim}, d={d}")
    return FeatureEncoder(_uniform((d, in_dim), seed, scale / np.sqrt(in_dim)), np.zeros(d))


def encode_feature(enc: FeatureEncoder, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != enc.in_dim:
        raise DimensionError(f"feature length {x.shape[-1]} != encoder input {enc.in_dim}")
    return x @ enc.weight.T + enc.bias


@dataclass
class WordEncoder:
    """Trainable look-up table; rows follow ``vocabulary``."""

    vocabulary: dict[str, int]
    matrix: np.ndarray
    loaded: int = 0
    random_init: int = 0
    tokens: list[str] = field(init=False, repr=False)

    def __post_init__(self):
        if self.matrix.shape[0] != len(self.vocabulary):
            raise DimensionError("word matrix rows != vocabulary size")
        self.tokens = [""] * len(self.vocabulary)
        for t, i in self.vocabulary.items():
            self.tokens[i] = t

    @property
    def dim(self) -> int:
        return int(self.matrix.shape[1])

    def row(self, token: str) -> int:
        try:
            return self.vocabulary[token]
        except KeyError:
            raise VocabularyError(f"token {token!r} not in vocabulary") from None


def init_word_encoder(vocabulary: dict[str, int], d: int = DEFAULT_DIM, seed=0,
                      scale: float = DEFAULT_SCALE) -> WordEncoder:
    mat = _uniform((len(vocabulary), d), seed, scale)
    return WordEncoder(dict(vocabulary), mat, loaded=0, random_init=len(vocabulary))


def encode_word(enc: WordEncoder, token: str) -> np.ndarray:
    return enc.matrix[enc.row(token)]


def load_pretrained_words(path: str | Path, d: int, vocabulary: dict[str, int], seed=0,
                          scale: float = DEFAULT_SCALE) -> WordEncoder:
    """Initialise a word encoder from a ``token v1 ... vd`` text file.

    Vocabulary tokens missing from the file get the uniform random init.
    Tokens in the file but not in the vocabulary are ignored.
    """
    enc = init_word_encoder(vocabulary, d, seed, scale)
    found = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            token, vals = parts[0], parts[1:]
            if len(vals) != d:
                raise DataFormatError(f"{path}:{lineno}: expected {d} values for {token!r}, got {len(vals)}")
            try:
                vec = np.array([float(v) for v in vals])
            except ValueError:
                raise DataFormatError(f"{path}:{lineno}: non-numeric vector for {token!r}") from None
            if token in vocabulary:
                enc.matrix[vocabulary[token]] = vec
                found.add(token)
    enc.loaded = len(found)
    enc.random_init = len(vocabulary) - len(found)
    if enc.random_init:
        log.warning("%d of %d tokens had no pretrained vector", enc.random_init, len(vocabulary))
    return enc


def export_embeddings(table: EmbeddingTable, path: str | Path) -> None:
    """Write ``id,z_0,...,z_{d-1}``; floats use ``repr`` so reloads are exact."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id"] + [f"z_{k}" for k in range(table.dim)])
        for id_, row in zip(table.ids, table.matrix):
            w.writerow([id_] + [repr(float(v)) for v in row])


def read_embeddings(path: str | Path) -> EmbeddingTable:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0] != "id":
        raise DataFormatError(f"{path}: expected header starting with 'id'")
    ids = [r[0] for r in rows[1:]]
    try:
        mat = np.array([[float(v) for v in r[1:]] for r in rows[1:]], dtype=float)
    except ValueError as exc:
        raise DataFormatError(f"{path}: {exc}") from None
    if mat.ndim != 2 or mat.shape[1] != len(rows[0]) - 1:
        raise DataFormatError(f"{path}: ragged embedding rows")
    return EmbeddingTable(ids, mat)


def coverage(enc: WordEncoder, tokens: Iterable[str]) -> int:
    """Number of tokens that would raise on lookup."""
    return sum(1 for t in tokens if t not in enc.vocabulary)
