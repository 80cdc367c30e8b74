"""Fixed-layout feature vectors for candidate entity pairs.

Segments, in order:

    similarity   1                 cosine of the two span embeddings
    distance     1                 syntactic distance / distance_norm, clamped
    dep_path     max_path_len*dim  interior tokens of the head-to-head path, zero padded
    span1, span2 dim each          mean-pooled entity embeddings
    vicinity1/2  2*window*dim      (flatten) or 2*dim (mean): left then right context

The order is frozen; ``LAYOUT_VERSION`` is stored with trained models.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import NamedTuple, Sequence

import numpy as np

from . import embeddings as emb
from .corpus import CandidatePair, Document
from .embeddings import EmbeddingTable
from .syntax import SENTINEL_CROSS, dependency_path, document_trees, head_token, pair_distance

LAYOUT_VERSION = 1
VICINITY_MODES = ("flatten", "mean")


@dataclass(frozen=True)
class FeatureConfig:
    embed_dim: int
    vicinity_window: int = 50
    max_path_len: int = 5
    vicinity_mode: str = "flatten"
    distance_norm: float = 10.0
    distance_clamp: float = 100.0

    def __post_init__(self):
        if self.embed_dim <= 0 or self.max_path_len <= 0 or self.vicinity_window <= 0:
            raise ValueError("embed_dim, max_path_len and vicinity_window must be positive")
        if self.distance_norm <= 0:
            raise ValueError("distance_norm must be positive")
        if self.vicinity_mode not in VICINITY_MODES:
            raise ValueError(f"vicinity_mode must be one of {VICINITY_MODES}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureConfig":
        return cls(**d)


class Segment(NamedTuple):
    name: str
    offset: int
    length: int


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    layout: tuple[Segment, ...]

    def __len__(self) -> int:
        return len(self.values)

    def segment(self, name: str) -> np.ndarray:
        for s in self.layout:
            if s.name == name:
                return self.values[s.offset:s.offset + s.length]
        raise KeyError(name)


def _vicinity_len(config: FeatureConfig) -> int:
    slots = 2 * config.vicinity_window if config.vicinity_mode == "flatten" else 2
    return slots * config.embed_dim


def feature_length(config: FeatureConfig) -> int:
    d = config.embed_dim
    return 2 + (config.max_path_len + 2) * d + 2 * _vicinity_len(config)


def describe_layout(config: FeatureConfig) -> tuple[Segment, ...]:
    d = config.embed_dim
    lengths = [
        ("similarity", 1),
        ("distance", 1),
        ("dep_path", config.max_path_len * d),
        ("span1", d),
        ("span2", d),
        ("vicinity1", _vicinity_len(config)),
        ("vicinity2", _vicinity_len(config)),
    ]
    out, offset = [], 0
    for name, n in lengths:
        out.append(Segment(name, offset, n))
        offset += n
    return tuple(out)


def _check_dims(table: EmbeddingTable, config: FeatureConfig):
    if table.dim != config.embed_dim:
        raise ValueError(f"embedding dim {table.dim} does not match feature config dim {config.embed_dim}")


def _path_rows(pair: CandidatePair, doc: Document, trees, max_len: int) -> list[int]:
    """Document token indices of the interior head-to-head path nodes."""
    if not pair.same_sentence:
        return []
    si = pair.chunk1.sentence_index
    tree, start = trees[si], doc.sentences[si].start
    h1 = head_token(pair.chunk1, tree, start)
    h2 = head_token(pair.chunk2, tree, start)
    return [start + k for k in dependency_path(tree, h1, h2).interior[:max_len]]


def _distance_value(pair, doc, trees, config) -> float:
    dist = pair_distance(pair, doc, trees, SENTINEL_CROSS)
    return min(dist / config.distance_norm, config.distance_clamp)


def build_features(
    pair: CandidatePair,
    doc: Document,
    table: EmbeddingTable,
    config: FeatureConfig,
    trees=None,
) -> FeatureVector:
    """Reference feature construction for a single pair, straight from the table."""
    _check_dims(table, config)
    trees = document_trees(doc) if trees is None else trees
    d = config.embed_dim
    span1 = emb.span_embedding(table, doc, pair.chunk1)
    span2 = emb.span_embedding(table, doc, pair.chunk2)

    path = np.zeros(config.max_path_len * d)
    for k, i in enumerate(_path_rows(pair, doc, trees, config.max_path_len)):
        path[k * d:(k + 1) * d] = emb.lookup(table, doc.tokens[i].text)

    vic = []
    w = config.vicinity_window
    for chunk in (pair.chunk1, pair.chunk2):
        vecs = emb.vicinity_embeddings(table, doc, chunk, w)
        if config.vicinity_mode == "flatten":
            vic.append(np.concatenate(vecs))
        else:
            n_left = min(w, chunk.start)
            n_right = min(w, len(doc.tokens) - chunk.end)
            left = np.mean(vecs[w - n_left:w], axis=0) if n_left else np.zeros(d)
            right = np.mean(vecs[w:w + n_right], axis=0) if n_right else np.zeros(d)
            vic.append(np.concatenate([left, right]))

    values = np.concatenate([
        [emb.cosine_similarity(span1, span2), _distance_value(pair, doc, trees, config)],
        path, span1, span2, vic[0], vic[1],
    ])
    return FeatureVector(values, describe_layout(config))


class DocumentFeaturizer:
    """Builds features for many pairs of one document.

    Token embeddings, trees and span vectors are computed once per document
    and shared by all pairs. Output equals :func:`build_features`.
    """

    def __init__(self, doc: Document, table: EmbeddingTable, config: FeatureConfig, trees=None):
        _check_dims(table, config)
        self.doc = doc
        self.config = config
        self.trees = document_trees(doc) if trees is None else trees
        self.tokens = emb.token_matrix(table, doc)
        self._spans: dict[tuple[int, int], np.ndarray] = {}
        self._vicinity: dict[tuple[int, int], np.ndarray] = {}

    def span(self, chunk) -> np.ndarray:
        key = (chunk.start, chunk.end)
        if key not in self._spans:
            self._spans[key] = np.mean(self.tokens[chunk.start:chunk.end], axis=0)
        return self._spans[key]

    def vicinity(self, chunk) -> np.ndarray:
        key = (chunk.start, chunk.end)
        if key in self._vicinity:
            return self._vicinity[key]
        w, d, n = self.config.vicinity_window, self.config.embed_dim, len(self.tokens)
        lo, hi = max(0, chunk.start - w), min(n, chunk.end + w)
        left = self.tokens[lo:chunk.start]
        right = self.tokens[chunk.end:hi]
        if self.config.vicinity_mode == "flatten":
            out = np.zeros((2 * w, d))
            out[w - len(left):w] = left
            out[w:w + len(right)] = right
            out = out.ravel()
        else:
            out = np.concatenate([
                np.mean(left, axis=0) if len(left) else np.zeros(d),
                np.mean(right, axis=0) if len(right) else np.zeros(d),
            ])
        self._vicinity[key] = out
        return out

    def vector(self, pair: CandidatePair) -> np.ndarray:
        cfg, d = self.config, self.config.embed_dim
        s1, s2 = self.span(pair.chunk1), self.span(pair.chunk2)
        path = np.zeros(cfg.max_path_len * d)
        rows = _path_rows(pair, self.doc, self.trees, cfg.max_path_len)
        if rows:
            path[:len(rows) * d] = self.tokens[rows].ravel()
        return np.concatenate([
            [emb.cosine_similarity(s1, s2), _distance_value(pair, self.doc, self.trees, cfg)],
            path, s1, s2, self.vicinity(pair.chunk1), self.vicinity(pair.chunk2),
        ])

    def matrix(self, pairs: Sequence[CandidatePair]) -> np.ndarray:
        if not pairs:
            return np.zeros((0, feature_length(self.config)))
        return np.vstack([self.vector(p) for p in pairs])
