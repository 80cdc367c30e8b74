"""Static word embeddings: text loader, span pooling, vicinity windows, cosine."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .corpus import Document, EntityChunk, FormatError, tokenize


class EmbeddingTable:
    """Read-only token -> vector map. Keys are lowercased; unknown tokens map to zeros."""

    def __init__(self, entries: Mapping[str, Iterable[float]] | None = None, dim: int | None = None):
        entries = dict(entries or {})
        if dim is None:
            if not entries:
                raise ValueError("dim is required for an empty table")
            dim = len(next(iter(entries.values())))
        if dim <= 0:
            raise ValueError("dim must be positive")
        self.dim = int(dim)
        self.index: dict[str, int] = {}
        rows = []
        for word, vec in entries.items():
            key = word.lower()
            if key in self.index:
                continue
            vec = np.asarray(vec, dtype=np.float64)
            if vec.shape != (self.dim,):
                raise ValueError(f"vector for {word!r} has shape {vec.shape}, expected ({self.dim},)")
            if not np.all(np.isfinite(vec)):
                raise ValueError(f"non-finite component in vector for {word!r}")
            self.index[key] = len(rows)
            rows.append(vec)
        # last row is the OOV zero vector
        self.matrix = np.vstack(rows + [np.zeros(self.dim)])
        self.matrix.setflags(write=False)
        self._oov = len(rows)

    def __len__(self) -> int:
        return len(self.index)

    def __contains__(self, token: str) -> bool:
        return token.lower() in self.index

    def __repr__(self) -> str:
        return f"EmbeddingTable(size={len(self)}, dim={self.dim})"

    def row(self, token: str) -> int:
        return self.index.get(token.lower(), self._oov)

    def rows(self, tokens: Iterable[str]) -> np.ndarray:
        return np.fromiter((self.row(t) for t in tokens), dtype=np.intp)


def load_text_embeddings(path: str | Path) -> EmbeddingTable:
    """Load ``word v1 ... vd`` lines, with an optional ``count dim`` header."""
    entries: dict[str, list[float]] = {}
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip("\n").split()
            if not parts:
                continue
            if lineno == 1 and len(parts) == 2 and all(p.isdigit() for p in parts):
                dim = int(parts[1])
                continue
            word, vals = parts[0], parts[1:]
            if dim is None:
                dim = len(vals)
            if len(vals) != dim or dim == 0:
                raise FormatError(f"dimension mismatch line {lineno}")
            try:
                vec = [float(v) for v in vals]
            except ValueError:
                raise FormatError(f"non-numeric component line {lineno}") from None
            if not all(math.isfinite(v) for v in vec):
                raise FormatError(f"non-finite component line {lineno}")
            entries.setdefault(word.lower(), vec)
    if dim is None:
        raise FormatError(f"{path}: no embeddings found")
    return EmbeddingTable(entries, dim)


def save_text_embeddings(table: EmbeddingTable, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(table)} {table.dim}\n")
        for word, i in table.index.items():
            fh.write(word + " " + " ".join(repr(float(x)) for x in table.matrix[i]) + "\n")


def lookup(table: EmbeddingTable, token: str) -> np.ndarray:
    return table.matrix[table.row(token)].copy()


def token_matrix(table: EmbeddingTable, doc: Document) -> np.ndarray:
    """Embeddings of every document token, one row per token."""
    return table.matrix[table.rows(t.text for t in doc.tokens)]


def span_embedding(table: EmbeddingTable, doc: Document, chunk: EntityChunk) -> np.ndarray:
    """Mean of the chunk's token vectors."""
    vecs = [lookup(table, doc.tokens[i].text) for i in chunk.token_range]
    return np.mean(vecs, axis=0)


def vicinity_embeddings(
    table: EmbeddingTable, doc: Document, chunk: EntityChunk, window: int = 50
) -> list[np.ndarray]:
    """``window`` vectors left of the chunk (nearest last), then ``window`` right of it
    (nearest first). Positions beyond the document edges are zero vectors."""
    if window < 0:
        raise ValueError("window must be >= 0")
    zero = np.zeros(table.dim)
    n = len(doc.tokens)
    left = [lookup(table, doc.tokens[i].text) if i >= 0 else zero.copy()
            for i in range(chunk.start - window, chunk.start)]
    right = [lookup(table, doc.tokens[i].text) if i < n else zero.copy()
             for i in range(chunk.end, chunk.end + window)]
    return left + right


def cosine_similarity(u, v) -> float:
    """Cosine of the angle between u and v; 0.0 if either is the zero vector."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        return 0.0
    c = float(np.dot(u / nu, v / nv))
    return min(1.0, max(-1.0, c))


def embed_text(table: EmbeddingTable, text: str) -> np.ndarray:
    """Mean token vector of free text, tokenized like documents."""
    tokens, _ = tokenize(text)
    if not tokens:
        return np.zeros(table.dim)
    return table.matrix[table.rows(t.text for t in tokens)].mean(axis=0)
