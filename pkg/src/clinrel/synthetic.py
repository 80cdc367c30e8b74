"""Synthetic clinical-style corpora with planted relations.

Real relation corpora are access-controlled, so tests and demos use these
generators. In :func:`planted_corpus` every sentence has one Drug chunk and
one or two Reaction chunks. A related Reaction is preceded by a marker token
and sits at most two dependency edges from the Drug; an unrelated one has no
marker within ``window`` tokens and a random distance of 1-4 edges.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Document, EntityChunk, TrainingRow, build_document
from .embeddings import EmbeddingTable
from .pipeline import RelationSchema, generate_pairs
from .syntax import DependencyTree

MARKER = "xlink"


@dataclass
class SyntheticCorpus:
    docs: list[Document]
    gold: dict[tuple, str]
    table: EmbeddingTable
    schema: RelationSchema


def synthetic_table(words, dim: int, rng: np.random.Generator) -> EmbeddingTable:
    return EmbeddingTable({w: rng.normal(0.0, 1.0, dim) / np.sqrt(dim) for w in words}, dim)


def random_tree(n: int, rng: np.random.Generator) -> DependencyTree:
    """Random recursive tree: token order shuffled, each token attaches to an earlier one."""
    order = rng.permutation(n)
    heads = [-1] * n
    for k in range(1, n):
        heads[order[k]] = int(order[rng.integers(0, k)])
    return DependencyTree(heads)


class _SentenceBuilder:
    def __init__(self, rng):
        self.rng = rng
        self.words: list[str] = []
        self.spans: list[tuple[str, int, int]] = []  # (type, start, end), sentence-local

    def filler(self, k: int):
        for _ in range(k):
            self.words.append(f"w{self.rng.integers(0, 200)}")

    def entity(self, etype: str, prefix: str) -> int:
        start = len(self.words)
        for _ in range(int(self.rng.integers(1, 3))):
            self.words.append(f"{prefix}{self.rng.integers(0, 30)}")
        self.spans.append((etype, start, len(self.words)))
        return len(self.spans) - 1


def _planted_sentence(rng, window: int):
    """Words, chunk spans, heads and the relation flags of one sentence."""
    b = _SentenceBuilder(rng)
    n_reactions = int(rng.integers(1, 3))
    flags = list(rng.random(n_reactions) < 0.5)
    if n_reactions == 2 and flags[0] == flags[1] and rng.random() < 0.5:
        flags[1] = not flags[0]

    b.filler(int(rng.integers(0, 4)))
    drug = b.entity("Drug", "d")
    marker_pos = {}
    reactions = []
    last_marker = None
    for k, pos in enumerate(flags):
        gap = int(rng.integers(1, 4)) if k == 0 else int(rng.integers(window + 1, window + 4))
        if not pos and last_marker is not None:
            gap = max(gap, window + 1)
        b.filler(gap)
        if pos:
            marker_pos[k] = len(b.words)
            last_marker = len(b.words)
            b.words.append(MARKER)
        reactions.append(b.entity("Reaction", "r"))
    b.filler(int(rng.integers(0, 4)))

    n = len(b.words)
    heads: list[int | None] = [None] * n
    in_chunk = set()
    chunk_head = {}
    for idx, (_, s, e) in enumerate(b.spans):
        chunk_head[idx] = e - 1
        for i in range(s, e - 1):
            heads[i] = e - 1
        in_chunk.update(range(s, e))
    root = chunk_head[drug]
    heads[root] = -1
    free = [i for i in range(n) if i not in in_chunk and i not in marker_pos.values()]
    rng.shuffle(free)
    for k, (ridx, pos) in enumerate(zip(reactions, flags)):
        h = chunk_head[ridx]
        if pos:
            m = marker_pos[k]
            if rng.random() < 0.5:
                heads[m], heads[h] = root, m
            else:
                heads[h], heads[m] = root, h
        else:
            dist = int(rng.integers(1, 5))
            chain = [free.pop() for _ in range(min(dist - 1, len(free)))]
            prev = root
            for f in chain:
                heads[f] = prev
                prev = f
            heads[h] = prev
    attached = [i for i in range(n) if heads[i] is not None]
    for f in free:
        heads[f] = int(attached[rng.integers(0, len(attached))])
        attached.append(f)
    return b.words, b.spans, heads, [(drug, r, pos) for r, pos in zip(reactions, flags)]


def planted_corpus(
    n_docs: int,
    seed: int = 0,
    dim: int = 16,
    window: int = 5,
    max_sentences: int = 3,
) -> SyntheticCorpus:
    rng = np.random.default_rng(seed)
    vocab = [f"w{i}" for i in range(200)] + [f"d{i}" for i in range(30)] + [f"r{i}" for i in range(30)] + [MARKER]
    table = synthetic_table(vocab, dim, rng)
    schema = RelationSchema((("Drug", "Reaction"),))
    docs, gold = [], {}
    for d in range(n_docs):
        doc_id = f"note{d:05d}"
        sentences, trees, spans, rels = [], [], [], []
        offset = 0
        for si in range(int(rng.integers(1, max_sentences + 1))):
            words, sp, heads, flags = _planted_sentence(rng, window)
            sentences.append(words)
            trees.append(DependencyTree(heads))
            base = len(spans)
            spans += [(t, offset + s, offset + e, si) for t, s, e in sp]
            rels += [(base + a, base + b, pos) for a, b, pos in flags]
            offset += len(words)
        doc = build_document(doc_id, sentences)
        chunks = [
            EntityChunk(t, s, e, " ".join(x.text for x in doc.tokens[s:e]), si,
                        doc.tokens[s].char_begin, doc.tokens[e - 1].char_end)
            for t, s, e, si in spans
        ]
        doc = doc.with_chunks(chunks).with_trees(trees)
        for a, b, pos in rels:
            if pos:
                gold[(doc_id, chunks[a].start, chunks[a].end, chunks[b].start, chunks[b].end)] = "1"
        docs.append(doc)
    return SyntheticCorpus(docs, gold, table, schema)


def dense_corpus(
    n_docs: int,
    entities_per_sentence: int = 12,
    seed: int = 0,
    dim: int = 8,
    sentences_per_doc: int = 2,
) -> SyntheticCorpus:
    """Sentences crowded with alternating Problem / BodyPart chunks over random trees."""
    rng = np.random.default_rng(seed)
    vocab = [f"w{i}" for i in range(100)] + [f"p{i}" for i in range(20)] + [f"b{i}" for i in range(20)]
    table = synthetic_table(vocab, dim, rng)
    schema = RelationSchema((("BodyPart", "Problem"),))
    docs = []
    for d in range(n_docs):
        sentences, trees, spans = [], [], []
        offset = 0
        for si in range(sentences_per_doc):
            words, sp = [], []
            for k in range(entities_per_sentence):
                words += [f"w{rng.integers(0, 100)}" for _ in range(int(rng.integers(0, 3)))]
                etype, prefix = ("BodyPart", "b") if k % 2 else ("Problem", "p")
                sp.append((etype, len(words), len(words) + 1))
                words.append(f"{prefix}{rng.integers(0, 20)}")
            sentences.append(words)
            trees.append(random_tree(len(words), rng))
            spans += [(t, offset + s, offset + e, si) for t, s, e in sp]
            offset += len(words)
        doc = build_document(f"dense{d:04d}", sentences)
        chunks = [EntityChunk(t, s, e, doc.tokens[s].text, si, doc.tokens[s].char_begin, doc.tokens[s].char_end)
                  for t, s, e, si in spans]
        docs.append(doc.with_chunks(chunks).with_trees(trees))
    return SyntheticCorpus(docs, {}, table, schema)


def training_rows(corpus: SyntheticCorpus) -> list[TrainingRow]:
    """Every same-sentence schema pair as a training-CSV row, labeled from the gold map."""
    neg = corpus.schema.negative_label
    rows = []
    for doc in corpus.docs:
        for pair in generate_pairs(doc, corpus.schema):
            sent = doc.sentences[pair.chunk1.sentence_index]
            base = doc.tokens[sent.start].char_begin
            text = doc.text[base:doc.tokens[sent.end - 1].char_end]
            c1, c2 = pair.chunk1, pair.chunk2
            key = (doc.id, c1.start, c1.end, c2.start, c2.end)
            rows.append(TrainingRow(
                doc.id, text,
                c1.char_begin - base, c1.char_end - base, c1.entity_type, c1.text,
                c2.char_begin - base, c2.char_end - base, c2.entity_type, c2.text,
                corpus.gold.get(key, neg),
            ))
    return rows


def split_docs(docs, test_fraction: float, seed: int = 0):
    """Deterministic document-level train/test split."""
    rng = np.random.default_rng(seed)
    idx = rng.permutation(len(docs))
    n_test = int(round(len(docs) * test_fraction))
    test = set(idx[:n_test].tolist())
    return [d for i, d in enumerate(docs) if i not in test], [d for i, d in enumerate(docs) if i in test]
