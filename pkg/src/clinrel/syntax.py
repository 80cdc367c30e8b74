"""Dependency trees, head-token distances and candidate-pair pruning.

Tree indices are local to a sentence; chunks carry document token indices,
so functions that mix the two take the sentence's first token index.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .corpus import CandidatePair, Document, EntityChunk

SENTINEL_CROSS = 1000


@dataclass(frozen=True)
class DependencyTree:
    heads: tuple[int, ...]
    labels: tuple[str, ...] | None = None

    def __init__(self, heads: Sequence[int], labels: Sequence[str] | None = None):
        object.__setattr__(self, "heads", tuple(int(h) for h in heads))
        object.__setattr__(self, "labels", None if labels is None else tuple(labels))
        self._validate()
        depth = [-1] * len(self.heads)
        depth[self.root] = 0
        for i in range(len(self.heads)):
            chain = []
            j = i
            while depth[j] < 0:
                chain.append(j)
                j = self.heads[j]
            d = depth[j]
            for k in reversed(chain):
                d += 1
                depth[k] = d
        object.__setattr__(self, "_depth", tuple(depth))

    def _validate(self):
        n = len(self.heads)
        if n == 0:
            raise ValueError("empty dependency tree")
        if self.labels is not None and len(self.labels) != n:
            raise ValueError("label count differs from head count")
        roots = [i for i, h in enumerate(self.heads) if h == -1]
        if len(roots) != 1:
            raise ValueError(f"tree needs exactly one root, found {len(roots)}")
        for i, h in enumerate(self.heads):
            if h == i or (h != -1 and not 0 <= h < n):
                raise ValueError(f"head {h} of token {i} out of range")
        state = [0] * n  # 0 unseen, 1 on stack, 2 reaches root
        for i in range(n):
            path = []
            j = i
            while j != -1 and state[j] == 0:
                state[j] = 1
                path.append(j)
                j = self.heads[j]
            if j != -1 and state[j] == 1:
                raise ValueError(f"cycle through token {j}")
            for k in path:
                state[k] = 2

    def __len__(self) -> int:
        return len(self.heads)

    @property
    def root(self) -> int:
        return self.heads.index(-1)

    def depth(self, i: int) -> int:
        return self._depth[i]

    def _check(self, i: int):
        if not 0 <= i < len(self.heads):
            raise IndexError(f"token index {i} outside tree of size {len(self.heads)}")


@dataclass(frozen=True)
class DepPath:
    nodes: tuple[int, ...]

    @property
    def length(self) -> int:
        return len(self.nodes) - 1

    @property
    def interior(self) -> tuple[int, ...]:
        return self.nodes[1:-1]


def chain_fallback_tree(sentence_len: int) -> DependencyTree:
    """Right-branching chain used when no parse is available."""
    if sentence_len < 1:
        raise ValueError("sentence_len must be >= 1")
    return DependencyTree([-1] + list(range(sentence_len - 1)))


def document_trees(doc: Document) -> tuple[DependencyTree, ...]:
    """The document's trees, or chain fallbacks when it carries none."""
    if doc.trees is not None:
        return doc.trees
    return tuple(chain_fallback_tree(len(s)) for s in doc.sentences)


def head_token(chunk: EntityChunk, tree: DependencyTree, sentence_start: int = 0) -> int:
    """Sentence-local index of the chunk's syntactic head.

    That is the last chunk token whose head lies outside the chunk; the tree
    root if there is none.
    """
    lo, hi = chunk.start - sentence_start, chunk.end - sentence_start
    found = None
    for i in range(lo, hi):
        tree._check(i)
        if not lo <= tree.heads[i] < hi:
            found = i
    return tree.root if found is None else found


def _path(tree: DependencyTree, i: int, j: int) -> tuple[list[int], list[int]]:
    """Climb from i and j to their lowest common ancestor."""
    up_i, up_j = [i], [j]
    a, b = i, j
    while tree.depth(a) > tree.depth(b):
        a = tree.heads[a]
        up_i.append(a)
    while tree.depth(b) > tree.depth(a):
        b = tree.heads[b]
        up_j.append(b)
    while a != b:
        a, b = tree.heads[a], tree.heads[b]
        up_i.append(a)
        up_j.append(b)
    return up_i, up_j


def dependency_path(tree: DependencyTree, i: int, j: int) -> DepPath:
    tree._check(i)
    tree._check(j)
    up_i, up_j = _path(tree, i, j)
    return DepPath(tuple(up_i + up_j[-2::-1]))


def token_distance(tree: DependencyTree, i: int, j: int) -> int:
    tree._check(i)
    tree._check(j)
    up_i, up_j = _path(tree, i, j)
    return len(up_i) + len(up_j) - 2


def syntactic_distance(
    tree: DependencyTree | None,
    a: EntityChunk,
    b: EntityChunk,
    sentence_start: int = 0,
    sentinel: int = SENTINEL_CROSS,
) -> int:
    """Edge count between the head tokens of two chunks.

    Chunks from different sentences get ``sentinel``; ``tree`` is then unused.
    """
    if a.sentence_index != b.sentence_index:
        return sentinel
    if tree is None:
        raise ValueError("same-sentence distance needs a tree")
    return token_distance(tree, head_token(a, tree, sentence_start), head_token(b, tree, sentence_start))


def pair_distance(pair: CandidatePair, doc: Document, trees=None, sentinel: int = SENTINEL_CROSS) -> int:
    if not pair.same_sentence:
        return sentinel
    trees = document_trees(doc) if trees is None else trees
    si = pair.chunk1.sentence_index
    return syntactic_distance(trees[si], pair.chunk1, pair.chunk2, doc.sentences[si].start, sentinel)


def prune_pairs(
    pairs: Sequence[CandidatePair],
    doc: Document,
    max_dist: int,
    trees=None,
    sentinel: int = SENTINEL_CROSS,
) -> list[CandidatePair]:
    """Keep the pairs whose syntactic distance is at most ``max_dist``, in order."""
    if max_dist < 0:
        raise ValueError("max_dist must be >= 0")
    trees = document_trees(doc) if trees is None else trees
    return [p for p in pairs if pair_distance(p, doc, trees, sentinel) <= max_dist]
