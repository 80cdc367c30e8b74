"""Document data model, BIO chunking, and CoNLL / training-CSV readers.

Documents are immutable once built. Token offsets are half-open character
ranges into ``Document.text``; chunk and sentence ranges are half-open token
ranges into ``Document.tokens``.
"""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

__all__ = [
    "FormatError",
    "Token",
    "Sentence",
    "EntityChunk",
    "Document",
    "CandidatePair",
    "TrainingRow",
    "CSV_HEADER",
    "tokenize",
    "build_document",
    "chunks_from_bio",
    "chunks_to_bio",
    "read_conll",
    "parse_conll",
    "write_conll",
    "read_training_csv",
    "write_training_csv",
    "row_to_document",
]


class FormatError(ValueError):
    """Malformed input file; the message names the offending line or row."""


@dataclass(frozen=True)
class Token:
    text: str
    doc_index: int
    sentence_index: int
    char_begin: int
    char_end: int


@dataclass(frozen=True)
class Sentence:
    index: int
    start: int
    end: int

    @property
    def token_range(self) -> range:
        return range(self.start, self.end)

    def __len__(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class EntityChunk:
    """A typed token span. ``start``/``end`` index document tokens."""

    entity_type: str
    start: int
    end: int
    text: str
    sentence_index: int
    char_begin: int = -1
    char_end: int = -1

    def __post_init__(self):
        if self.end <= self.start:
            raise ValueError(f"empty chunk range [{self.start}, {self.end})")

    @property
    def token_range(self) -> range:
        return range(self.start, self.end)

    @property
    def key(self) -> tuple[int, int, str]:
        return (self.start, self.end, self.entity_type)


@dataclass(frozen=True)
class Document:
    id: str
    text: str
    tokens: tuple[Token, ...]
    sentences: tuple[Sentence, ...]
    chunks: tuple[EntityChunk, ...] = ()
    trees: tuple | None = None  # one syntax.DependencyTree per sentence

    def __post_init__(self):
        n = len(self.tokens)
        for c in self.chunks:
            if not (0 <= c.start < c.end <= n):
                raise ValueError(f"chunk {c.text!r} out of token bounds in doc {self.id}")
            s = self.sentences[c.sentence_index]
            if not (s.start <= c.start and c.end <= s.end):
                raise ValueError(f"chunk {c.text!r} crosses sentence {c.sentence_index}")
        if self.trees is not None:
            if len(self.trees) != len(self.sentences):
                raise ValueError("need exactly one tree per sentence")
            for s, t in zip(self.sentences, self.trees):
                if len(t) != len(s):
                    raise ValueError(f"tree size {len(t)} != sentence {s.index} length {len(s)}")

    def sentence_tokens(self, index: int) -> tuple[Token, ...]:
        s = self.sentences[index]
        return self.tokens[s.start:s.end]

    def with_chunks(self, chunks: Iterable[EntityChunk]) -> "Document":
        return replace(self, chunks=tuple(chunks))

    def with_trees(self, trees) -> "Document":
        return replace(self, trees=None if trees is None else tuple(trees))


@dataclass(frozen=True)
class CandidatePair:
    """Ordered entity pair: ``chunk1`` plays the entity-1 role of the schema."""

    chunk1: EntityChunk
    chunk2: EntityChunk
    doc_id: str
    same_sentence: bool

    @classmethod
    def of(cls, doc_id: str, c1: EntityChunk, c2: EntityChunk) -> "CandidatePair":
        return cls(c1, c2, doc_id, c1.sentence_index == c2.sentence_index)

    def swapped(self) -> "CandidatePair":
        return CandidatePair(self.chunk2, self.chunk1, self.doc_id, self.same_sentence)


# --------------------------------------------------------------------------
# tokenization

_TOKEN_RE = re.compile(r"[.,;:!?()\[\]]|[^\s.,;:!?()\[\]]+")
_SENT_END = ".!?"


def tokenize(text: str) -> tuple[list[Token], list[Sentence]]:
    """Whitespace tokenizer that splits off ``.,;:!?()[]``.

    A sentence ends after a ``.``, ``!`` or ``?`` token that is followed by
    whitespace (or the end of the text).

    >>> toks, sents = tokenize("A. B")
    >>> [t.text for t in toks], [(s.start, s.end) for s in sents]
    (['A', '.', 'B'], [(0, 2), (2, 3)])
    """
    spans = [(m.group(), m.start(), m.end()) for m in _TOKEN_RE.finditer(text)]
    tokens: list[Token] = []
    sentences: list[Sentence] = []
    start = 0
    for i, (tok, b, e) in enumerate(spans):
        tokens.append(Token(tok, i, len(sentences), b, e))
        if tok in _SENT_END and (e == len(text) or text[e].isspace()):
            sentences.append(Sentence(len(sentences), start, i + 1))
            start = i + 1
    if start < len(tokens):
        sentences.append(Sentence(len(sentences), start, len(tokens)))
    return tokens, sentences


def build_document(doc_id: str, sentences: Sequence[Sequence[str]]) -> Document:
    """Build a document from pre-split sentences, joining tokens with single spaces."""
    parts: list[str] = []
    tokens: list[Token] = []
    sents: list[Sentence] = []
    pos = 0
    for si, words in enumerate(sentences):
        start = len(tokens)
        for w in words:
            if not w or any(ch.isspace() for ch in w):
                raise ValueError(f"invalid token {w!r}")
            if parts:
                parts.append(" ")
                pos += 1
            tokens.append(Token(w, len(tokens), si, pos, pos + len(w)))
            parts.append(w)
            pos += len(w)
        sents.append(Sentence(si, start, len(tokens)))
    return Document(doc_id, "".join(parts), tuple(tokens), tuple(sents))


# --------------------------------------------------------------------------
# BIO

def _split_tag(tag: str) -> tuple[str, str | None]:
    if tag == "O":
        return "O", None
    if len(tag) > 2 and tag[1] == "-" and tag[0] in "BI":
        return tag[0], tag[2:]
    raise ValueError(f"invalid BIO tag {tag!r}")


def _make_chunk(tokens: Sequence[Token], etype: str, start: int, end: int) -> EntityChunk:
    span = tokens[start:end]
    return EntityChunk(
        entity_type=etype,
        start=start,
        end=end,
        text=" ".join(t.text for t in span),
        sentence_index=span[0].sentence_index,
        char_begin=span[0].char_begin,
        char_end=span[-1].char_end,
    )


def chunks_from_bio(tokens: Sequence[Token], tags: Sequence[str]) -> list[EntityChunk]:
    """Group BIO-tagged tokens into chunks.

    A chunk is a maximal ``B-X I-X ...`` run. An ``I-X`` that does not
    continue a chunk of type X starts a new one (lenient promotion). Chunks
    never cross a sentence boundary.
    """
    if len(tokens) != len(tags):
        raise ValueError("tag/token length mismatch")
    chunks = []
    cur_type = None
    cur_start = 0
    for i, tag in enumerate(tags):
        prefix, etype = _split_tag(tag)
        continues = (
            prefix == "I"
            and etype == cur_type
            and tokens[i].sentence_index == tokens[i - 1].sentence_index
        )
        if continues:
            continue
        if cur_type is not None:
            chunks.append(_make_chunk(tokens, cur_type, cur_start, i))
        cur_type, cur_start = etype, i
    if cur_type is not None:
        chunks.append(_make_chunk(tokens, cur_type, cur_start, len(tags)))
    return chunks


def chunks_to_bio(n_tokens: int, chunks: Iterable[EntityChunk]) -> list[str]:
    tags = ["O"] * n_tokens
    for c in chunks:
        for i in c.token_range:
            if tags[i] != "O":
                raise ValueError(f"overlapping chunks at token {i}")
            tags[i] = ("B-" if i == c.start else "I-") + c.entity_type
    return tags


# --------------------------------------------------------------------------
# CoNLL

def parse_conll(lines: Iterable[str], source: str = "<conll>") -> list[Document]:
    """Parse CoNLL-style lines: ``token tag [deprel [head]]``.

    ``-DOCSTART-`` separates documents, blank lines separate sentences. The
    optional head column is 1-based with 0 for the root. Sentences without
    heads get no tree; if any sentence of a document carries heads, the
    others fall back to a chain tree.
    """
    from .syntax import DependencyTree, chain_fallback_tree

    docs: list[Document] = []
    sents: list[list[tuple[str, str, str | None, int | None]]] = []
    cur: list[tuple[str, str, str | None, int | None]] = []
    doc_no = 0

    def close_sentence():
        nonlocal cur
        if cur:
            sents.append(cur)
            cur = []

    def close_doc():
        nonlocal sents, doc_no
        close_sentence()
        if not sents:
            return
        doc = build_document(f"doc{doc_no}", [[w for w, *_ in s] for s in sents])
        tags = [t for s in sents for _, t, _, _ in s]
        try:
            chunks = chunks_from_bio(doc.tokens, tags)
        except ValueError as exc:
            raise FormatError(f"{source}: document {doc_no}: {exc}") from None
        trees = None
        if any(row[3] is not None for s in sents for row in s):
            trees = []
            for s in sents:
                if s[0][3] is None:
                    trees.append(chain_fallback_tree(len(s)))
                else:
                    trees.append(DependencyTree(
                        [h - 1 for *_, h in s],
                        [lab or "_" for _, _, lab, _ in s],
                    ))
        docs.append(doc.with_chunks(chunks).with_trees(trees))
        doc_no += 1
        sents = []

    for lineno, raw in enumerate(lines, 1):
        line = raw.strip()
        if not line:
            close_sentence()
            continue
        cols = line.split()
        if cols[0] == "-DOCSTART-":
            close_doc()
            continue
        if len(cols) < 2:
            raise FormatError(f"{source}: line {lineno}: missing tag column")
        head = None
        label = cols[2] if len(cols) >= 3 else None
        if len(cols) >= 4:
            try:
                head = int(cols[3])
            except ValueError:
                raise FormatError(f"{source}: line {lineno}: head {cols[3]!r} is not an integer") from None
        if cur and (cur[0][3] is None) != (head is None):
            raise FormatError(f"{source}: line {lineno}: head column present on some tokens only")
        try:
            _split_tag(cols[1])
        except ValueError as exc:
            raise FormatError(f"{source}: line {lineno}: {exc}") from None
        cur.append((cols[0], cols[1], label, head))
    close_doc()
    return docs


def read_conll(path: str | Path) -> list[Document]:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        return parse_conll(fh, str(path))


def write_conll(docs: Iterable[Document], path: str | Path) -> None:
    """Write documents in the format read by :func:`read_conll`."""
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            fh.write("-DOCSTART- O\n\n")
            tags = chunks_to_bio(len(doc.tokens), doc.chunks)
            for si, s in enumerate(doc.sentences):
                tree = doc.trees[si] if doc.trees is not None else None
                for k, i in enumerate(s.token_range):
                    row = [doc.tokens[i].text, tags[i]]
                    if tree is not None:
                        row += [tree.labels[k] if tree.labels else "_", str(tree.heads[k] + 1)]
                    fh.write(" ".join(row) + "\n")
                fh.write("\n")


# --------------------------------------------------------------------------
# training CSV

CSV_HEADER = (
    "doc_id", "sentence", "e1_begin", "e1_end", "e1_type", "chunk1",
    "e2_begin", "e2_end", "e2_type", "chunk2", "label",
)


@dataclass(frozen=True)
class TrainingRow:
    """One labeled entity pair with its context sentence (character offsets)."""

    doc_id: str
    sentence: str
    e1_begin: int
    e1_end: int
    e1_type: str
    chunk1: str
    e2_begin: int
    e2_end: int
    e2_type: str
    chunk2: str
    label: str

    def as_row(self) -> list[str]:
        return [str(getattr(self, f)) for f in CSV_HEADER]


def read_training_csv(path: str | Path) -> list[TrainingRow]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
            raise FormatError(f"{path}: expected header {','.join(CSV_HEADER)}")
        rows = []
        for rowno, rec in enumerate(reader, 1):
            if not rec:
                continue
            if len(rec) != len(CSV_HEADER):
                raise FormatError(f"wrong column count row {rowno}")
            vals = dict(zip(CSV_HEADER, rec))
            try:
                for k in ("e1_begin", "e1_end", "e2_begin", "e2_end"):
                    vals[k] = int(vals[k])
            except ValueError:
                raise FormatError(f"non-integer offset row {rowno}") from None
            row = TrainingRow(**vals)
            sent = row.sentence
            for b, e, text in ((row.e1_begin, row.e1_end, row.chunk1),
                               (row.e2_begin, row.e2_end, row.chunk2)):
                if not (0 <= b < e <= len(sent)) or sent[b:e] != text:
                    raise FormatError(f"chunk text mismatch row {rowno}")
            rows.append(row)
    return rows


def write_training_csv(rows: Iterable[TrainingRow], path: str | Path) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in rows:
        writer.writerow(r.as_row())
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def row_to_document(row: TrainingRow) -> tuple[Document, CandidatePair]:
    """Tokenize a training row's sentence and locate both entity chunks.

    Each chunk covers every token overlapping its character span.
    """
    tokens, sentences = tokenize(row.sentence)
    chunks = []
    for b, e, etype in ((row.e1_begin, row.e1_end, row.e1_type),
                        (row.e2_begin, row.e2_end, row.e2_type)):
        idx = [t.doc_index for t in tokens if t.char_begin < e and t.char_end > b]
        if not idx:
            raise FormatError(f"entity span [{b}, {e}) covers no token in {row.doc_id}")
        chunks.append(_make_chunk(tokens, etype, idx[0], idx[-1] + 1))
    c1, c2 = chunks
    unique = {c.key: c for c in chunks}
    doc = Document(row.doc_id, row.sentence, tuple(tokens), tuple(sentences),
                   tuple(sorted(unique.values(), key=lambda c: (c.start, c.end))))
    return doc, CandidatePair.of(row.doc_id, c1, c2)
