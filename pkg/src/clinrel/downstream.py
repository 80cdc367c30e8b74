"""Uses of relation predictions: knowledge graphs, patient timelines, and
chunk enrichment for code resolution."""

from __future__ import annotations

import datetime as dt
import re
from collections import defaultdict
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .corpus import EntityChunk, FormatError
from .embeddings import EmbeddingTable, cosine_similarity, embed_text
from .pipeline import RelationPrediction

POSITIVE = ("1",)


def _chunk_id(doc_id: str, c: EntityChunk) -> str:
    return f"{doc_id}:{c.start}-{c.end}"


# --------------------------------------------------------------------------
# knowledge graph

@dataclass(frozen=True)
class GraphNode:
    id: str
    text: str
    entity_type: str
    doc_id: str
    start: int
    end: int
    char_begin: int = -1
    char_end: int = -1
    code: str | None = None
    components: tuple[str, ...] = ()

    @property
    def sort_key(self):
        return (self.doc_id, self.start, self.end, self.id)


@dataclass(frozen=True)
class GraphEdge:
    source: str
    target: str
    label: str
    confidence: float


@dataclass
class KnowledgeGraph:
    nodes: dict[str, GraphNode] = field(default_factory=dict)
    edges: list[GraphEdge] = field(default_factory=list)

    def neighbors(self, node_id: str) -> list[str]:
        out = []
        for e in self.edges:
            if e.source == node_id:
                out.append(e.target)
            elif e.target == node_id:
                out.append(e.source)
        return out


def _node(doc_id: str, c: EntityChunk) -> GraphNode:
    return GraphNode(_chunk_id(doc_id, c), c.text, c.entity_type, doc_id, c.start, c.end, c.char_begin, c.char_end)


def build_graph(predictions: Iterable[RelationPrediction], positive_labels: Sequence[str] = POSITIVE) -> KnowledgeGraph:
    """One node per chunk instance in a positive prediction, one edge per positive prediction."""
    g = KnowledgeGraph()
    for p in predictions:
        if p.label not in positive_labels:
            continue
        a, b = _node(p.pair.doc_id, p.pair.chunk1), _node(p.pair.doc_id, p.pair.chunk2)
        g.nodes.setdefault(a.id, a)
        g.nodes.setdefault(b.id, b)
        g.edges.append(GraphEdge(a.id, b.id, p.label, p.confidence))
    return g


def merge_body_parts(
    graph: KnowledgeGraph,
    body_type: str = "BodyPart",
    subpart_type: str = "SubPart",
    direction_type: str = "Direction",
) -> KnowledgeGraph:
    """Fold sub-part and direction nodes into their linked body part.

    The composite keeps the body part's id and reads ``<direction> <body part>
    <sub-part>``. A modifier linked to several body parts joins each of them.
    Edges between a body part and its own modifiers disappear into the
    composite; other edges of absorbed modifiers re-point to the composite(s).
    """
    modifier_types = (subpart_type, direction_type)
    attached: dict[str, list[str]] = defaultdict(list)  # body part -> modifiers
    owners: dict[str, list[str]] = defaultdict(list)  # modifier -> body parts
    internal = set()
    for k, e in enumerate(graph.edges):
        for b, m in ((e.source, e.target), (e.target, e.source)):
            if graph.nodes[b].entity_type == body_type and graph.nodes[m].entity_type in modifier_types:
                if m not in attached[b]:
                    attached[b].append(m)
                    owners[m].append(b)
                internal.add(k)

    out = KnowledgeGraph()
    for nid, node in graph.nodes.items():
        if nid in owners:
            continue
        mods = sorted((graph.nodes[m] for m in attached.get(nid, ())), key=lambda n: n.sort_key)
        if mods:
            dirs = [m.text for m in mods if m.entity_type == direction_type]
            subs = [m.text for m in mods if m.entity_type == subpart_type]
            node = replace(node, text=" ".join(dirs + [node.text] + subs), components=tuple(m.id for m in mods))
        out.nodes[nid] = node

    for k, e in enumerate(graph.edges):
        if k in internal:
            continue
        for s in owners.get(e.source, [e.source]):
            for t in owners.get(e.target, [e.target]):
                if s != t:
                    out.edges.append(GraphEdge(s, t, e.label, e.confidence))
    return out


def attach_codes(graph: KnowledgeGraph, table: EmbeddingTable, dictionary: "CodeDictionary",
                 entity_types: Iterable[str] | None = None) -> KnowledgeGraph:
    """Set each node's ``code`` to its top-1 resolution."""
    types = None if entity_types is None else set(entity_types)
    out = KnowledgeGraph(dict(graph.nodes), list(graph.edges))
    for nid, node in graph.nodes.items():
        if types is None or node.entity_type in types:
            code = resolve(node.text, table, dictionary, 1)[0][0]
            out.nodes[nid] = replace(node, code=f"{dictionary.ontology}:{code}")
    return out


def _dot_quote(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def export_graph(graph: KnowledgeGraph, path: str | Path, fmt: str = "dot") -> None:
    """Write ``dot`` (Graphviz) or line-oriented ``records``; output is sorted."""
    nodes = sorted(graph.nodes.values(), key=lambda n: n.sort_key)
    edges = sorted(graph.edges, key=lambda e: (graph.nodes[e.source].sort_key, graph.nodes[e.target].sort_key, e.label))
    lines = []
    if fmt == "dot":
        lines.append("digraph relations {")
        for n in nodes:
            label = f"{n.text}\\n{n.entity_type}" + (f"\\n{n.code}" if n.code else "")
            lines.append(f"  {_dot_quote(n.id)} [label={_dot_quote(label)}];")
        for e in edges:
            lines.append(f"  {_dot_quote(e.source)} -> {_dot_quote(e.target)} [label={_dot_quote(f'{e.label} ({e.confidence:.3f})')}];")
        lines.append("}")
    elif fmt == "records":
        for n in nodes:
            lines.append("\t".join(["node", n.id, n.entity_type, n.text, n.doc_id, str(n.char_begin),
                                    str(n.char_end), n.code or "", ",".join(n.components)]))
        for e in edges:
            lines.append("\t".join(["edge", e.source, e.target, e.label, f"{e.confidence:.6f}"]))
    else:
        raise ValueError(f"unknown graph format {fmt!r}")
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


# --------------------------------------------------------------------------
# timelines

_DATE_FORMATS = (
    "%Y-%m-%d", "%m/%d/%Y", "%m/%d/%y", "%m-%d-%Y",
    "%b %d, %Y", "%B %d, %Y", "%b %d %Y", "%B %d %Y",
    "%d %b %Y", "%d %B %Y", "%b. %d, %Y",
)


def parse_date(text: str) -> dt.date | None:
    """ISO, US slashed (month first) or month-name dates; ``None`` if unparseable."""
    s = re.sub(r"\s+([,.])", r"\1", text.strip())
    s = re.sub(r"\s*/\s*", "/", s)
    s = re.sub(r"\s+", " ", s)
    for fmt in _DATE_FORMATS:
        try:
            return dt.datetime.strptime(s, fmt).date()
        except ValueError:
            continue
    return None


@dataclass(frozen=True)
class TimelineEvent:
    date: dt.date
    doc_id: str
    anchor: EntityChunk
    date_chunk: EntityChunk
    attachments: tuple[EntityChunk, ...] = ()


@dataclass
class Timeline:
    events: list[TimelineEvent]
    undated: list[tuple[str, EntityChunk]]
    rejects: list[tuple[str, EntityChunk, EntityChunk]]  # (doc, anchor, date chunk)

    def to_rows(self) -> list[list[str]]:
        return [[e.date.isoformat(), e.doc_id, e.anchor.text, e.anchor.entity_type,
                 "; ".join(a.text for a in e.attachments)] for e in self.events]


def build_timeline(
    predictions: Iterable[RelationPrediction],
    date_entity_type: str = "Date",
    positive_labels: Sequence[str] = POSITIVE,
    anchor_types: Iterable[str] | None = None,
) -> Timeline:
    """One event per positive (anchor, date) pair, sorted by date.

    Anchors are the non-date side of dated pairs plus, for the undated list,
    every chunk of ``anchor_types`` (or every non-date entity-1 chunk when
    ``anchor_types`` is None) seen in a positive prediction.
    """
    chunks: dict[tuple, EntityChunk] = {}
    dates: dict[tuple, list[tuple]] = defaultdict(list)
    related: dict[tuple, set] = defaultdict(set)
    candidates: set[tuple] = set()
    types = None if anchor_types is None else set(anchor_types)

    for p in predictions:
        if p.label not in positive_labels:
            continue
        doc = p.pair.doc_id
        k1, k2 = (doc, p.pair.chunk1.start, p.pair.chunk1.end), (doc, p.pair.chunk2.start, p.pair.chunk2.end)
        chunks[k1], chunks[k2] = p.pair.chunk1, p.pair.chunk2
        is_date1 = p.pair.chunk1.entity_type == date_entity_type
        is_date2 = p.pair.chunk2.entity_type == date_entity_type
        if is_date1 != is_date2:
            anchor, date = (k2, k1) if is_date1 else (k1, k2)
            if date not in dates[anchor]:
                dates[anchor].append(date)
            candidates.add(anchor)
        elif not is_date1:
            related[k1].add(k2)
            related[k2].add(k1)
            if types is None:
                candidates.add(k1)
        for k in (k1, k2):
            if types is not None and chunks[k].entity_type in types:
                candidates.add(k)

    events, rejects, undated = [], [], []
    for anchor in sorted(candidates):
        if not dates.get(anchor):
            undated.append((anchor[0], chunks[anchor]))
            continue
        attachments = tuple(chunks[k] for k in sorted(related.get(anchor, ())))
        for dk in dates[anchor]:
            d = parse_date(chunks[dk].text)
            if d is None:
                rejects.append((anchor[0], chunks[anchor], chunks[dk]))
            else:
                events.append(TimelineEvent(d, anchor[0], chunks[anchor], chunks[dk], attachments))
    events.sort(key=lambda e: (e.date, e.doc_id, e.anchor.start, e.date_chunk.start))
    return Timeline(events, undated, rejects)


def write_timeline(timeline: Timeline, path: str | Path) -> None:
    lines = ["date\tdoc_id\tanchor\tanchor_type\tattachments"]
    lines += ["\t".join(r) for r in timeline.to_rows()]
    for doc, anchor, date_chunk in timeline.rejects:
        lines.append(f"#reject\t{doc}\t{anchor.text}\t{anchor.entity_type}\t{date_chunk.text}")
    for doc, anchor in timeline.undated:
        lines.append(f"#undated\t{doc}\t{anchor.text}\t{anchor.entity_type}\t")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# --------------------------------------------------------------------------
# enrichment and code resolution

def enrich_chunk(anchor: EntityChunk, related: Sequence[EntityChunk], order_policy: str = "document") -> str:
    """Anchor text followed by its related chunks; repeated (case-insensitive) texts are dropped.

    ``document`` orders the related chunks by position, ``given`` keeps the input order.
    """
    if order_policy == "document":
        related = sorted(related, key=lambda c: (c.start, c.end))
    elif order_policy != "given":
        raise ValueError(f"unknown order policy {order_policy!r}")
    parts, seen = [anchor.text], {anchor.text.lower()}
    for c in related:
        if c.text.lower() not in seen:
            seen.add(c.text.lower())
            parts.append(c.text)
    return " ".join(parts)


def enrich_predictions(
    predictions: Iterable[RelationPrediction],
    positive_labels: Sequence[str] = POSITIVE,
    anchor_role: str = "entity2",
    anchor_types: Iterable[str] | None = None,
) -> list[tuple[str, EntityChunk, str]]:
    """(doc id, anchor, enriched text) for every anchor with a positive relation.

    The default anchor role is entity 2, the core entity (symptom, procedure,
    test) that general entities such as body parts attach to.
    """
    if anchor_role not in ("entity1", "entity2"):
        raise ValueError("anchor_role must be 'entity1' or 'entity2'")
    types = None if anchor_types is None else set(anchor_types)
    groups: dict[tuple, list[EntityChunk]] = defaultdict(list)
    anchors: dict[tuple, EntityChunk] = {}
    for p in predictions:
        if p.label not in positive_labels:
            continue
        a, other = (p.pair.chunk2, p.pair.chunk1) if anchor_role == "entity2" else (p.pair.chunk1, p.pair.chunk2)
        if types is not None and a.entity_type not in types:
            continue
        key = (p.pair.doc_id, a.start, a.end)
        anchors[key] = a
        groups[key].append(other)
    return [(k[0], anchors[k], enrich_chunk(anchors[k], groups[k])) for k in sorted(anchors)]


@dataclass(frozen=True)
class CodeDictionary:
    ontology: str
    codes: tuple[str, ...]
    descriptions: tuple[str, ...]
    vectors: np.ndarray

    def __len__(self) -> int:
        return len(self.codes)


def build_code_dictionary(entries: Iterable[tuple[str, str]], table: EmbeddingTable, ontology: str = "CODES") -> CodeDictionary:
    codes, descs = [], []
    for code, desc in entries:
        if code in codes:
            raise ValueError(f"duplicate code {code!r} in {ontology}")
        codes.append(code)
        descs.append(desc)
    vecs = np.vstack([embed_text(table, d) for d in descs]) if descs else np.zeros((0, table.dim))
    return CodeDictionary(ontology, tuple(codes), tuple(descs), vecs)


def load_code_dictionary(path: str | Path, table: EmbeddingTable, ontology: str | None = None) -> CodeDictionary:
    """Read ``code<TAB>description`` lines; ``# ontology: NAME`` sets the ontology name."""
    path = Path(path)
    entries = []
    name = ontology
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if line.startswith("#"):
            key, _, val = line[1:].partition(":")
            if key.strip().lower() == "ontology" and name is None:
                name = val.strip()
            continue
        if not line.strip():
            continue
        code, tab, desc = line.partition("\t")
        if not tab or not code.strip() or not desc.strip():
            raise FormatError(f"{path}: line {lineno}: expected code<TAB>description")
        entries.append((code.strip(), desc.strip()))
    try:
        return build_code_dictionary(entries, table, name or path.stem)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None


def resolve(query: str, table: EmbeddingTable, dictionary: CodeDictionary, k: int = 1) -> list[tuple[str, str, float]]:
    """Top-k codes by cosine between the query's mean embedding and each description."""
    if k <= 0:
        raise ValueError("k must be positive")
    if len(dictionary) == 0:
        raise ValueError("empty code dictionary")
    q = embed_text(table, query)
    scored = [(code, desc, cosine_similarity(q, v))
              for code, desc, v in zip(dictionary.codes, dictionary.descriptions, dictionary.vectors)]
    scored.sort(key=lambda r: (-r[2], r[0]))
    return scored[:k]
