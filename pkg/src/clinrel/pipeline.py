"""Chunks in, relation predictions out.

generate_pairs -> prune_pairs -> features (shared per document) -> classifier.
Any classifier with ``class_labels`` and ``predict_proba(matrix)`` plugs in;
:class:`clinrel.fcnn.FcnnModel` is the built-in one.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Protocol, Sequence

import numpy as np

from .corpus import CandidatePair, Document, EntityChunk, FormatError, TrainingRow, row_to_document
from .embeddings import EmbeddingTable
from .features import DocumentFeaturizer, FeatureConfig, FeatureVector, build_features, describe_layout
from .fcnn import RelationExample
from .syntax import SENTINEL_CROSS, document_trees, prune_pairs

__all__ = [
    "Classifier",
    "RelationSchema",
    "PipelineConfig",
    "RelationPrediction",
    "BatchError",
    "load_schema",
    "generate_pairs",
    "candidate_pairs",
    "extract_relations",
    "extract_relations_batch",
    "training_examples",
    "examples_from_rows",
    "write_predictions",
    "read_predictions",
]


class Classifier(Protocol):
    class_labels: tuple[str, ...]

    def predict_proba(self, X: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class RelationSchema:
    allowed_pairs: tuple[tuple[str, str], ...]
    labels: tuple[str, ...] = ("0", "1")
    positive_labels: tuple[str, ...] = ("1",)

    def __post_init__(self):
        pairs = tuple(tuple(p) for p in self.allowed_pairs)
        if len(set(pairs)) != len(pairs):
            raise ValueError("duplicate entity pair in schema")
        object.__setattr__(self, "allowed_pairs", pairs)
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "positive_labels", tuple(self.positive_labels))
        if not set(self.positive_labels) <= set(self.labels):
            raise ValueError("positive labels must be schema labels")

    def allows(self, t1: str, t2: str) -> bool:
        return (t1, t2) in self.allowed_pairs

    @property
    def negative_label(self) -> str:
        return next(l for l in self.labels if l not in self.positive_labels)


def load_schema(path: str | Path) -> RelationSchema:
    """Read ``Type1 -> Type2`` lines plus optional ``labels:`` and ``positive:`` lines."""
    pairs, labels, positive = [], None, None
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, rest = line.partition(":")
        if sep and key.strip() in ("labels", "positive"):
            vals = tuple(v.strip() for v in rest.split(",") if v.strip())
            if key.strip() == "labels":
                labels = vals
            else:
                positive = vals
            continue
        left, arrow, right = line.partition("->")
        if not arrow or not left.strip() or not right.strip():
            raise FormatError(f"{path}: line {lineno}: expected 'Entity1Type -> Entity2Type'")
        pairs.append((left.strip(), right.strip()))
    labels = labels or ("0", "1")
    if positive is None:
        positive = ("1",) if "1" in labels else labels[-1:]
    return RelationSchema(tuple(pairs), labels, positive)


@dataclass(frozen=True)
class PipelineConfig:
    schema: RelationSchema
    feature_config: FeatureConfig
    max_syntactic_distance: int = 5
    context_scope: str = "sentence"

    def __post_init__(self):
        if self.context_scope not in ("sentence", "document"):
            raise ValueError("context_scope must be 'sentence' or 'document'")
        if self.max_syntactic_distance < 0:
            raise ValueError("max_syntactic_distance must be >= 0")


@dataclass(frozen=True)
class RelationPrediction:
    pair: CandidatePair
    label: str
    confidence: float
    probabilities: tuple[float, ...]
    labels: tuple[str, ...] = field(default=("0", "1"), compare=False)


def generate_pairs(doc: Document, schema: RelationSchema, context_scope: str = "sentence") -> list[CandidatePair]:
    """All ordered chunk pairs whose types the schema allows, entity-1 role first."""
    chunks = sorted(set(doc.chunks), key=lambda c: (c.start, c.end, c.entity_type))
    pairs = []
    for c1 in chunks:
        for c2 in chunks:
            if c1 == c2 or not schema.allows(c1.entity_type, c2.entity_type):
                continue
            if context_scope == "sentence" and c1.sentence_index != c2.sentence_index:
                continue
            pairs.append(CandidatePair.of(doc.id, c1, c2))
    pairs.sort(key=lambda p: (p.chunk1.sentence_index, p.chunk1.start, p.chunk2.start, p.chunk1.end, p.chunk2.end))
    return pairs


def candidate_pairs(doc: Document, config: PipelineConfig, trees=None) -> list[CandidatePair]:
    """Schema pairs that survive syntactic-distance pruning."""
    trees = document_trees(doc) if trees is None else trees
    pairs = generate_pairs(doc, config.schema, config.context_scope)
    return prune_pairs(pairs, doc, config.max_syntactic_distance, trees, SENTINEL_CROSS)


def _check_model(model: Classifier, config: PipelineConfig, table: EmbeddingTable):
    fc = getattr(model, "feature_config", None)
    if fc is not None and fc != config.feature_config:
        raise ValueError("model feature config does not match the pipeline feature config")
    if table.dim != config.feature_config.embed_dim:
        raise ValueError("embedding table dim does not match the feature config")
    extra = set(model.class_labels) - set(config.schema.labels)
    if extra:
        raise ValueError(f"model labels {sorted(extra)} are not schema labels")


def extract_relations(
    doc: Document,
    model: Classifier,
    config: PipelineConfig,
    table: EmbeddingTable,
    shared_features: bool = True,
) -> list[RelationPrediction]:
    """Classify every surviving candidate pair of one document.

    ``shared_features=False`` rebuilds every feature vector from scratch; it
    exists to check that per-document sharing changes nothing.
    """
    _check_model(model, config, table)
    trees = document_trees(doc)
    pairs = candidate_pairs(doc, config, trees)
    if not pairs:
        return []
    if shared_features:
        X = DocumentFeaturizer(doc, table, config.feature_config, trees).matrix(pairs)
    else:
        X = np.vstack([build_features(p, doc, table, config.feature_config, trees).values for p in pairs])
    probs = np.asarray(model.predict_proba(X))
    labels = tuple(model.class_labels)
    out = []
    for pair, row in zip(pairs, probs):
        k = int(np.argmax(row))
        out.append(RelationPrediction(pair, labels[k], float(row[k]), tuple(float(p) for p in row), labels))
    return out


class BatchError(RuntimeError):
    def __init__(self, failures: Mapping[str, BaseException]):
        self.failures = dict(failures)
        detail = "; ".join(f"{doc_id}: {exc}" for doc_id, exc in self.failures.items())
        super().__init__(f"{len(self.failures)} document(s) failed: {detail}")


def extract_relations_batch(
    docs: Sequence[Document],
    model: Classifier,
    config: PipelineConfig,
    table: EmbeddingTable,
    parallelism: int = 1,
) -> list[list[RelationPrediction]]:
    """Per-document predictions in input order; identical for any ``parallelism``."""
    def run(doc):
        try:
            return extract_relations(doc, model, config, table), None
        except Exception as exc:  # collected and re-raised with doc ids
            return None, exc

    if parallelism <= 1:
        results = [run(d) for d in docs]
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(run, docs))
    failures = {d.id: exc for d, (_, exc) in zip(docs, results) if exc is not None}
    if failures:
        raise BatchError(failures)
    return [preds for preds, _ in results]


# --------------------------------------------------------------------------
# training data

def _pair_key(pair: CandidatePair) -> tuple:
    return (pair.doc_id, pair.chunk1.start, pair.chunk1.end, pair.chunk2.start, pair.chunk2.end)


def training_examples(
    docs: Iterable[Document],
    gold: Mapping[tuple, str],
    config: PipelineConfig,
    table: EmbeddingTable,
) -> list[RelationExample]:
    """Features for every surviving candidate pair, labeled from ``gold``.

    ``gold`` maps ``(doc_id, c1_start, c1_end, c2_start, c2_end)`` token
    ranges to a label; pairs absent from it get the schema's negative label.
    """
    layout = describe_layout(config.feature_config)
    neg = config.schema.negative_label
    out = []
    for doc in docs:
        trees = document_trees(doc)
        pairs = candidate_pairs(doc, config, trees)
        if not pairs:
            continue
        X = DocumentFeaturizer(doc, table, config.feature_config, trees).matrix(pairs)
        for pair, x in zip(pairs, X):
            key = _pair_key(pair)
            out.append(RelationExample(FeatureVector(x, layout), gold.get(key, neg), key))
    return out


def examples_from_rows(rows: Iterable[TrainingRow], feature_config: FeatureConfig, table: EmbeddingTable) -> list[RelationExample]:
    """One example per training-CSV row. Rows are explicit pairs, so no pruning applies."""
    out = []
    for i, row in enumerate(rows):
        doc, pair = row_to_document(row)
        fv = build_features(pair, doc, table, feature_config)
        out.append(RelationExample(fv, row.label, (row.doc_id, i)))
    return out


# --------------------------------------------------------------------------
# prediction records

_CHUNK_FIELDS = ("type", "text", "sentence", "token_start", "token_end", "char_begin", "char_end")


def _chunk_record(prefix: str, c: EntityChunk) -> dict:
    vals = (c.entity_type, c.text, c.sentence_index, c.start, c.end, c.char_begin, c.char_end)
    return {f"{prefix}_{k}": v for k, v in zip(_CHUNK_FIELDS, vals)}


def _chunk_from_record(prefix: str, rec: Mapping) -> EntityChunk:
    g = lambda k: rec[f"{prefix}_{k}"]  # noqa: E731
    return EntityChunk(str(g("type")), int(g("token_start")), int(g("token_end")), str(g("text")),
                       int(g("sentence")), int(g("char_begin")), int(g("char_end")))


def prediction_record(p: RelationPrediction) -> dict:
    rec = {"doc_id": p.pair.doc_id}
    rec.update(_chunk_record("e1", p.pair.chunk1))
    rec.update(_chunk_record("e2", p.pair.chunk2))
    rec["label"] = p.label
    rec["confidence"] = p.confidence
    rec["probabilities"] = dict(zip(p.labels, p.probabilities))
    return rec


def write_predictions(predictions: Iterable[RelationPrediction], path: str | Path, fmt: str = "tsv") -> None:
    """Write one record per prediction as ``tsv`` or ``jsonl``."""
    recs = [prediction_record(p) for p in predictions]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if fmt == "jsonl":
            for r in recs:
                fh.write(json.dumps(r, sort_keys=True) + "\n")
            return
        if fmt != "tsv":
            raise ValueError(f"unknown prediction format {fmt!r}")
        cols = ["doc_id"] + [f"e{i}_{k}" for i in (1, 2) for k in _CHUNK_FIELDS] + ["label", "confidence", "probabilities"]
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(cols)
        for r in recs:
            r = dict(r, probabilities=";".join(f"{k}={v!r}" for k, v in r["probabilities"].items()),
                     confidence=repr(r["confidence"]))
            w.writerow([r[c] for c in cols])


def read_predictions(path: str | Path) -> list[RelationPrediction]:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    recs = []
    if text.lstrip().startswith("{"):
        recs = [json.loads(line) for line in text.splitlines() if line.strip()]
    else:
        for r in csv.DictReader(text.splitlines(), delimiter="\t"):
            probs = {}
            for item in filter(None, (r.get("probabilities") or "").split(";")):
                k, _, v = item.partition("=")
                probs[k] = float(v)
            r["probabilities"] = probs
            recs.append(r)
    out = []
    for lineno, r in enumerate(recs, 1):
        try:
            c1, c2 = _chunk_from_record("e1", r), _chunk_from_record("e2", r)
            labels = tuple(r["probabilities"])
            out.append(RelationPrediction(
                CandidatePair.of(str(r["doc_id"]), c1, c2), str(r["label"]), float(r["confidence"]),
                tuple(float(v) for v in r["probabilities"].values()), labels,
            ))
        except (KeyError, ValueError, TypeError) as exc:
            raise FormatError(f"{path}: record {lineno}: {exc}") from None
    return out
