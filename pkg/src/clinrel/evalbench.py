"""Confusion matrices, macro-F1 reports and a throughput benchmark."""

from __future__ import annotations

import gc
import json
import time
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .fcnn import RelationExample, examples_to_arrays
from .pipeline import PipelineConfig, extract_relations_batch


@dataclass(frozen=True)
class ConfusionMatrix:
    labels: tuple[str, ...]
    counts: np.ndarray  # rows gold, columns predicted

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def confusion_matrix(gold: Sequence[str], pred: Sequence[str], labels: Sequence[str]) -> ConfusionMatrix:
    if len(gold) != len(pred):
        raise ValueError("gold and predicted label lists differ in length")
    index = {l: i for i, l in enumerate(labels)}
    counts = np.zeros((len(labels), len(labels)), dtype=np.int64)
    for g, p in zip(gold, pred):
        if g not in index or p not in index:
            raise ValueError(f"unknown label {g if g not in index else p!r}")
        counts[index[g], index[p]] += 1
    return ConfusionMatrix(tuple(labels), counts)


def per_class_scores(cm: ConfusionMatrix) -> dict[str, dict[str, float]]:
    """Precision, recall, F1 and support per label; 0 wherever a denominator is 0."""
    tp = np.diag(cm.counts).astype(float)
    predicted = cm.counts.sum(axis=0)
    support = cm.counts.sum(axis=1)
    out = {}
    for i, label in enumerate(cm.labels):
        p = tp[i] / predicted[i] if predicted[i] else 0.0
        r = tp[i] / support[i] if support[i] else 0.0
        f = 2 * p * r / (p + r) if p + r else 0.0
        out[label] = {"precision": p, "recall": r, "f1": f, "support": int(support[i])}
    return out


def macro_f1(cm: ConfusionMatrix, exclude: Sequence[str] = ()) -> float:
    """Unweighted mean F1 over all labels not in ``exclude``; absent classes score 0."""
    scores = per_class_scores(cm)
    kept = [s["f1"] for l, s in scores.items() if l not in set(exclude)]
    if not kept:
        raise ValueError("no labels left after exclusion")
    return float(np.mean(kept))


@dataclass
class MetricsReport:
    labels: tuple[str, ...]
    per_class: dict
    macro_f1: float
    accuracy: float
    confusion: ConfusionMatrix = field(repr=False)
    excluded: tuple[str, ...] = ()

    def to_table(self) -> str:
        width = max(8, *(len(l) for l in self.labels))
        lines = [f"{'label':<{width}}  precision  recall     f1  support"]
        for l in self.labels:
            s = self.per_class[l]
            mark = " (excluded)" if l in self.excluded else ""
            lines.append(f"{l:<{width}}  {s['precision']:9.4f}  {s['recall']:6.4f}  {s['f1']:5.4f}  {s['support']:7d}{mark}")
        lines.append(f"{'macro-F1':<{width}}  {self.macro_f1:.4f}")
        lines.append(f"{'accuracy':<{width}}  {self.accuracy:.4f}")
        return "\n".join(lines) + "\n"

    def to_record(self) -> dict:
        return {
            "labels": list(self.labels),
            "per_class": self.per_class,
            "macro_f1": self.macro_f1,
            "accuracy": self.accuracy,
            "excluded": list(self.excluded),
            "confusion": self.confusion.counts.tolist(),
        }


def report_from_labels(gold, pred, labels, exclude: Sequence[str] = ()) -> MetricsReport:
    cm = confusion_matrix(gold, pred, labels)
    acc = float(np.trace(cm.counts) / cm.total) if cm.total else 0.0
    return MetricsReport(tuple(labels), per_class_scores(cm), macro_f1(cm, exclude), acc, cm, tuple(exclude))


def evaluate(model, test_examples: Sequence[RelationExample], exclude: Sequence[str] = ()) -> MetricsReport:
    if not test_examples:
        raise ValueError("empty evaluation set")
    labels = tuple(model.class_labels)
    X, y = examples_to_arrays(test_examples, labels)
    pred = np.argmax(model.predict_proba(X), axis=1)
    return report_from_labels([labels[i] for i in y], [labels[i] for i in pred], labels, exclude)


@dataclass
class BenchReport:
    doc_count: int
    pair_count: int
    total_seconds: float
    docs_per_second: float
    pairs_per_second: float
    repetitions: int
    timings: list[float]
    note: str = ""

    # wall-clock fields vary between runs
    TIMING_FIELDS = ("total_seconds", "docs_per_second", "pairs_per_second", "timings")

    def to_record(self) -> dict:
        rec = asdict(self)
        rec["timing_fields"] = list(self.TIMING_FIELDS)
        return rec

    def to_table(self) -> str:
        return (
            f"documents       {self.doc_count}\n"
            f"pairs           {self.pair_count}\n"
            f"best seconds    {self.total_seconds:.4f} (best of {self.repetitions})\n"
            f"docs/second     {self.docs_per_second:.2f}\n"
            f"pairs/second    {self.pairs_per_second:.2f}\n"
            + (f"note            {self.note}\n" if self.note else "")
        )


def benchmark_throughput(docs, model, config: PipelineConfig, table, repetitions: int = 3, parallelism: int = 1) -> BenchReport:
    """Best-of-``repetitions`` wall time of batch extraction; loading is not timed.

    As with :mod:`timeit`, garbage collection is flushed before and disabled
    during each timed run so collector pauses from earlier work do not land
    in the measurement.
    """
    if not docs:
        raise ValueError("benchmark needs at least one document")
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    timings = []
    gc_was_enabled = gc.isenabled()
    try:
        for _ in range(repetitions):
            gc.collect()
            gc.disable()
            t0 = time.perf_counter()
            results = extract_relations_batch(docs, model, config, table, parallelism)
            timings.append(time.perf_counter() - t0)
    finally:
        if gc_was_enabled:
            gc.enable()
    pairs = sum(len(r) for r in results)
    best = min(timings)
    note = ""
    if pairs == 0:
        note = "no candidate pairs; pairs/second reported as 0"
    return BenchReport(
        doc_count=len(docs),
        pair_count=pairs,
        total_seconds=best,
        docs_per_second=len(docs) / best if best > 0 else 0.0,
        pairs_per_second=pairs / best if best > 0 and pairs else 0.0,
        repetitions=repetitions,
        timings=timings,
        note=note,
    )


def dump_record(record: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(record, fh, indent=2, sort_keys=True)
        fh.write("\n")
