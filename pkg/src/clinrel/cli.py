"""Command-line interface: ``clinrel <command> --config run.json [flags]``.

Settings come from the JSON config, then ``CLINREL_*`` environment variables
(paths only), then flags; later sources win. Exit codes: 0 success, 1 user
error (bad config or input), 2 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Callable

import numpy as np

from . import corpus, downstream, evalbench, fcnn, pipeline
from .embeddings import load_text_embeddings
from .features import FeatureConfig

log = logging.getLogger("clinrel")

PATH_KEYS = ("embeddings", "schema", "model", "train_csv", "test_csv", "input", "predictions", "output", "codes", "log", "metrics")
ENV_PREFIX = "CLINREL_"

# path keys each command reads (must exist) and writes
REQUIRED = {
    "train": (("train_csv", "embeddings"), ("model",)),
    "predict": (("input", "embeddings", "schema", "model"), ("output",)),
    "evaluate": (("test_csv", "embeddings", "model"), ("output",)),
    "graph": (("predictions",), ("output",)),
    "timeline": (("predictions",), ("output",)),
    "enrich": (("predictions", "embeddings", "codes"), ("output",)),
    "benchmark": (("input", "embeddings", "schema", "model"), ("output",)),
}


class UsageError(Exception):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass
class RunConfig:
    paths: dict = field(default_factory=dict)
    features: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    pipeline: dict = field(default_factory=dict)
    seed: int = 0
    parallelism: int = 1
    exclude_labels: tuple = ()
    graph_format: str = "dot"
    prediction_format: str = "tsv"
    repetitions: int = 3
    holdout: float = 0.2
    date_type: str = "Date"

    def path(self, key) -> Path:
        return Path(self.paths[key])


def load_config(args) -> RunConfig:
    cfg = RunConfig()
    problems = []
    if args.config:
        cpath = Path(args.config)
        try:
            raw = json.loads(cpath.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError([f"config: cannot read {cpath}: {exc}"]) from None
        known = {f.name for f in fields(RunConfig)}
        for key in raw:
            if key not in known:
                problems.append(f"config: unknown key {key!r}")
        for key in known & raw.keys():
            setattr(cfg, key, raw[key])
        cfg.paths = {k: str((cpath.parent / v)) if not Path(v).is_absolute() else v for k, v in dict(cfg.paths).items()}
        cfg.exclude_labels = tuple(cfg.exclude_labels)
    for key in PATH_KEYS:
        env = os.environ.get(ENV_PREFIX + key.upper())
        if env:
            cfg.paths[key] = env
        flag = getattr(args, key, None)
        if flag:
            cfg.paths[key] = flag
    if args.seed is not None:
        cfg.seed = args.seed
    if args.parallelism is not None:
        cfg.parallelism = args.parallelism
    if args.max_distance is not None:
        cfg.pipeline["max_syntactic_distance"] = args.max_distance
    if args.context_scope is not None:
        cfg.pipeline["context_scope"] = args.context_scope
    if args.vicinity_mode is not None:
        cfg.features["vicinity_mode"] = args.vicinity_mode
    if args.exclude_labels is not None:
        cfg.exclude_labels = tuple(l for l in args.exclude_labels.split(",") if l)
    if args.format is not None:
        if args.command == "graph":
            cfg.graph_format = args.format
        else:
            cfg.prediction_format = args.format
    if getattr(args, "repetitions", None) is not None:
        cfg.repetitions = args.repetitions
    if problems:
        raise UsageError(problems)
    return cfg


def validate(cfg: RunConfig, command: str):
    reads, writes = REQUIRED[command]
    problems = []
    for key in reads:
        if key not in cfg.paths:
            problems.append(f"paths.{key}: required for {command}")
        elif not Path(cfg.paths[key]).is_file():
            problems.append(f"paths.{key}: file not found: {cfg.paths[key]}")
    for key in writes:
        if key not in cfg.paths:
            problems.append(f"paths.{key}: required for {command}")
    if cfg.parallelism < 1:
        problems.append("parallelism: must be >= 1")
    if not 0 <= cfg.holdout < 1:
        problems.append("holdout: must be in [0, 1)")
    if cfg.repetitions < 1:
        problems.append("repetitions: must be >= 1")
    if cfg.graph_format not in ("dot", "records"):
        problems.append("format: graph format must be dot or records")
    if command in ("predict",) and cfg.prediction_format not in ("tsv", "jsonl"):
        problems.append("format: prediction format must be tsv or jsonl")
    if cfg.pipeline.get("context_scope", "sentence") not in ("sentence", "document"):
        problems.append("pipeline.context_scope: must be sentence or document")
    if cfg.pipeline.get("max_syntactic_distance", 5) < 0:
        problems.append("pipeline.max_syntactic_distance: must be >= 0")
    try:
        fcnn.TrainConfig(**{k: v for k, v in cfg.train.items() if k != "hidden_sizes"})
    except (TypeError, ValueError) as exc:
        problems.append(f"train: {exc}")
    if problems:
        raise UsageError(problems)


def _atomic(path: Path, write: Callable[[Path], None]):
    """Write via a temporary sibling so failures never leave partial output."""
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".partial")
    try:
        write(tmp)
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink()


def _write_text(path: Path, text: str):
    _atomic(path, lambda p: p.write_text(text, encoding="utf-8"))


def _feature_config(cfg: RunConfig, dim: int) -> FeatureConfig:
    try:
        return FeatureConfig(embed_dim=dim, **cfg.features)
    except (TypeError, ValueError) as exc:
        raise UsageError([f"features: {exc}"]) from None


def _pipeline_config(cfg: RunConfig, model, table) -> pipeline.PipelineConfig:
    schema = pipeline.load_schema(cfg.path("schema"))
    fc = model.feature_config or _feature_config(cfg, table.dim)
    if "vicinity_mode" in cfg.features and cfg.features["vicinity_mode"] != fc.vicinity_mode:
        raise UsageError([f"features.vicinity_mode: model was trained with {fc.vicinity_mode!r}"])
    return pipeline.PipelineConfig(schema, fc, **cfg.pipeline)


def _train_config(cfg: RunConfig) -> tuple[fcnn.TrainConfig, tuple]:
    opts = dict(cfg.train)
    hidden = tuple(opts.pop("hidden_sizes", (200, 200)))
    opts["seed"] = cfg.seed
    return fcnn.TrainConfig(**opts), hidden


def _labels(rows) -> tuple[str, ...]:
    labels = sorted({r.label for r in rows})
    return tuple(labels)


# --------------------------------------------------------------------------
# commands

def cmd_train(cfg: RunConfig):
    rows = corpus.read_training_csv(cfg.path("train_csv"))
    table = load_text_embeddings(cfg.path("embeddings"))
    fc = _feature_config(cfg, table.dim)
    tc, hidden = _train_config(cfg)
    labels = _labels(rows)
    if len(labels) < 2:
        raise UsageError(["train_csv: need at least 2 classes"])
    doc_ids = sorted({r.doc_id for r in rows})
    rng = np.random.default_rng(cfg.seed)
    n_test = int(round(len(doc_ids) * cfg.holdout)) if len(doc_ids) > 1 else 0
    test_ids = set(rng.permutation(doc_ids)[:n_test].tolist())
    train_rows = [r for r in rows if r.doc_id not in test_ids]
    test_rows = [r for r in rows if r.doc_id in test_ids]
    model = fcnn.train(pipeline.examples_from_rows(train_rows, fc, table), labels, fc, tc, hidden)

    model_path = cfg.path("model")
    log_path = Path(cfg.paths.get("log", str(model_path) + ".log"))
    metrics_path = Path(cfg.paths.get("metrics", str(model_path) + ".metrics.json"))
    log_text = "".join(f"epoch={h['epoch']}\tloss={h['loss']:.6f}\taccuracy={h['accuracy']:.4f}\n" for h in model.history)
    record = {"train_examples": len(train_rows), "test_examples": len(test_rows)}
    if test_rows:
        report = evalbench.evaluate(model, pipeline.examples_from_rows(test_rows, fc, table), cfg.exclude_labels)
        record["holdout"] = report.to_record()
        print(report.to_table(), end="")
    _atomic(model_path, lambda p: fcnn.save_model(model, p))
    _write_text(log_path, log_text)
    _write_text(metrics_path, json.dumps(record, indent=2, sort_keys=True) + "\n")
    print(f"wrote {model_path}")


def _load_predict_inputs(cfg):
    table = load_text_embeddings(cfg.path("embeddings"))
    model = fcnn.load_model(cfg.path("model"))
    pconf = _pipeline_config(cfg, model, table)
    docs = corpus.read_conll(cfg.path("input"))
    return docs, model, pconf, table


def cmd_predict(cfg: RunConfig):
    docs, model, pconf, table = _load_predict_inputs(cfg)
    results = pipeline.extract_relations_batch(docs, model, pconf, table, cfg.parallelism)
    preds = [p for r in results for p in r]
    _atomic(cfg.path("output"), lambda p: pipeline.write_predictions(preds, p, cfg.prediction_format))
    print(f"{len(preds)} predictions for {len(docs)} documents -> {cfg.path('output')}")


def cmd_evaluate(cfg: RunConfig):
    rows = corpus.read_training_csv(cfg.path("test_csv"))
    table = load_text_embeddings(cfg.path("embeddings"))
    model = fcnn.load_model(cfg.path("model"))
    if model.feature_config is None or model.feature_config.embed_dim != table.dim:
        raise UsageError(["embeddings: dimension does not match the model"])
    report = evalbench.evaluate(model, pipeline.examples_from_rows(rows, model.feature_config, table), cfg.exclude_labels)
    out = cfg.path("output")
    _write_text(out, report.to_table())
    _write_text(out.with_suffix(out.suffix + ".json"), json.dumps(report.to_record(), indent=2, sort_keys=True) + "\n")
    print(report.to_table(), end="")


def cmd_graph(cfg: RunConfig):
    preds = pipeline.read_predictions(cfg.path("predictions"))
    graph = downstream.merge_body_parts(downstream.build_graph(preds))
    if "codes" in cfg.paths and "embeddings" in cfg.paths:
        table = load_text_embeddings(cfg.path("embeddings"))
        graph = downstream.attach_codes(graph, table, downstream.load_code_dictionary(cfg.path("codes"), table))
    _atomic(cfg.path("output"), lambda p: downstream.export_graph(graph, p, cfg.graph_format))
    print(f"graph: {len(graph.nodes)} nodes, {len(graph.edges)} edges -> {cfg.path('output')}")


def cmd_timeline(cfg: RunConfig):
    preds = pipeline.read_predictions(cfg.path("predictions"))
    tl = downstream.build_timeline(preds, cfg.date_type)
    _atomic(cfg.path("output"), lambda p: downstream.write_timeline(tl, p))
    print(f"timeline: {len(tl.events)} events, {len(tl.undated)} undated, {len(tl.rejects)} rejected dates")


def cmd_enrich(cfg: RunConfig):
    preds = pipeline.read_predictions(cfg.path("predictions"))
    table = load_text_embeddings(cfg.path("embeddings"))
    codes = downstream.load_code_dictionary(cfg.path("codes"), table)
    lines = ["doc_id\tanchor\tanchor_type\tbase_code\tenriched_chunk\tenriched_code\tscore"]
    for doc_id, anchor, text in downstream.enrich_predictions(preds):
        base = downstream.resolve(anchor.text, table, codes, 1)[0]
        rich = downstream.resolve(text, table, codes, 1)[0]
        lines.append(f"{doc_id}\t{anchor.text}\t{anchor.entity_type}\t{base[0]}\t{text}\t{rich[0]}\t{rich[2]:.6f}")
    _write_text(cfg.path("output"), "\n".join(lines) + "\n")
    print(f"enriched {len(lines) - 1} chunks -> {cfg.path('output')}")


def cmd_benchmark(cfg: RunConfig):
    docs, model, pconf, table = _load_predict_inputs(cfg)
    report = evalbench.benchmark_throughput(docs, model, pconf, table, cfg.repetitions, cfg.parallelism)
    out = cfg.path("output")
    _write_text(out, report.to_table())
    _write_text(out.with_suffix(out.suffix + ".json"), json.dumps(report.to_record(), indent=2, sort_keys=True) + "\n")
    print(report.to_table(), end="")


COMMANDS = {
    "train": cmd_train,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "graph": cmd_graph,
    "timeline": cmd_timeline,
    "enrich": cmd_enrich,
    "benchmark": cmd_benchmark,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="clinrel", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config")
        p.add_argument("--seed", type=int)
        p.add_argument("--parallelism", type=int)
        p.add_argument("--max-distance", type=int)
        p.add_argument("--context-scope", choices=("sentence", "document"))
        p.add_argument("--exclude-labels", help="comma-separated labels left out of macro-F1")
        p.add_argument("--vicinity-mode", choices=("flatten", "mean"))
        p.add_argument("--format", help="dot|records for graph, tsv|jsonl for predict")
        p.add_argument("-v", "--verbose", action="store_true")
        for key in PATH_KEYS:
            p.add_argument("--" + key.replace("_", "-"), dest=key)
        if name == "benchmark":
            p.add_argument("--repetitions", type=int)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        cfg = load_config(args)
        validate(cfg, args.command)
        COMMANDS[args.command](cfg)
    except UsageError as exc:
        for p in exc.problems:
            print(f"error: {p}", file=sys.stderr)
        return 1
    except (corpus.FormatError, fcnn.ModelFormatError, pipeline.BatchError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # pragma: no cover - reported as internal
        log.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
