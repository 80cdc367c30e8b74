import json

import pytest

from clinrel.cli import main
from clinrel.corpus import CandidatePair, write_conll, write_training_csv
from clinrel.embeddings import save_text_embeddings
from clinrel.pipeline import RelationPrediction, read_predictions, write_predictions
from clinrel.synthetic import planted_corpus, training_rows

from conftest import make_doc

EPOCHS = 30


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    train = planted_corpus(400, seed=21, dim=8, window=3)
    test = planted_corpus(40, seed=22, dim=8, window=3)
    test.table = train.table
    write_training_csv(training_rows(train), root / "train.csv")
    # the test corpus reuses the training vocabulary but was drawn with its own seed
    write_training_csv(training_rows(test), root / "test.csv")
    save_text_embeddings(train.table, root / "emb.txt")
    write_conll(test.docs, root / "notes.conll")
    (root / "schema.txt").write_text("Drug -> Reaction\nlabels: 0, 1\n")
    config = {
        "paths": {"train_csv": "train.csv", "test_csv": "test.csv", "embeddings": "emb.txt",
                  "schema": "schema.txt", "model": "model.bin", "input": "notes.conll"},
        "features": {"vicinity_window": 3, "max_path_len": 3},
        "train": {"epochs": EPOCHS, "hidden_sizes": [32, 32], "learning_rate": 0.003},
        "seed": 7,
    }
    (root / "run.json").write_text(json.dumps(config))
    assert main(["train", "--config", str(root / "run.json")]) == 0
    return root


def run(root, *args):
    return main([args[0], "--config", str(root / "run.json"), *args[1:]])


class TestTrain:
    def test_outputs(self, workspace):
        assert (workspace / "model.bin").stat().st_size > 0
        lines = (workspace / "model.bin.log").read_text().splitlines()
        assert len(lines) == EPOCHS and lines[0].startswith("epoch=0\tloss=")
        metrics = json.loads((workspace / "model.bin.metrics.json").read_text())
        assert metrics["test_examples"] > 0 and "macro_f1" in metrics["holdout"]

    def test_same_seed_same_bytes(self, workspace):
        assert run(workspace, "train", "--model", str(workspace / "again.bin")) == 0
        assert (workspace / "again.bin").read_bytes() == (workspace / "model.bin").read_bytes()

    def test_missing_embeddings(self, workspace, capsys):
        rc = run(workspace, "train", "--embeddings", str(workspace / "nope.txt"), "--model", str(workspace / "x.bin"))
        assert rc == 1
        assert "paths.embeddings" in capsys.readouterr().err
        assert not (workspace / "x.bin").exists()

    def test_all_problems_listed(self, workspace, capsys):
        rc = main(["train", "--train-csv", str(workspace / "missing.csv"), "--parallelism", "0"])
        assert rc == 1
        err = capsys.readouterr().err
        assert "paths.train_csv" in err and "paths.embeddings" in err and "paths.model" in err and "parallelism" in err

    def test_env_override(self, workspace, monkeypatch, capsys):
        monkeypatch.setenv("CLINREL_EMBEDDINGS", str(workspace / "absent.txt"))
        assert run(workspace, "train", "--model", str(workspace / "y.bin")) == 1
        assert "absent.txt" in capsys.readouterr().err
        assert not (workspace / "y.bin").exists()

    def test_unknown_config_key(self, tmp_path, capsys):
        (tmp_path / "bad.json").write_text('{"pathz": {}}')
        assert main(["train", "--config", str(tmp_path / "bad.json")]) == 1
        assert "pathz" in capsys.readouterr().err


class TestEvaluate:
    def test_training_set(self, workspace):
        out = workspace / "eval.txt"
        assert run(workspace, "evaluate", "--test-csv", str(workspace / "train.csv"), "--output", str(out)) == 0
        record = json.loads((workspace / "eval.txt.json").read_text())
        assert record["macro_f1"] >= 0.99
        assert "macro-F1" in out.read_text()

    def test_held_out(self, workspace):
        out = workspace / "eval_test.txt"
        assert run(workspace, "evaluate", "--output", str(out)) == 0
        assert json.loads((workspace / "eval_test.txt.json").read_text())["macro_f1"] >= 0.95

    def test_exclude_labels(self, workspace):
        out = workspace / "eval_x.txt"
        assert run(workspace, "evaluate", "--output", str(out), "--exclude-labels", "0") == 0
        record = json.loads((workspace / "eval_x.txt.json").read_text())
        assert record["excluded"] == ["0"]
        assert record["macro_f1"] == record["per_class"]["1"]["f1"]


class TestPredictAndDownstream:
    def test_predict_deterministic(self, workspace):
        a, b = workspace / "a.tsv", workspace / "b.tsv"
        assert run(workspace, "predict", "--output", str(a)) == 0
        assert run(workspace, "predict", "--output", str(b), "--parallelism", "3") == 0
        assert a.read_bytes() == b.read_bytes()
        preds = read_predictions(a)
        assert preds and {p.label for p in preds} == {"0", "1"}

    def test_predict_jsonl(self, workspace):
        out = workspace / "p.jsonl"
        assert run(workspace, "predict", "--output", str(out), "--format", "jsonl") == 0
        assert run(workspace, "predict", "--output", str(workspace / "p.tsv")) == 0
        assert read_predictions(out) == read_predictions(workspace / "p.tsv")

    def test_vicinity_mode_mismatch(self, workspace, capsys):
        rc = run(workspace, "predict", "--output", str(workspace / "m.tsv"), "--vicinity-mode", "mean")
        assert rc == 1 and "vicinity_mode" in capsys.readouterr().err
        assert not (workspace / "m.tsv").exists()

    def test_graph_empty(self, workspace):
        write_predictions([], workspace / "none.tsv")
        out = workspace / "g.dot"
        assert main(["graph", "--predictions", str(workspace / "none.tsv"), "--output", str(out)]) == 0
        assert out.read_text() == "digraph relations {\n}\n"

    def test_graph_records(self, workspace):
        assert run(workspace, "predict", "--output", str(workspace / "g_in.tsv")) == 0
        out = workspace / "g.tsv"
        assert main(["graph", "--predictions", str(workspace / "g_in.tsv"), "--output", str(out), "--format", "records"]) == 0
        kinds = {line.split("\t")[0] for line in out.read_text().splitlines()}
        assert kinds == {"node", "edge"}

    def test_timeline_and_enrich(self, workspace, tmp_path):
        doc = make_doc([["Lesion", "liver", "biopsy", "2020-01-02"]],
                       [("Problem", 0, 1), ("BodyPart", 1, 2), ("Procedure", 2, 3), ("Date", 3, 4)])
        c = doc.chunks
        preds = [RelationPrediction(CandidatePair.of("d0", a, b), "1", 0.9, (0.1, 0.9))
                 for a, b in ((c[1], c[0]), (c[2], c[3]))]
        write_predictions(preds, tmp_path / "p.tsv")
        assert main(["timeline", "--predictions", str(tmp_path / "p.tsv"), "--output", str(tmp_path / "t.tsv")]) == 0
        assert "2020-01-02\td0\tbiopsy" in (tmp_path / "t.tsv").read_text()

        (tmp_path / "emb.txt").write_text("lesion 1 0\nliver 0 1\n")
        (tmp_path / "codes.tsv").write_text("# ontology: ICD10\nL98.9\tlesion\nK76.9\tlesion liver\n")
        rc = main(["enrich", "--predictions", str(tmp_path / "p.tsv"), "--embeddings", str(tmp_path / "emb.txt"),
                   "--codes", str(tmp_path / "codes.tsv"), "--output", str(tmp_path / "e.tsv")])
        assert rc == 0
        rows = [l.split("\t") for l in (tmp_path / "e.tsv").read_text().splitlines()[1:]]
        lesion = next(r for r in rows if r[1] == "Lesion")
        assert lesion[3:6] == ["L98.9", "Lesion liver", "K76.9"]

    def test_benchmark(self, workspace):
        out = workspace / "bench.txt"
        assert run(workspace, "benchmark", "--output", str(out), "--repetitions", "3") == 0
        record = json.loads((workspace / "bench.txt.json").read_text())
        assert record["repetitions"] == 3 and len(record["timings"]) == 3
        assert "best of 3" in out.read_text()

    def test_bad_input_file(self, workspace, tmp_path, capsys):
        (tmp_path / "bad.conll").write_text("word B-Drug nsubj x\n")
        rc = run(workspace, "predict", "--input", str(tmp_path / "bad.conll"), "--output", str(tmp_path / "o.tsv"))
        assert rc == 1 and "error" in capsys.readouterr().err
        assert not (tmp_path / "o.tsv").exists() and not (tmp_path / "o.tsv.partial").exists()


def test_module_entry_point():
    import subprocess
    import sys
    res = subprocess.run([sys.executable, "-m", "clinrel", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "benchmark" in res.stdout
