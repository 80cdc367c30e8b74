# %% [markdown]
# # The command line, end to end
#
# Write a small training CSV, embeddings, a schema and a run config, then
# drive every step through `clinrel.cli.main`, exactly as `clinrel ...` would.

# %%
import json
from pathlib import Path
from tempfile import mkdtemp

from clinrel.cli import main
from clinrel.corpus import write_conll, write_training_csv
from clinrel.embeddings import save_text_embeddings
from clinrel.synthetic import planted_corpus, training_rows

work = Path(mkdtemp(prefix="clinrel-"))
corpus = planted_corpus(300, seed=5, dim=8, window=3)
write_training_csv(training_rows(corpus), work / "train.csv")
save_text_embeddings(corpus.table, work / "vectors.txt")
write_conll(planted_corpus(20, seed=6, dim=8, window=3).docs, work / "notes.conll")
(work / "schema.txt").write_text("Drug -> Reaction\nlabels: 0, 1\n")
(work / "run.json").write_text(json.dumps({
    "paths": {"train_csv": "train.csv", "embeddings": "vectors.txt", "schema": "schema.txt",
              "model": "ade.bin", "input": "notes.conll"},
    "features": {"vicinity_window": 3},
    "train": {"epochs": 20, "learning_rate": 0.003},
    "seed": 1,
}, indent=2))
print(work)

# %%
cfg = ["--config", str(work / "run.json")]
main(["train", *cfg])
print((work / "ade.bin.log").read_text().splitlines()[-1])

# %%
main(["predict", *cfg, "--output", str(work / "predictions.tsv")])
main(["graph", *cfg, "--predictions", str(work / "predictions.tsv"), "--output", str(work / "graph.dot")])
main(["benchmark", *cfg, "--output", str(work / "bench.txt"), "--repetitions", "3"])

# %%
# A broken config fails before anything is written, listing every problem.
code = main(["predict", *cfg, "--model", str(work / "missing.bin"), "--parallelism", "0"])
print("exit code", code)
