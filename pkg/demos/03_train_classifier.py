# %% [markdown]
# # Training the relation classifier
#
# The planted corpus hides a simple rule: a Reaction is caused by the Drug in
# its sentence exactly when a marker token sits right before it and the two are
# close in the parse. The network has to find that rule in the features.

# %%
import time
from pathlib import Path
from tempfile import TemporaryDirectory

import numpy as np

from clinrel.evalbench import evaluate
from clinrel.features import FeatureConfig
from clinrel.fcnn import TrainConfig, load_model, predict_proba, save_model, train
from clinrel.pipeline import PipelineConfig, training_examples
from clinrel.synthetic import planted_corpus, split_docs

corpus = planted_corpus(400, seed=0, dim=16, window=5)
fc = FeatureConfig(embed_dim=16, vicinity_window=5)
config = PipelineConfig(corpus.schema, fc)
train_docs, test_docs = split_docs(corpus.docs, 0.2, seed=0)
train_ex = training_examples(train_docs, corpus.gold, config, corpus.table)
test_ex = training_examples(test_docs, corpus.gold, config, corpus.table)
print(len(train_ex), "training pairs,", sum(e.label == "1" for e in train_ex), "positive")

# %%
# Defaults: two hidden layers of 200, dropout 0.5, batch 64, Adam at 3e-4 with decay 0.005.
t0 = time.perf_counter()
model = train(train_ex, ("0", "1"), fc, TrainConfig(epochs=30))
print(f"trained in {time.perf_counter() - t0:.1f}s")
for h in model.history[::5]:
    print(f"epoch {h['epoch']:2d}  loss {h['loss']:.4f}  full-set loss {h['eval_loss']:.4f}")

# %%
report = evaluate(model, test_ex)
print(report.to_table())

# %% [markdown]
# Saved models carry their feature layout, so a loaded model refuses inputs
# built with a different configuration.

# %%
with TemporaryDirectory() as tmp:
    path = Path(tmp) / "ade.bin"
    save_model(model, path)
    again = load_model(path)
    X = np.vstack([e.features.values for e in test_ex[:50]])
    print(path.stat().st_size, "bytes;", np.array_equal(predict_proba(model, X), predict_proba(again, X)))
    print(again.feature_config == fc)
