# %% [markdown]
# # Throughput
#
# Extraction cost grows with the number of candidate pairs, so ten times the
# notes should take roughly ten times as long.

# %%
import numpy as np

from clinrel.evalbench import benchmark_throughput
from clinrel.features import FeatureConfig, feature_length
from clinrel.fcnn import init_model
from clinrel.pipeline import PipelineConfig
from clinrel.synthetic import dense_corpus, planted_corpus

corpus = planted_corpus(1000, seed=1, dim=16, window=5)
fc = FeatureConfig(embed_dim=16, vicinity_window=5)
model = init_model(feature_length(fc), ("0", "1"), (200, 200), fc, np.random.default_rng(0))
config = PipelineConfig(corpus.schema, fc)

for n in (100, 1000):
    print(benchmark_throughput(corpus.docs[:n], model, config, corpus.table, repetitions=3).to_table())

# %% [markdown]
# Pruning matters most in crowded sentences, where pairs grow quadratically.

# %%
dense = dense_corpus(50, entities_per_sentence=12, seed=2, dim=16)
dfc = FeatureConfig(embed_dim=16, vicinity_window=5)
dmodel = init_model(feature_length(dfc), ("0", "1"), (200, 200), dfc, np.random.default_rng(0))
for limit in (10**6, 3):
    rep = benchmark_throughput(dense.docs, dmodel, PipelineConfig(dense.schema, dfc, limit), dense.table, 1)
    print(f"max distance {limit}: {rep.pair_count} pairs in {rep.total_seconds:.2f}s")
