# %% [markdown]
# # What the classifier sees
#
# Every candidate pair becomes one flat vector: cosine similarity of the two
# spans, a scaled syntactic distance, embeddings along the dependency path,
# both span embeddings, and the tokens around each span.

# %%
import numpy as np

from clinrel.embeddings import cosine_similarity, span_embedding, vicinity_embeddings
from clinrel.features import DocumentFeaturizer, FeatureConfig, build_features, describe_layout, feature_length
from clinrel.pipeline import generate_pairs
from clinrel.synthetic import planted_corpus

corpus = planted_corpus(3, seed=4, dim=8, window=4)
doc = corpus.docs[0]
print(doc.text)
print([(c.entity_type, c.text) for c in doc.chunks])

# %% [markdown]
# Default sizes: 100-dimensional embeddings, 50 tokens each side, paths of up to 5 nodes.

# %%
print(feature_length(FeatureConfig(embed_dim=100)), "features in flatten mode")
print(feature_length(FeatureConfig(embed_dim=100, vicinity_mode="mean")), "features in mean mode")

cfg = FeatureConfig(embed_dim=8, vicinity_window=4, max_path_len=3)
for seg in describe_layout(cfg):
    print(f"{seg.name:10s} offset {seg.offset:4d}  length {seg.length}")

# %%
pair = generate_pairs(doc, corpus.schema)[0]
fv = build_features(pair, doc, corpus.table, cfg)
print("similarity", fv.segment("similarity"), "distance", fv.segment("distance"))
a = span_embedding(corpus.table, doc, pair.chunk1)
b = span_embedding(corpus.table, doc, pair.chunk2)
print("check", cosine_similarity(a, b))

# %% [markdown]
# The left window is ordered nearest-last and the right window nearest-first;
# slots past the document edge stay zero.

# %%
left_right = vicinity_embeddings(corpus.table, doc, pair.chunk2, 4)
print(np.count_nonzero(np.abs(left_right).sum(axis=1)), "of", len(left_right), "slots filled")

# %% [markdown]
# Per-document featurization reuses token lookups across pairs and gives the same bits.

# %%
pairs = generate_pairs(doc, corpus.schema)
shared = DocumentFeaturizer(doc, corpus.table, cfg).matrix(pairs)
naive = np.vstack([build_features(p, doc, corpus.table, cfg).values for p in pairs])
print(shared.shape, np.array_equal(shared, naive))
