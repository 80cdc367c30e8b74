# %% [markdown]
# # Enriched chunks resolve to more specific codes
#
# "Lesion" alone matches a generic skin code. Adding the related body part
# turns it into "Lesion liver", whose nearest description is a liver code.

# %%
from clinrel.corpus import CandidatePair, EntityChunk
from clinrel.downstream import build_code_dictionary, enrich_predictions, resolve
from clinrel.embeddings import EmbeddingTable
from clinrel.pipeline import RelationPrediction

table = EmbeddingTable({
    "lesion": [1.0, 0.0, 0.0],
    "liver": [0.0, 1.0, 0.0],
    "skin": [0.2, 0.0, 1.0],
    "disease": [0.3, 0.3, 0.3],
})
codes = build_code_dictionary(
    [("L98.9", "lesion"), ("K76.9", "lesion liver"), ("L98.8", "skin disease")], table, "ICD10")

lesion = EntityChunk("Problem", 0, 1, "Lesion", 0, 0, 6)
liver = EntityChunk("BodyPart", 3, 4, "liver", 0, 14, 19)
pred = RelationPrediction(CandidatePair.of("n1", liver, lesion), "1", 0.97, (0.03, 0.97))

# %%
for doc_id, anchor, enriched in enrich_predictions([pred]):
    for query in (anchor.text, enriched):
        print(f"{query:14s}", resolve(query, table, codes, k=2))
