# %% [markdown]
# # From predictions to a graph and a timeline
#
# Positive predictions become edges. Body parts absorb their sub-parts and
# laterality, and dated findings line up chronologically.

# %%
from clinrel.corpus import CandidatePair, EntityChunk, build_document
from clinrel.downstream import build_graph, build_timeline, export_graph, merge_body_parts
from clinrel.pipeline import RelationPrediction


def note(doc_id, words, spans):
    doc = build_document(doc_id, [words])
    chunks = [EntityChunk(t, s, e, " ".join(words[s:e]), 0, doc.tokens[s].char_begin, doc.tokens[e - 1].char_end)
              for t, s, e in spans]
    return doc.with_chunks(chunks)


def positive(doc, i, j, p=0.93):
    return RelationPrediction(CandidatePair.of(doc.id, doc.chunks[i], doc.chunks[j]), "1", p, (1 - p, p))


ct = note("n1", ["CT", "03/14/2021", "shows", "nodule", "in", "left", "lung", "upper", "lobe"],
          [("Procedure", 0, 1), ("Date", 1, 2), ("Problem", 3, 4), ("Direction", 5, 6),
           ("BodyPart", 6, 7), ("SubPart", 7, 9)])
preds = [positive(ct, 0, 1), positive(ct, 0, 2), positive(ct, 4, 2), positive(ct, 4, 3), positive(ct, 4, 5)]

# %%
graph = build_graph(preds)
print(len(graph.nodes), "nodes,", len(graph.edges), "edges before merging")
merged = merge_body_parts(graph)
print([n.text for n in merged.nodes.values()])
export_graph(merged, "/dev/stdout")

# %%
follow_up = note("n2", ["Biopsy", "on", "Jan", "5", ",", "2021", ";", "echo", "unchanged"],
                 [("Procedure", 0, 1), ("Date", 2, 6), ("Test", 7, 8), ("Finding", 8, 9)])
timeline = build_timeline(preds + [positive(follow_up, 0, 1), positive(follow_up, 2, 3)],
                          anchor_types=("Procedure", "Test"))
for e in timeline.events:
    print(e.date, e.doc_id, e.anchor.text, [a.text for a in e.attachments])
print("undated:", [a.text for _, a in timeline.undated])
