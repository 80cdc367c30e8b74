# %% [markdown]
# # Chunks, sentences and dependency distance
#
# A note arrives as tokens with BIO tags. Chunks are contiguous tagged spans;
# a stray `I-` tag opens a new chunk rather than being dropped.

# %%
from clinrel.corpus import build_document, chunks_from_bio, chunks_to_bio, parse_conll
from clinrel.syntax import head_token, prune_pairs, syntactic_distance
from clinrel.pipeline import RelationSchema, generate_pairs

words = ["Severe", "pain", "in", "the", "left", "chest", "since", "Monday"]
tags = ["B-Symptom", "I-Symptom", "O", "O", "B-Direction", "B-BodyPart", "O", "B-Date"]
doc = build_document("note1", [words])
chunks = chunks_from_bio(doc.tokens, tags)
for c in chunks:
    print(f"{c.entity_type:10s} tokens [{c.start}, {c.end})  {c.text!r}  chars {c.char_begin}-{c.char_end}")

# %%
# Writing the chunks back gives the original tags.
print(chunks_to_bio(len(words), chunks) == tags)

# %% [markdown]
# ## Reading CoNLL with parses
#
# Columns are `token tag deprel head`, with 1-based heads and 0 for the root.

# %%
conll = """\
Severe B-Symptom amod 2
pain I-Symptom ROOT 0
in O case 6
the O det 6
left B-Direction amod 6
chest B-BodyPart nmod 2
since O case 8
Monday B-Date obl 2
"""
(doc,) = parse_conll(conll.splitlines(), "inline")
tree = doc.trees[0]
print("heads (0-based, -1 = root):", tree.heads)

# %% [markdown]
# The head of a chunk is its last token whose parent lies outside the chunk.
# Distance between two chunks counts edges between their heads.

# %%
symptom, direction, body, date = doc.chunks
print("symptom head:", doc.tokens[head_token(symptom, tree)].text)
for other in (direction, body, date):
    print(f"pain -> {other.text:7s}", syntactic_distance(tree, symptom, other))

# %% [markdown]
# Pruning keeps only pairs within a distance budget before any features are built.

# %%
schema = RelationSchema((("BodyPart", "Symptom"), ("Direction", "BodyPart"), ("Symptom", "Date")))
pairs = generate_pairs(doc, schema)
print(len(pairs), "schema pairs")
for p in prune_pairs(pairs, doc, max_dist=1):
    print("kept", p.chunk1.text, "->", p.chunk2.text)
