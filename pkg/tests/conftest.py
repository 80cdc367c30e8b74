import numpy as np
import pytest

from clinrel.corpus import build_document, EntityChunk
from clinrel.embeddings import EmbeddingTable


def make_doc(sentences, chunks=(), trees=None, doc_id="d0"):
    """Document from word lists; chunks given as (type, start, end) document token ranges."""
    doc = build_document(doc_id, sentences)
    out = []
    for etype, s, e in chunks:
        toks = doc.tokens[s:e]
        out.append(EntityChunk(etype, s, e, " ".join(t.text for t in toks), toks[0].sentence_index,
                               toks[0].char_begin, toks[-1].char_end))
    return doc.with_chunks(out).with_trees(trees)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def toy_table():
    return EmbeddingTable({
        "chest": [1.0, 0.0, 0.0],
        "pain": [0.0, 1.0, 0.0],
        "left": [0.0, 0.0, 1.0],
        "lung": [1.0, 1.0, 0.0],
        "of": [0.5, 0.5, 0.5],
    })


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
