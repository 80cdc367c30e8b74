import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from clinrel.corpus import FormatError
from clinrel.embeddings import (
    EmbeddingTable,
    cosine_similarity,
    embed_text,
    load_text_embeddings,
    lookup,
    save_text_embeddings,
    span_embedding,
    vicinity_embeddings,
)

from conftest import make_doc


class TestLoad:
    def test_plain(self, tmp_path):
        p = tmp_path / "e.txt"
        p.write_text("chest 1 0 0\npain 0 1 0\n")
        t = load_text_embeddings(p)
        assert t.dim == 3 and len(t) == 2

    def test_dim_mismatch(self, tmp_path):
        p = tmp_path / "e.txt"
        p.write_text("chest 1 0 0\npain 0 1\n")
        with pytest.raises(FormatError, match="dimension mismatch line 2"):
            load_text_embeddings(p)

    def test_header(self, tmp_path):
        a, b = tmp_path / "a.txt", tmp_path / "b.txt"
        a.write_text("chest 1 0 0\npain 0 1 0\n")
        b.write_text("2 3\nchest 1 0 0\npain 0 1 0\n")
        ta, tb = load_text_embeddings(a), load_text_embeddings(b)
        assert ta.index == tb.index
        np.testing.assert_array_equal(ta.matrix, tb.matrix)

    def test_save_roundtrip(self, tmp_path, toy_table):
        p = tmp_path / "e.txt"
        save_text_embeddings(toy_table, p)
        t = load_text_embeddings(p)
        np.testing.assert_array_equal(t.matrix, toy_table.matrix)


class TestLookup:
    def test_known(self, toy_table):
        np.testing.assert_array_equal(lookup(toy_table, "chest"), [1, 0, 0])

    def test_unknown(self, toy_table):
        np.testing.assert_array_equal(lookup(toy_table, "zzz"), [0, 0, 0])

    def test_case(self, toy_table):
        np.testing.assert_array_equal(lookup(toy_table, "Chest"), lookup(toy_table, "chest"))

    def test_table_is_read_only(self, toy_table):
        with pytest.raises(ValueError):
            toy_table.matrix[0, 0] = 5.0


class TestSpan:
    def test_single(self, toy_table):
        doc = make_doc([["chest", "pain"]], [("BodyPart", 0, 1)])
        np.testing.assert_array_equal(span_embedding(toy_table, doc, doc.chunks[0]), [1, 0, 0])

    def test_mean(self, toy_table):
        doc = make_doc([["chest", "pain"]], [("X", 0, 2)])
        np.testing.assert_array_equal(span_embedding(toy_table, doc, doc.chunks[0]), [0.5, 0.5, 0])

    def test_oov(self, toy_table):
        doc = make_doc([["qq", "rr"]], [("X", 0, 2)])
        np.testing.assert_array_equal(span_embedding(toy_table, doc, doc.chunks[0]), [0, 0, 0])


class TestVicinity:
    def test_document_start(self, toy_table):
        doc = make_doc([["chest", "pain", "of"]], [("X", 0, 1)])
        vecs = vicinity_embeddings(toy_table, doc, doc.chunks[0], 2)
        assert len(vecs) == 4
        assert not vecs[0].any() and not vecs[1].any()
        np.testing.assert_array_equal(vecs[2], [0, 1, 0])
        np.testing.assert_array_equal(vecs[3], [0.5, 0.5, 0.5])

    def test_window_zero(self, toy_table):
        doc = make_doc([["chest"]], [("X", 0, 1)])
        assert vicinity_embeddings(toy_table, doc, doc.chunks[0], 0) == []

    def test_five_token_doc(self, toy_table):
        doc = make_doc([["of", "chest", "lung", "pain", "left"]], [("X", 2, 3)])
        vecs = vicinity_embeddings(toy_table, doc, doc.chunks[0], 1)
        np.testing.assert_array_equal(np.array(vecs), [[1, 0, 0], [0, 1, 0]])

    def test_nearest_ordering(self, toy_table):
        doc = make_doc([["of", "chest", "lung", "pain", "left"]], [("X", 2, 3)])
        vecs = vicinity_embeddings(toy_table, doc, doc.chunks[0], 3)
        # left slots end at the nearest token, right slots start at it
        np.testing.assert_array_equal(np.array(vecs), [[0, 0, 0], [.5, .5, .5], [1, 0, 0],
                                                       [0, 1, 0], [0, 0, 1], [0, 0, 0]])

    @given(st.integers(0, 6), st.integers(1, 8), st.data())
    def test_length_property(self, toy_table, window, n, data):
        s = data.draw(st.integers(0, n - 1))
        e = data.draw(st.integers(s + 1, n))
        doc = make_doc([["chest"] * n], [("X", s, e)])
        vecs = vicinity_embeddings(toy_table, doc, doc.chunks[0], window)
        assert len(vecs) == 2 * window and all(v.shape == (3,) for v in vecs)


finite = arrays(np.float64, 4, elements=st.floats(-1e6, 1e6))


class TestCosine:
    def test_self(self):
        assert cosine_similarity([0.3, -2.0, 5.0], [0.3, -2.0, 5.0]) == pytest.approx(1.0, abs=1e-9)

    def test_orthogonal(self):
        assert cosine_similarity([1, 0], [0, 1]) == 0.0

    def test_zero(self):
        assert cosine_similarity([0, 0], [3, 4]) == 0.0

    def test_dim_mismatch(self):
        with pytest.raises(ValueError):
            cosine_similarity([1, 0], [1, 0, 0])

    @given(finite, finite, st.floats(1e-3, 1e3))
    def test_properties(self, u, v, scale):
        c = cosine_similarity(u, v)
        assert -1 - 1e-9 <= c <= 1 + 1e-9
        assert c == pytest.approx(cosine_similarity(v, u), abs=1e-12)
        assert cosine_similarity(u * scale, v) == pytest.approx(c, abs=1e-9)


def test_embed_text(toy_table):
    np.testing.assert_allclose(embed_text(toy_table, "Chest pain"), [0.5, 0.5, 0])
    assert not embed_text(toy_table, "").any()


def test_empty_table_needs_dim():
    with pytest.raises(ValueError):
        EmbeddingTable({})
    assert EmbeddingTable({}, dim=4).dim == 4
