"""Embedding loading, cosine similarity, OOV filling, and the binary cache."""
import math

import numpy as np
import pytest

from ginopic.embedding import (
    EmbeddingMatrix,
    SimilarityCache,
    cosine_similarity,
    load_embeddings,
    save_binary,
)
from ginopic.errors import DataError

from conftest import make_embeddings, make_vocabulary


class TestCosine:
    def test_hand_values(self):
        assert cosine_similarity([1, 0], [0, 1]) == 0.0
        assert cosine_similarity([1, 0], [1, 1]) == pytest.approx(1 / math.sqrt(2))
        assert cosine_similarity([2, 0], [1, 0]) == 1.0
        assert cosine_similarity([1, 0], [-1, 0]) == -1.0

    def test_zero_norm_scores_zero(self):
        assert cosine_similarity([0, 0], [1, 2]) == 0.0
        assert cosine_similarity([0, 0], [0, 0]) == 0.0

    def test_clamped_to_unit_interval(self):
        v = np.full(50, 0.1, dtype=np.float32)
        c = cosine_similarity(v, v)
        assert -1.0 <= c <= 1.0
        assert c == 1.0

    def test_scale_invariant(self):
        u, v = np.array([0.3, -0.7, 0.2]), np.array([1.0, 0.1, -0.4])
        assert cosine_similarity(u, v) == pytest.approx(
            cosine_similarity(1000 * u, 1e-3 * v), abs=1e-12
        )


class TestTextLoading:
    def _write(self, path, lines):
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    def test_parses_and_aligns_rows(self, tmp_path):
        vocab = make_vocabulary(["cat", "dog"])
        path = tmp_path / "emb.txt"
        self._write(path, ["dog 1.0 2.0", "cat 3.0 4.0", "bird 9.0 9.0"])
        emb = load_embeddings(path, vocab)
        assert emb.dim == 2
        assert emb.vector("cat").tolist() == [3.0, 4.0]
        assert emb.vector("dog").tolist() == [1.0, 2.0]
        assert emb.oov_count == 0

    def test_oov_rows_filled_deterministically(self, tmp_path):
        vocab = make_vocabulary(["cat", "dog"])
        path = tmp_path / "emb.txt"
        self._write(path, ["cat 1.0 0.0 0.0"])
        a = load_embeddings(path, vocab, seed=3)
        b = load_embeddings(path, vocab, seed=3)
        assert a.oov_count == 1
        assert bool(a.oov_mask[vocab.id_of("dog")])
        assert np.array_equal(a.vectors, b.vectors)
        assert np.all(np.abs(a.vector("dog")) <= 0.1)

    def test_oov_fill_depends_on_word_not_row(self, tmp_path):
        # the same missing word gets the same vector in different vocabularies
        path = tmp_path / "emb.txt"
        self._write(path, ["cat 1.0 0.0"])
        v1 = make_vocabulary(["cat", "dog"])
        v2 = make_vocabulary(["dog", "cat"])
        e1 = load_embeddings(path, v1, seed=0)
        e2 = load_embeddings(path, v2, seed=0)
        assert np.array_equal(e1.vector("dog"), e2.vector("dog"))

    def test_dimension_mismatch_reports_line(self, tmp_path):
        path = tmp_path / "emb.txt"
        self._write(path, ["cat 1.0 2.0", "dog 3.0"])
        with pytest.raises(DataError, match="line 2"):
            load_embeddings(path, make_vocabulary(["cat", "dog"]))

    def test_malformed_float_reports_line(self, tmp_path):
        path = tmp_path / "emb.txt"
        self._write(path, ["cat 1.0 oops"])
        with pytest.raises(DataError, match="line 1"):
            load_embeddings(path, make_vocabulary(["cat"]))

    def test_no_overlap_rejected(self, tmp_path):
        path = tmp_path / "emb.txt"
        self._write(path, ["bird 1.0 2.0"])
        with pytest.raises(DataError, match="shares no words"):
            load_embeddings(path, make_vocabulary(["cat", "dog"]))

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            load_embeddings(tmp_path / "nope.txt", make_vocabulary(["cat"]))


class TestBinaryCache:
    def test_round_trip_bitwise(self, tmp_path):
        vocab = make_vocabulary(["cat", "dog", "eel"])
        gen = np.random.default_rng(0)
        emb = make_embeddings(vocab, gen.normal(size=(3, 5)))
        path = tmp_path / "emb.bin"
        save_binary(emb, path)
        loaded = load_embeddings(path, vocab)
        assert np.array_equal(loaded.vectors, emb.vectors)
        assert np.array_equal(loaded.oov_mask, emb.oov_mask)
        assert loaded.sha256 == emb.sha256

    def test_vocabulary_mismatch_rejected(self, tmp_path):
        vocab = make_vocabulary(["cat", "dog"])
        emb = make_embeddings(vocab, np.eye(2))
        path = tmp_path / "emb.bin"
        save_binary(emb, path)
        other = make_vocabulary(["cat", "eel"])
        with pytest.raises(DataError):
            load_embeddings(path, other)

    def test_truncated_cache(self, tmp_path):
        vocab = make_vocabulary(["cat", "dog"])
        emb = make_embeddings(vocab, np.eye(2))
        path = tmp_path / "emb.bin"
        save_binary(emb, path)
        blob = path.read_bytes()
        path.write_bytes(blob[:-3])
        with pytest.raises(DataError):
            load_embeddings(path, vocab)

    def test_matrix_shape_validation(self):
        vocab = make_vocabulary(["cat", "dog"])
        with pytest.raises(DataError):
            EmbeddingMatrix(
                vectors=np.zeros((3, 2)), oov_mask=np.zeros(3, dtype=bool),
                vocabulary=vocab, seed=0,
            )


class TestSimilarityCache:
    def test_matches_direct_cosine_bitwise(self):
        vocab = make_vocabulary([f"w{i}" for i in range(6)])
        gen = np.random.default_rng(1)
        emb = make_embeddings(vocab, gen.normal(size=(6, 4)))
        cache = SimilarityCache(emb)
        for i in range(6):
            for j in range(6):
                direct = cosine_similarity(emb.vectors[i], emb.vectors[j])
                assert cache.pair(i, j) == direct  # exact float equality

    def test_symmetric(self):
        vocab = make_vocabulary(["aa", "bb", "cc"])
        emb = make_embeddings(vocab, np.random.default_rng(2).normal(size=(3, 3)))
        cache = SimilarityCache(emb)
        assert cache.pair(0, 2) == cache.pair(2, 0)

    def test_zero_row_handled(self):
        vocab = make_vocabulary(["aa", "bb"])
        emb = make_embeddings(vocab, [[0.0, 0.0], [1.0, 2.0]])
        cache = SimilarityCache(emb)
        assert cache.pair(0, 1) == 0.0
