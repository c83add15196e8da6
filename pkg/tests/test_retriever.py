from __future__ import annotations

import numpy as np
import pytest

from policyrag.corpus import corpus_from_records
from policyrag.encoder import EncoderParams, TokenEmbeddingMatrix, embed
from policyrag.retriever import (
    RetrieverError,
    build_index,
    load_index,
    maxsim,
    save_index,
    search,
)


def naive_maxsim(query_rows: np.ndarray, passage_rows: np.ndarray) -> float:
    """Independent double-loop oracle, no vectorization."""
    total = 0.0
    for t in range(query_rows.shape[0]):
        best = -np.inf
        for s in range(passage_rows.shape[0]):
            dot = 0.0
            for j in range(query_rows.shape[1]):
                dot += query_rows[t, j] * passage_rows[s, j]
            if dot > best:
                best = dot
        total += best
    return total


def _random_matrix(rng, tokens: int, dim: int) -> TokenEmbeddingMatrix:
    rows = rng.standard_normal((tokens, dim))
    rows /= np.linalg.norm(rows, axis=1, keepdims=True)
    return TokenEmbeddingMatrix(rows=rows, token_strings=tuple(f"t{i}" for i in range(tokens)))


class TestMaxSim:
    def test_single_identical_token(self):
        u = np.array([[1.0, 0.0]])
        p = np.array([[1.0, 0.0], [0.0, 1.0]])
        q_matrix = TokenEmbeddingMatrix(rows=u, token_strings=("u",))
        p_matrix = TokenEmbeddingMatrix(rows=p, token_strings=("u", "w"))
        assert maxsim(q_matrix, p_matrix) == pytest.approx(1.0)

    def test_committed_dot_product_table(self):
        # 2 query tokens x 3 passage tokens in d=2; dot products worked out below
        q = np.array([[1.0, 0.0], [0.0, 1.0]])
        p_raw = np.array([[0.6, 0.8], [1.0, 0.0], [-0.8, 0.6]])
        # dot table: row1 = [0.6, 1.0, -0.8], row2 = [0.8, 0.0, 0.6]
        # row maxima: 1.0 and 0.8 -> sum 1.8
        q_matrix = TokenEmbeddingMatrix(rows=q, token_strings=("a", "b"))
        p_matrix = TokenEmbeddingMatrix(rows=p_raw, token_strings=("x", "y", "z"))
        score = maxsim(q_matrix, p_matrix)
        assert score == pytest.approx(1.8, abs=1e-12)
        assert score == pytest.approx(naive_maxsim(q, p_raw), abs=1e-12)

    def test_self_similarity_equals_token_count(self):
        rng = np.random.default_rng(3)
        matrix = _random_matrix(rng, 5, 8)
        assert maxsim(matrix, matrix) == pytest.approx(5.0, abs=1e-6)

    def test_dimension_mismatch(self):
        rng = np.random.default_rng(0)
        with pytest.raises(RetrieverError, match="dimension mismatch"):
            maxsim(_random_matrix(rng, 2, 4), _random_matrix(rng, 2, 8))

    def test_oracle_equivalence_random(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            q = _random_matrix(rng, rng.integers(1, 9), 16)
            p = _random_matrix(rng, rng.integers(1, 9), 16)
            assert maxsim(q, p) == pytest.approx(naive_maxsim(q.rows, p.rows), abs=1e-9)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(5)
        q = _random_matrix(rng, 4, 8)
        p = _random_matrix(rng, 6, 8)
        shuffled = TokenEmbeddingMatrix(
            rows=p.rows[::-1].copy(), token_strings=tuple(reversed(p.token_strings))
        )
        assert maxsim(q, p) == pytest.approx(maxsim(q, shuffled), abs=1e-12)

    def test_appending_query_token_bounds(self):
        rng = np.random.default_rng(9)
        q = _random_matrix(rng, 3, 8)
        p = _random_matrix(rng, 5, 8)
        base = maxsim(q, p)
        extra = rng.standard_normal(8)
        extra /= np.linalg.norm(extra)
        grown = TokenEmbeddingMatrix(
            rows=np.vstack([q.rows, extra]), token_strings=q.token_strings + ("new",)
        )
        assert maxsim(grown, p) >= base - 1.0

    def test_verbatim_token_strictly_increases(self):
        rng = np.random.default_rng(10)
        q = _random_matrix(rng, 3, 8)
        p = _random_matrix(rng, 5, 8)
        base = maxsim(q, p)
        verbatim = TokenEmbeddingMatrix(
            rows=np.vstack([q.rows, p.rows[2]]), token_strings=q.token_strings + ("v",)
        )
        assert maxsim(verbatim, p) > base


class TestBuildIndex:
    def test_fixture_has_seven_entries(self, fixture_index):
        assert len(fixture_index) == 7
        assert fixture_index.skipped_chunk_ids == ()

    def test_single_chunk_selfsearch(self, default_params):
        corpus = corpus_from_records(
            [
                {
                    "chunk_id": "only", "doc_id": "d", "segment_index": 0,
                    "text": "quantum liability insurance mandates",
                    "document_name": "Doc", "authority": "A", "doc_type": "law",
                    "dates": [],
                }
            ]
        )
        index = build_index(corpus, default_params)
        assert len(index) == 1
        ranked = search(index, "quantum liability insurance mandates", k=1)
        assert ranked.hits[0][0] == "only"

    def test_rebuild_same_fingerprint(self, fixture_corpus, default_params):
        first = build_index(fixture_corpus, default_params)
        second = build_index(fixture_corpus, default_params)
        assert first.encoder_fingerprint == second.encoder_fingerprint


class TestSearch:
    def test_k_one_on_single_entry(self, default_params):
        corpus = corpus_from_records(
            [
                {
                    "chunk_id": "c", "doc_id": "d", "segment_index": 0,
                    "text": "registry obligations", "document_name": "Doc",
                    "authority": "A", "doc_type": "law", "dates": [],
                }
            ]
        )
        index = build_index(corpus, default_params)
        assert search(index, "registry", k=1).hits[0][0] == "c"

    def test_rare_token_ranks_first(self, default_params):
        records = []
        for i in range(10):
            text = "standard compliance language for every segment"
            if i == 3:
                text += " zeppelin"
            records.append(
                {
                    "chunk_id": f"segment_0_{i}", "doc_id": "d", "segment_index": i,
                    "text": text, "document_name": "Doc", "authority": "A",
                    "doc_type": "law", "dates": [],
                }
            )
        corpus = corpus_from_records(records)
        index = build_index(corpus, default_params)
        ranked = search(index, "zeppelin compliance", k=10)
        assert ranked.hits[0][0] == "segment_0_3"
        # brute-force verification of the full ordering
        from policyrag.encoder import embed as embed_fn
        from tests.test_retriever import naive_maxsim as oracle

        q = embed_fn("zeppelin compliance", default_params)
        expected = sorted(
            (
                (cid, oracle(q.rows, entry.matrix.rows))
                for cid, entry in index.entries.items()
            ),
            key=lambda pair: (-pair[1], pair[0]),
        )
        assert [cid for cid, _ in ranked.hits] == [cid for cid, _ in expected]

    def test_identical_texts_tie_break_by_chunk_id(self, default_params):
        shared = {
            "doc_id": "d", "text": "identical tie breaking text",
            "document_name": "Doc", "authority": "A", "doc_type": "law", "dates": [],
        }
        corpus = corpus_from_records(
            [
                {"chunk_id": "b_chunk", "segment_index": 1, **shared},
                {"chunk_id": "a_chunk", "segment_index": 0, **shared},
            ]
        )
        index = build_index(corpus, default_params)
        ranked = search(index, "identical tie breaking text", k=2)
        assert [cid for cid, _ in ranked.hits] == ["a_chunk", "b_chunk"]
        assert ranked.hits[0][1] == pytest.approx(ranked.hits[1][1])

    def test_k_larger_than_index_returns_all(self, fixture_index):
        ranked = search(fixture_index, "transparency", k=50)
        assert len(ranked.hits) == 7

    def test_prefix_property(self, fixture_index):
        small = search(fixture_index, "model registry transparency", k=3)
        large = search(fixture_index, "model registry transparency", k=7)
        assert large.chunk_ids()[:3] == small.chunk_ids()

    def test_scores_non_increasing(self, fixture_index):
        ranked = search(fixture_index, "audit penalties", k=7)
        scores = [score for _, score in ranked.hits]
        assert scores == sorted(scores, reverse=True)

    def test_empty_query_errors(self, fixture_index):
        with pytest.raises(RetrieverError, match="query"):
            search(fixture_index, "!!!", k=3)

    def test_bad_k_errors(self, fixture_index):
        with pytest.raises(RetrieverError, match="k must be"):
            search(fixture_index, "transparency", k=0)


class TestPersistence:
    def test_save_load_roundtrip_preserves_search(self, tmp_path, fixture_index):
        path = tmp_path / "index.bin"
        save_index(fixture_index, path)
        loaded = load_index(path)
        assert loaded.encoder_fingerprint == fixture_index.encoder_fingerprint
        assert set(loaded.entries) == set(fixture_index.entries)
        before = search(fixture_index, "transparency research extract", k=7)
        after = search(loaded, "transparency research extract", k=7)
        assert before.hits == after.hits

    def test_load_rejects_garbage(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"garbage here")
        with pytest.raises(RetrieverError, match="not an index"):
            load_index(path)
