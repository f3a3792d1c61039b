"""Tests for file loading, bigram+ features, and the combined recall score."""

import json

import numpy as np
import pytest

from prefrank.domain import CandidatePool, ValidationError
from prefrank.ingest import (
    BigramPlusConfig,
    GoldScorerConfig,
    ParseError,
    combine_rcomb,
    extract_bigram_plus,
    gold_score_rcomb,
    load_gold,
    load_pool,
    load_priors,
    save_pool,
)


def _write_lines(path, records):
    path.write_text("".join(json.dumps(r) + "\n" for r in records), encoding="utf-8")


class TestLoadPool:
    def test_three_line_pool(self, tmp_path):
        p = tmp_path / "pool.jsonl"
        _write_lines(
            p,
            [
                {"id": 0, "features": [1.0, 2.0], "text": "x"},
                {"id": 1, "features": [3.0, 4.0]},
                {"id": 2, "features": [5.0, 6.0]},
            ],
        )
        pool = load_pool(p)
        assert pool.size == 3 and pool.feature_dim == 2
        np.testing.assert_array_equal(pool.feature_matrix(), [[1, 2], [3, 4], [5, 6]])
        assert pool.texts() == ["x", None, None]

    def test_empty_file_rejected(self, tmp_path):
        p = tmp_path / "pool.jsonl"
        p.write_text("")
        with pytest.raises(ValidationError, match="pool must contain ≥ 2 candidates"):
            load_pool(p)

    def test_dimension_mismatch_names_line(self, tmp_path):
        p = tmp_path / "pool.jsonl"
        _write_lines(
            p,
            [
                {"id": 0, "features": [1.0, 2.0]},
                {"id": 1, "features": [1.0, 2.0, 3.0]},
            ],
        )
        with pytest.raises(ParseError, match="line 2"):
            load_pool(p)

    def test_malformed_json_names_line(self, tmp_path):
        p = tmp_path / "pool.jsonl"
        p.write_text('{"id": 0, "features": [1.0]}\n{oops\n')
        with pytest.raises(ParseError, match="line 2"):
            load_pool(p)

    def test_missing_ids_renumbered_in_file_order(self, tmp_path):
        p = tmp_path / "pool.jsonl"
        _write_lines(p, [{"features": [9.0]}, {"features": [7.0]}])
        pool = load_pool(p)
        assert [c.id for c in pool.candidates] == [0, 1]
        np.testing.assert_array_equal(pool.feature_matrix().ravel(), [9.0, 7.0])

    def test_explicit_ids_ordered_by_id(self, tmp_path):
        p = tmp_path / "pool.jsonl"
        _write_lines(p, [{"id": 1, "features": [7.0]}, {"id": 0, "features": [9.0]}])
        pool = load_pool(p)
        np.testing.assert_array_equal(pool.feature_matrix().ravel(), [9.0, 7.0])

    def test_partial_ids_rejected(self, tmp_path):
        p = tmp_path / "pool.jsonl"
        _write_lines(p, [{"id": 0, "features": [1.0]}, {"features": [2.0]}])
        with pytest.raises(ParseError, match="line 2"):
            load_pool(p)

    def test_non_dense_ids_rejected(self, tmp_path):
        p = tmp_path / "pool.jsonl"
        _write_lines(p, [{"id": 0, "features": [1.0]}, {"id": 5, "features": [2.0]}])
        with pytest.raises(ValidationError, match="dense"):
            load_pool(p)

    def test_save_load_save_is_byte_stable(self, tmp_path):
        p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        _write_lines(
            p1,
            [
                {"id": 0, "features": [0.1, 2.0], "text": "alpha"},
                {"id": 1, "features": [1.0 / 3.0, -5.5]},
            ],
        )
        pool = load_pool(p1)
        save_pool(pool, p2)
        again = load_pool(p2)
        p3 = tmp_path / "c.jsonl"
        save_pool(again, p3)
        assert p2.read_bytes() == p3.read_bytes()


class TestLoadScores:
    def _pool(self, tmp_path, n=2):
        p = tmp_path / "pool.jsonl"
        _write_lines(p, [{"id": i, "features": [float(i)]} for i in range(n)])
        return load_pool(p)

    def test_priors_aligned_to_ids(self, tmp_path):
        pool = self._pool(tmp_path)
        f = tmp_path / "priors.jsonl"
        _write_lines(f, [{"id": 0, "score": 1.0}, {"id": 1, "score": 2.0}])
        priors = load_priors(f, pool)
        np.testing.assert_array_equal(priors.mu, [1.0, 2.0])

    def test_missing_id_listed(self, tmp_path):
        pool = self._pool(tmp_path)
        f = tmp_path / "priors.jsonl"
        _write_lines(f, [{"id": 0, "score": 1.0}])
        with pytest.raises(ValidationError, match=r"missing scores for ids \[1\]"):
            load_priors(f, pool)

    def test_key_order_irrelevant(self, tmp_path):
        pool = self._pool(tmp_path, n=3)
        f1, f2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        recs = [{"id": 0, "score": 0.5}, {"id": 1, "score": 1.5}, {"id": 2, "score": 2.5}]
        _write_lines(f1, recs)
        _write_lines(f2, recs[::-1])
        np.testing.assert_array_equal(load_priors(f1, pool).mu, load_priors(f2, pool).mu)

    def test_duplicate_id_rejected(self, tmp_path):
        pool = self._pool(tmp_path)
        f = tmp_path / "priors.jsonl"
        _write_lines(f, [{"id": 0, "score": 1.0}, {"id": 0, "score": 2.0}, {"id": 1, "score": 3.0}])
        with pytest.raises(ParseError, match="duplicate"):
            load_priors(f, pool)

    def test_non_finite_rejected(self, tmp_path):
        pool = self._pool(tmp_path)
        f = tmp_path / "priors.jsonl"
        f.write_text('{"id": 0, "score": 1.0}\n{"id": 1, "score": NaN}\n')
        with pytest.raises(ParseError, match="non-finite"):
            load_priors(f, pool)

    def test_gold_loader_shares_format(self, tmp_path):
        pool = self._pool(tmp_path)
        f = tmp_path / "gold.jsonl"
        _write_lines(f, [{"id": 1, "score": 4.0}, {"id": 0, "score": 3.0}])
        gold = load_gold(f, pool)
        np.testing.assert_array_equal(gold.scores, [3.0, 4.0])
        assert not gold.normalised


DOCS = [
    [["big", "cats", "sleep", "all", "day"], ["small", "cats", "sleep", "too"]],
    [["dogs", "chase", "big", "cats"], ["dogs", "sleep", "all", "night"]],
]


class TestBigramPlus:
    def test_output_length_is_vocab_size_plus_five(self):
        for v in (3, 10, 200):
            cfg = BigramPlusConfig(vocab_size=v, stop_list=frozenset())
            vec = extract_bigram_plus(DOCS, ["big", "cats"], cfg)
            assert vec.shape == (v + 5,)

    def test_summary_without_top_bigrams_has_zero_bits_and_coverage(self):
        cfg = BigramPlusConfig(stop_list=frozenset())
        vec = extract_bigram_plus(DOCS, ["unrelated", "words", "only"], cfg)
        np.testing.assert_array_equal(vec[:201], np.zeros(201))

    def test_exact_limit_length_summary(self):
        cfg = BigramPlusConfig(stop_list=frozenset())
        summary = ["tok%d" % i for i in range(100)]
        vec = extract_bigram_plus(DOCS, summary, cfg)
        assert vec[202] == 1.0
        assert vec[204] == 0.0
        over = extract_bigram_plus(DOCS, ["tok%d" % i for i in range(101)], cfg)
        assert over[202] == pytest.approx(1.01)
        assert over[204] == 1.0

    def test_position_feature_for_two_leading_sentences(self):
        cfg = BigramPlusConfig(stop_list=frozenset())
        summary = [DOCS[0][0], DOCS[1][0]]
        vec = extract_bigram_plus(DOCS, summary, cfg)
        assert vec[203] == pytest.approx(2.0)

    def test_position_feature_uses_sentence_rank(self):
        cfg = BigramPlusConfig(stop_list=frozenset())
        summary = [DOCS[0][1], DOCS[1][1], ["nowhere", "to", "be", "found"]]
        vec = extract_bigram_plus(DOCS, summary, cfg)
        assert vec[203] == pytest.approx(0.5 + 0.5)

    def test_presence_and_redundancy_bits(self):
        # Corpus bigram counts: (big,cats)=2, (cats,sleep)=2, (sleep,all)=2,
        # everything else 1; lexicographic tie-break ranks the count-2 group
        # big/cats < cats/sleep < sleep/all, then (all,day) fills slot 3.
        cfg = BigramPlusConfig(vocab_size=4, stop_list=frozenset())
        summary = ["cats", "sleep", "cats", "sleep", "big", "cats"]
        vec = extract_bigram_plus(DOCS, summary, cfg)
        np.testing.assert_array_equal(vec[:4], [1.0, 1.0, 0.0, 0.0])
        assert vec[4] == pytest.approx(0.5)  # 2 of 4 vocab bigrams present
        assert vec[5] == pytest.approx(0.25)  # only (cats,sleep) repeats

    def test_stop_list_removes_bigrams(self):
        cfg = BigramPlusConfig(vocab_size=4, stop_list=frozenset({"cats"}))
        vec = extract_bigram_plus(DOCS, ["big", "cats", "sleep"], cfg)
        # with "cats" removed, "big sleep" forms instead of "big cats"/"cats sleep"
        assert vec.shape == (9,)

    def test_empty_documents_rejected(self):
        with pytest.raises(ValidationError, match="empty bigram vocabulary"):
            extract_bigram_plus([[[]]], ["a", "b"], BigramPlusConfig())

    def test_flat_summary_equals_single_sentence(self):
        cfg = BigramPlusConfig(stop_list=frozenset())
        flat = extract_bigram_plus(DOCS, ["big", "cats", "sleep"], cfg)
        nested = extract_bigram_plus(DOCS, [["big", "cats", "sleep"]], cfg)
        np.testing.assert_array_equal(flat, nested)


class TestGoldScore:
    def test_zero_overlap_scores_zero(self):
        assert gold_score_rcomb(["x", "y", "z"], ["a", "b", "c"]) == 0.0

    def test_identical_candidate_hits_weight_sum(self):
        ref = ["the", "cat", "sat", "on", "the", "mat"]
        expected = 1 / 0.47 + 1 / 0.22 + 1 / 0.18
        assert gold_score_rcomb(list(ref), ref) == pytest.approx(expected, rel=1e-12)
        assert expected == pytest.approx(12.228669675478185, rel=1e-12)

    def test_weight_matched_recalls_score_three(self):
        assert combine_rcomb(0.47, 0.22, 0.18) == pytest.approx(3.0, rel=1e-12)

    def test_empty_reference_rejected(self):
        with pytest.raises(ValidationError, match="reference"):
            gold_score_rcomb(["a"], [])

    def test_empty_candidate_scores_zero(self):
        assert gold_score_rcomb([], ["a", "b"]) == 0.0

    def test_monotone_in_added_reference_tokens(self):
        rng = np.random.default_rng(3)
        ref = ["w%d" % i for i in rng.integers(0, 12, size=20)]
        cand = ["w%d" % i for i in rng.integers(0, 12, size=5)]
        score = gold_score_rcomb(cand, ref)
        for tok in ref[:10]:
            grown = cand + [tok]
            grown_score = gold_score_rcomb(grown, ref)
            assert grown_score >= score - 1e-12
            cand, score = grown, grown_score

    def test_recall_bounds(self):
        rng = np.random.default_rng(5)
        for _ in range(25):
            ref = ["w%d" % i for i in rng.integers(0, 6, size=rng.integers(2, 15))]
            cand = ["w%d" % i for i in rng.integers(0, 6, size=rng.integers(0, 15))]
            score = gold_score_rcomb(cand, ref)
            assert 0.0 <= score <= combine_rcomb(1.0, 1.0, 1.0) + 1e-12

    def test_stemmed_variant_matches(self):
        cfg = GoldScorerConfig(stem=True)
        assert gold_score_rcomb(["cats", "sleeping"], ["cat", "sleep"], cfg) > 0.0


class TestSaveScores:
    def test_round_trips_through_loaders(self, tmp_path):
        from prefrank.ingest import save_scores

        pool = CandidatePool.from_arrays("t", np.array([[0.0], [1.0], [2.0]]))
        values = np.array([3.25, -0.5, 7.125])
        path = tmp_path / "scores.jsonl"
        save_scores(values, path)
        assert np.array_equal(load_gold(path, pool).scores, values)
        assert np.array_equal(load_priors(path, pool).mu, values)

    def test_rejects_bad_input(self, tmp_path):
        from prefrank.ingest import save_scores

        with pytest.raises(ValidationError):
            save_scores(np.array([[1.0]]), tmp_path / "x.jsonl")
        with pytest.raises(ValidationError):
            save_scores(np.array([1.0, np.nan]), tmp_path / "x.jsonl")
