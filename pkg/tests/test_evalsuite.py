from __future__ import annotations

import itertools

import pytest

from policyrag.evalsuite import (
    EvalError,
    MockJudge,
    Qrels,
    RetrievalRun,
    answer_scores,
    evaluate_run,
    faithfulness,
    load_qrels,
    load_run,
    map_at_k,
    mrr,
    recall_at_k,
    render_report,
    write_qrels,
    write_run,
)

# ---------------------------------------------------------------------------
# Independent naive metric implementations (the oracle side of the check)
# ---------------------------------------------------------------------------


def naive_rr(ranking, relevant):
    for i, item in enumerate(ranking):
        if item in relevant:
            return 1.0 / (i + 1)
    return 0.0


def naive_recall(ranking, relevant, k):
    found = 0
    for item in ranking[:k]:
        if item in relevant:
            found += 1
    return found / len(relevant)


def naive_ap(ranking, relevant, k):
    total = 0.0
    hits = 0
    for i, item in enumerate(ranking[:k]):
        if item in relevant:
            hits += 1
            total += hits / (i + 1)
    return total / min(len(relevant), k)


def _single(ranking, relevant):
    return RetrievalRun(rankings={"q": tuple(ranking)}), Qrels(
        relevant={"q": frozenset(relevant)}
    )


class TestMrr:
    def test_all_first_hits_relevant(self):
        run = RetrievalRun(rankings={"a": ("x", "y"), "b": ("z", "w")})
        qrels = Qrels(relevant={"a": frozenset({"x"}), "b": frozenset({"z"})})
        assert mrr(run, qrels) == 1.0

    def test_hand_case_ranks_two_and_four(self):
        run = RetrievalRun(
            rankings={"a": ("m", "x", "n", "o"), "b": ("m", "n", "o", "y")}
        )
        qrels = Qrels(relevant={"a": frozenset({"x"}), "b": frozenset({"y"})})
        assert mrr(run, qrels) == pytest.approx(0.375)

    def test_no_relevant_hits(self):
        run, qrels = _single(["a", "b"], {"missing"})
        assert mrr(run, qrels) == 0.0

    def test_query_missing_from_qrels(self):
        run = RetrievalRun(rankings={"ghost": ("a",)})
        qrels = Qrels(relevant={"other": frozenset({"a"})})
        with pytest.raises(EvalError, match="missing from qrels"):
            mrr(run, qrels)


class TestRecall:
    def test_all_relevant_in_top_k(self):
        run, qrels = _single(["a", "b", "c"], {"a", "b"})
        assert recall_at_k(run, qrels, 3) == 1.0

    def test_hand_case_one_of_three(self):
        run, qrels = _single(["r1", "x", "y", "z", "w"], {"r1", "r2", "r3"})
        assert recall_at_k(run, qrels, 5) == pytest.approx(1 / 3)

    def test_k_zero_disallowed(self):
        run, qrels = _single(["a"], {"a"})
        with pytest.raises(EvalError, match="k must be"):
            recall_at_k(run, qrels, 0)

    def test_non_decreasing_in_k(self):
        run, qrels = _single(["x", "r1", "y", "r2", "z", "r3"], {"r1", "r2", "r3"})
        values = [recall_at_k(run, qrels, k) for k in range(1, 7)]
        assert values == sorted(values)


class TestMap:
    def test_single_relevant_at_rank_one(self):
        run, qrels = _single(["r", "x", "y", "z", "w"], {"r"})
        assert map_at_k(run, qrels, 5) == 1.0

    def test_hand_case_ranks_one_and_three(self):
        run, qrels = _single(["r1", "x", "r2", "y", "z"], {"r1", "r2"})
        assert map_at_k(run, qrels, 5) == pytest.approx((1.0 + 2 / 3) / 2)
        assert map_at_k(run, qrels, 5) == pytest.approx(0.8333, abs=1e-4)

    def test_all_irrelevant(self):
        run, qrels = _single(["x", "y", "z"], {"missing"})
        assert map_at_k(run, qrels, 3) == 0.0


class TestOracleEquivalence:
    def test_exhaustive_small_rankings(self):
        """Every permutation of up to 6 items with up to 3 relevant."""
        checked = 0
        for n in range(1, 7):
            items = [f"c{i}" for i in range(n)]
            for r in range(1, min(3, n) + 1):
                for relevant in itertools.combinations(items, r):
                    relevant_set = frozenset(relevant)
                    for perm in itertools.permutations(items):
                        run, qrels = _single(perm, relevant_set)
                        assert mrr(run, qrels) == naive_rr(perm, relevant_set)
                        for k in range(1, n + 1):
                            assert recall_at_k(run, qrels, k) == naive_recall(
                                perm, relevant_set, k
                            )
                            assert map_at_k(run, qrels, k) == naive_ap(
                                perm, relevant_set, k
                            )
                        checked += 1
        assert checked > 30000

    def test_metrics_bounded(self):
        import random

        rng = random.Random(8)
        for _ in range(200):
            n = rng.randint(1, 10)
            items = [f"c{i}" for i in range(n)]
            rng.shuffle(items)
            relevant = frozenset(rng.sample(items, rng.randint(1, n)))
            run, qrels = _single(items, relevant)
            assert 0.0 <= mrr(run, qrels) <= 1.0
            for k in (1, 3, 5):
                assert 0.0 <= recall_at_k(run, qrels, k) <= 1.0
                assert 0.0 <= map_at_k(run, qrels, k) <= 1.0

    def test_invariant_under_tail_permutation(self):
        import random

        rng = random.Random(21)
        for _ in range(100):
            items = [f"c{i}" for i in range(10)]
            rng.shuffle(items)
            relevant = frozenset(rng.sample(items, 3))
            k = rng.randint(1, 6)
            head, tail = items[:k], items[k:]
            rng.shuffle(tail)
            base_run, qrels = _single(items, relevant)
            permuted_run, _ = _single(head + tail, relevant)
            assert recall_at_k(base_run, qrels, k) == recall_at_k(permuted_run, qrels, k)
            assert map_at_k(base_run, qrels, k) == map_at_k(permuted_run, qrels, k)


class TestEvaluateRun:
    def test_report_structure(self):
        run = RetrievalRun(rankings={"q1": ("a", "b", "c")})
        qrels = Qrels(relevant={"q1": frozenset({"b"})})
        report = evaluate_run(run, qrels, ks=(1, 2))
        assert report.mrr == 0.5
        assert report.recall_at == {1: 0.0, 2: 1.0}
        assert report.per_query["q1"]["rr"] == 0.5
        text = render_report(report)
        assert "MRR" in text and "Recall@2" in text and "MAP@1" in text

    def test_aggregates_are_means_of_per_query(self):
        run = RetrievalRun(rankings={"q1": ("a", "x"), "q2": ("y", "b")})
        qrels = Qrels(relevant={"q1": frozenset({"a"}), "q2": frozenset({"b"})})
        report = evaluate_run(run, qrels, ks=(2,))
        per_query_rr = [report.per_query[q]["rr"] for q in ("q1", "q2")]
        assert report.mrr == pytest.approx(sum(per_query_rr) / 2)

    def test_duplicate_ranking_rejected(self):
        with pytest.raises(EvalError, match="duplicates"):
            RetrievalRun(rankings={"q": ("a", "a")})

    def test_files_roundtrip(self, tmp_path):
        run = RetrievalRun(rankings={"q1": ("a", "b")})
        qrels = Qrels(relevant={"q1": frozenset({"a"})})
        run_path = tmp_path / "run.jsonl"
        qrels_path = tmp_path / "qrels.jsonl"
        write_run(run, run_path)
        write_qrels(qrels, {"q1": "the query"}, qrels_path)
        assert load_run(run_path).rankings == run.rankings
        loaded, texts = load_qrels(qrels_path)
        assert loaded.relevant == qrels.relevant
        assert texts == {"q1": "the query"}


class TestFaithfulness:
    def test_verbatim_copy_scores_one(self):
        judge = MockJudge()
        context = "Operators must register models. Penalties apply for late filing."
        assert faithfulness(context, [context], judge) == 1.0

    def test_half_supported_fixture(self):
        judge = MockJudge()
        answer = (
            "Operators must register models. "
            "Audits are voluntary in all cases. "
            "Penalties apply for late filing. "
            "The registry is private forever."
        )
        contexts = [
            "Operators must register models. Penalties apply for late filing.",
        ]
        assert faithfulness(answer, contexts, judge) == 0.5

    def test_deterministic_and_idempotent(self):
        judge = MockJudge()
        answer = "One claim here. Another claim there."
        contexts = ["one claim here."]
        first = faithfulness(answer, contexts, judge)
        assert first == faithfulness(answer, contexts, judge)

    def test_empty_answer_errors(self):
        with pytest.raises(EvalError, match="no claims"):
            faithfulness("   ", ["context"], MockJudge())


class TestAnswerScores:
    def test_verbatim_reference_full_accuracy(self):
        relevancy, accuracy = answer_scores(
            "what is required", "annual audits are required", "annual audits are required",
            MockJudge(),
        )
        assert accuracy == 1.0

    def test_empty_answer_zero_relevancy(self):
        relevancy, _ = answer_scores("what is required", "", "whatever", MockJudge())
        assert relevancy == 0.0

    def test_fixture_scores_exact(self):
        # authored against the mock's rules: token-set overlap / F1
        judge = MockJudge()
        relevancy, accuracy = answer_scores(
            "what must operators register",
            "operators register models",
            "operators must register deployed models",
            judge,
        )
        # question tokens {what,must,operators,register}: 2 of 4 appear in answer
        assert relevancy == pytest.approx(0.5)
        # answer tokens {operators,register,models} vs reference {operators,must,register,deployed,models}
        # overlap 3 -> precision 1.0, recall 3/5 -> F1 = 0.75
        assert accuracy == pytest.approx(0.75)
