import numpy as np
import pytest

from cqcim.cimsim import PRESETS, QuantizedCorpus
from cqcim.numkit import make_rng
from cqcim.retrieval import (EvalCell, RunResult, exact_mips, ndcg_at_k,
                             recall_at_k, results_to_jsonl, results_to_text,
                             run_grid, score_cell)


def brute_force_topk(queries, corpus, k):
    """O(N d) oracle with (score desc, id asc) tie-break via stable sort."""
    out = []
    for q in queries:
        scores = [(float(q @ doc), i) for i, doc in enumerate(corpus)]
        scores.sort(key=lambda t: (-t[0], t[1]))
        out.append([i for _, i in scores[:k]])
    return np.array(out)


def oracle_recall(ranking, qrels, k):
    vals = []
    for qid, rel in qrels.items():
        hits = len(set(ranking[qid][:k]) & set(rel))
        vals.append(hits / len(rel))
    return float(np.mean(vals))


def oracle_ndcg(ranking, qrels, k):
    vals = []
    for qid, rel in qrels.items():
        dcg = sum(rel.get(int(doc), 0.0) / np.log2(r + 2)
                  for r, doc in enumerate(ranking[qid][:k]))
        ideal = sorted(rel.values(), reverse=True)[:k]
        idcg = sum(g / np.log2(r + 2) for r, g in enumerate(ideal))
        vals.append(dcg / idcg if idcg else 0.0)
    return float(np.mean(vals))


# ---------------------------------------------------------------- exact mips

def test_self_retrieval():
    rng = make_rng(0)
    corpus = rng.standard_normal((20, 8))
    corpus /= np.linalg.norm(corpus, axis=1, keepdims=True)
    run = exact_mips(corpus[:5], corpus, 3)
    np.testing.assert_array_equal(run.ranking[:, 0], np.arange(5))


def test_full_k_is_permutation():
    rng = make_rng(1)
    corpus = rng.standard_normal((15, 4))
    run = exact_mips(rng.standard_normal((3, 4)), corpus, 15)
    for row in run.ranking:
        assert sorted(row) == list(range(15))


def test_exact_mips_matches_brute_force_oracle():
    rng = make_rng(2)
    for _ in range(100):
        corpus = rng.standard_normal((30, 6))
        queries = rng.standard_normal((4, 6))
        run = exact_mips(queries, corpus, 5)
        np.testing.assert_array_equal(run.ranking, brute_force_topk(queries, corpus, 5))


def test_k_clamped_with_warning():
    with pytest.warns(UserWarning, match="clamped"):
        run = exact_mips(np.ones((1, 2)), np.ones((3, 2)), 10)
    assert run.ranking.shape == (1, 3)


def test_one_hot_score():
    corpus = np.eye(4)
    q = np.array([[0.3, -0.1, 0.9, 0.2]])
    run = exact_mips(q, corpus, 4)
    assert run.scores[0, 0] == pytest.approx(0.9)


def test_deterministic_tie_breaking():
    corpus = np.ones((6, 3))
    run1 = exact_mips(np.ones((2, 3)), corpus, 6)
    run2 = exact_mips(np.ones((2, 3)), corpus, 6)
    np.testing.assert_array_equal(run1.ranking, run2.ranking)
    np.testing.assert_array_equal(run1.ranking[0], np.arange(6))


# ---------------------------------------------------------------- metrics

def make_run(ranking):
    ranking = np.asarray(ranking)
    return RunResult(ranking=ranking, scores=np.zeros_like(ranking, dtype=float))


def test_recall_extremes():
    run = make_run([[0, 1, 2]])
    assert recall_at_k(run, {0: {0: 1.0, 1: 1.0}}, 3) == 1.0
    assert recall_at_k(run, {0: {7: 1.0, 8: 1.0}}, 3) == 0.0


def test_recall_partial():
    run = make_run([[0, 1, 2, 3, 4]])
    assert recall_at_k(run, {0: {0: 1.0, 9: 1.0}}, 5) == 0.5


def test_ndcg_perfect_and_rank2():
    run = make_run([[0, 1, 2]])
    assert ndcg_at_k(run, {0: {0: 1.0}}, 3) == 1.0
    assert ndcg_at_k(run, {0: {1: 1.0}}, 10) == pytest.approx(1 / np.log2(3))


def test_metrics_match_oracles_random_instances():
    rng = make_rng(3)
    for _ in range(100):
        corpus = rng.standard_normal((200, 8))
        queries = rng.standard_normal((20, 8))
        qrels = {q: {int(d): float(g) for d, g in
                     zip(rng.choice(200, size=5, replace=False),
                         rng.integers(1, 4, size=5))}
                 for q in range(20)}
        run = exact_mips(queries, corpus, 10)
        assert abs(recall_at_k(run, qrels, 5) -
                   oracle_recall(run.ranking, qrels, 5)) < 1e-12
        assert abs(ndcg_at_k(run, qrels, 10) -
                   oracle_ndcg(run.ranking, qrels, 10)) < 1e-12


def test_metrics_bounds_and_query_permutation_invariance():
    rng = make_rng(4)
    corpus = rng.standard_normal((50, 5))
    queries = rng.standard_normal((8, 5))
    qrels = {q: {int(rng.integers(50)): 1.0} for q in range(8)}
    run = exact_mips(queries, corpus, 10)
    r = recall_at_k(run, qrels, 5)
    n = ndcg_at_k(run, qrels, 10)
    assert 0 <= r <= 1 and 0 <= n <= 1
    perm = make_rng(5).permutation(8)
    run_p = exact_mips(queries[perm], corpus, 10)
    qrels_p = {i: qrels[int(perm[i])] for i in range(8)}
    assert recall_at_k(run_p, qrels_p, 5) == pytest.approx(r, abs=1e-12)


def test_queries_without_qrels_skipped():
    run = make_run([[0], [1]])
    with pytest.warns(UserWarning, match="1 queries without qrels"):
        val = recall_at_k(run, {0: {0: 1.0}}, 1)
    assert val == 1.0


# ---------------------------------------------------------------- grid

def test_single_cell_grid_matches_exact_mips():
    rng = make_rng(6)
    corpus = rng.standard_normal((60, 12))
    queries = rng.standard_normal((10, 12))
    qrels = {q: {int(rng.integers(60)): 1.0} for q in range(10)}
    cell = EvalCell(docs=corpus, queries=queries, method="exact",
                    precision="float", dim=12)
    records = run_grid([cell], qrels)
    run = exact_mips(queries, corpus, 10)
    assert records[0]["recall@5"] == pytest.approx(recall_at_k(run, qrels, 5))
    assert records[0]["ndcg@10"] == pytest.approx(ndcg_at_k(run, qrels, 10))


def test_grid_skips_float_cell_in_device_mode():
    cell = EvalCell(docs=np.ones((4, 3)), queries=np.ones((2, 3)),
                    method="exact", precision="float", dim=3)
    records = run_grid([cell], {0: {0: 1.0}},
                       devices={"D-2": PRESETS["D-2"]})
    assert records[0]["skipped"]


def test_grid_device_mode_quantized_cell():
    rng = make_rng(7)
    codes = rng.integers(0, 4, size=(40, 16))
    qc = QuantizedCorpus(codes=codes, dequant=np.linspace(0, 1, 4), K=4)
    queries = rng.standard_normal((5, 16))
    qrels = {q: {int(rng.integers(40)): 1.0} for q in range(5)}
    cell = EvalCell(docs=qc, queries=queries, method="cq", precision="2bit", dim=16)
    records = run_grid([cell], qrels, devices={"ideal": None, "D-2": PRESETS["D-2"]},
                       noise_scale=0.1, seed=1)
    assert len(records) == 2
    assert not any(r["skipped"] for r in records)


def test_results_serialization():
    records = [{"method": "cq", "precision": "2bit", "dim": 16, "device": "ideal",
                "skipped": False, "recall@5": 0.5, "ndcg@10": 0.25}]
    jsonl = results_to_jsonl(records)
    assert jsonl.endswith("\n") and '"method": "cq"' in jsonl
    text = results_to_text(records)
    assert "0.5000" in text and "ideal" in text
