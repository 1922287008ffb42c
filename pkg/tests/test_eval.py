import json

import numpy as np
import pytest

from groundrag.errors import EmptyInput, EmptySnippets, MissingKeyPoints, UnknownQuery
from groundrag.evaluation import (
    QueryValues, RunRecord, TraceRecord, aggregate_report, evaluate_runs, precision_at_k, read_qrels, read_runs,
    read_traces, recall_at_k, trace_completeness, trace_context_relevance, trace_hallucination, trace_metrics,
    trace_utilization,
)

K_GRID = [1, 2, 4, 8, 16, 50]

# per-dataset retrieval rows: Recall@1..50 then Precision@1..50, in percent
PUBLISHED_ROWS = {
    "PrivacyQA": ["18.15", "25.87", "49.28", "64.07", "85.63", "96.47", "18.50", "14.02", "13.18", "9.26", "4.74", "5.28"],
    "ContractNLI": ["4.91", "9.33", "16.09", "25.83", "35.04", "46.90", "5.08", "5.59", "5.04", "3.67", "2.52", "1.75"],
    "MAUD": ["0.52", "2.48", "4.39", "7.24", "14.03", "22.60", "1.94", "2.63", "2.05", "1.77", "1.79", "1.12"],
    "CUAD": ["3.17", "7.33", "18.26", "28.67", "42.50", "55.66", "3.53", "4.18", "6.18", "5.06", "3.93", "2.74"],
}


def brute_recall(ranked, rel, k):
    return sum(1 for d in rel if d in ranked[:k]) / len(rel)


def brute_precision(ranked, rel, k):
    return sum(1 for i in range(min(k, len(ranked))) if ranked[i] in rel) / k


def test_recall_precision_examples():
    q = {"q": {"d1"}}
    assert recall_at_k(RunRecord("q", ["d1", "d2"]), q, 1) == 1.0
    assert recall_at_k(RunRecord("q", ["d3", "d1"]), {"q": {"d1", "d2"}}, 2) == 0.5
    assert recall_at_k(RunRecord("q", ["d1"]), q, 50) == 1.0
    assert precision_at_k(RunRecord("q", ["d1", "d2"]), q, 2) == 0.5
    assert precision_at_k(RunRecord("q", ["d1", "d2"]), {"q": {"d1", "d2"}}, 4) == 2 / 4
    with pytest.raises(UnknownQuery):
        recall_at_k(RunRecord("zz", ["d1"]), q, 1)
    with pytest.raises(ValueError):
        RunRecord("q", ["d1", "d1"])


def test_random_runs_match_brute_force():
    rng = np.random.default_rng(12)
    for n in range(100):
        pool = [f"d{i}" for i in range(80)]
        ranked = list(rng.choice(pool, rng.integers(0, 70), replace=False))
        rel = set(rng.choice(pool, rng.integers(1, 15), replace=False))
        run = RunRecord(f"q{n}", ranked)
        for k in K_GRID:
            assert abs(recall_at_k(run, {run.query_id: rel}, k) - brute_recall(ranked, rel, k)) < 1e-12
            assert abs(precision_at_k(run, {run.query_id: rel}, k) - brute_precision(ranked, rel, k)) < 1e-12


def test_hallucination():
    snips = ["the rent is due monthly"]
    assert trace_hallucination(TraceRecord("q", "The rent is due monthly. [1]", snips)) == 0.0
    assert trace_hallucination(TraceRecord("q", "Cats purr loudly.", snips)) == 1.0
    answer = " ".join(f"a{i}" for i in range(10)) + " " + " ".join(f"b{i}" for i in range(10)) + "."
    snippet = " ".join(f"a{i}" for i in range(10))
    assert trace_hallucination(TraceRecord("q", answer, [snippet])) == 0.5


def test_utilization():
    s1, s2 = "Rent is due monthly on the first.", "Deposits are returned within thirty days."
    assert trace_utilization(TraceRecord("q", s1 + " " + s2, [s1, s2])) == 1.0
    assert trace_utilization(TraceRecord("q", "Cats purr.", [s1, s2])) == 0.0
    a, b = "w1 w2 w3 w4 w5 w6", "x1 x2 x3 x4 x5 x6"
    assert abs(trace_utilization(TraceRecord("q", a + ".", [a, b])) - 0.5) < 1e-9
    with pytest.raises(EmptySnippets):
        trace_utilization(TraceRecord("q", "x", []))


def test_completeness():
    ans = "Rent is due monthly. The deposit is two months. Pets are allowed."
    points = ["Rent is due monthly.", "The deposit is two months.", "Pets are allowed.", "Parking costs extra."]
    assert trace_completeness(TraceRecord("q", ans, [], key_points=points[:1])) == 1.0
    assert trace_completeness(TraceRecord("q", ans, [], key_points=points)) == 0.75
    with pytest.raises(MissingKeyPoints):
        trace_completeness(TraceRecord("q", ans, []))


def test_context_relevance():
    q = "When is the rent due?"
    assert trace_context_relevance(TraceRecord(q, "a", ["rent due", "Rent is DUE today"])) == 1.0
    assert trace_context_relevance(TraceRecord(q, "a", ["cats", "dogs"])) == 0.0
    assert trace_context_relevance(TraceRecord(q, "a", ["rent is due", "cats"])) == 0.5


def test_trace_metrics_keys():
    m = trace_metrics(TraceRecord("rent", "Rent. [1]", ["rent"], key_points=["rent"], human_accuracy=0.8))
    assert m == {"utilization": 1.0, "context_relevance": 1.0, "hallucination": 0.0, "completeness": 1.0,
                 "accuracy": 0.8}


def test_aggregate_single_and_datasets():
    one = aggregate_report([QueryValues("q", "A", {"recall@1": 0.25})], [1])
    assert one.per_dataset["A"] == one.micro == one.macro == {"recall@1": 0.25}
    vals = [QueryValues("a1", "A", {"recall@1": 1.0})] + [QueryValues(f"b{i}", "B", {"recall@1": v})
                                                           for i, v in enumerate([0.0, 0.0, 1.0])]
    rep = aggregate_report(vals, [1])
    assert rep.micro["recall@1"] == 0.5
    assert rep.macro["recall@1"] == pytest.approx((1.0 + 1 / 3) / 2, abs=1e-15)
    with pytest.raises(EmptyInput):
        aggregate_report([])


def test_published_rows_reproduced_verbatim():
    names = [f"recall@{k}" for k in K_GRID] + [f"precision@{k}" for k in K_GRID]
    per_query = [QueryValues(f"{ds}-0", ds, {m: float(v) / 100 for m, v in zip(names, row)})
                 for ds, row in PUBLISHED_ROWS.items()]
    report = aggregate_report(per_query, K_GRID)
    lines = report.to_table().splitlines()
    for ds, row in PUBLISHED_ROWS.items():
        line = next(l for l in lines if l.startswith(ds + " "))
        assert line.split() == [ds, *row]
        assert [f"{report.per_dataset[ds][m] * 100:.2f}" for m in names] == row


def test_files_round_trip(tmp_path):
    runs = tmp_path / "run.jsonl"
    qrels = tmp_path / "qrels.jsonl"
    traces = tmp_path / "trace.jsonl"
    runs.write_text(json.dumps({"query_id": "q1", "ranked": ["d1", "d2"], "dataset": "X"}) + "\n")
    qrels.write_text(json.dumps({"query_id": "q1", "relevant": ["d2"]}) + "\n")
    traces.write_text(json.dumps({"query": "rent", "answer": "Rent.", "snippets": ["rent"]}) + "\n")
    vals = evaluate_runs(read_runs(runs), read_qrels(qrels), [1, 2])
    assert vals[0].values == {"recall@1": 0.0, "recall@2": 1.0, "precision@1": 0.0, "precision@2": 0.5}
    assert read_traces(traces)[0].snippets == ["rent"]
