"""Retrieval metrics (Recall@k, Precision@k), TRACe answer metrics and report aggregation.

The TRACe dimensions are operationalised with token-LCS alignments over
case-folded, punctuation-free tokens:

* hallucination: share of answer tokens that sit on no optimal LCS alignment
  between their sentence and any snippet;
* utilization: share of snippet tokens that sit on some such alignment;
* completeness: share of key points whose support score against the answer
  reaches the threshold;
* context relevance: mean share of the query's content words found in each snippet.
"""

from __future__ import annotations

import json
import re
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyAnswer, EmptyInput, EmptySnippets, MissingKeyPoints, UnknownQuery
from .ingest import content_tokens, stopwords
from .kernels import encode_tokens, lcs_participation
from .verify import split_sentences, support_score

DEFAULT_K_GRID = (1, 2, 4, 8, 16, 50)
DEFAULT_DATASET = "default"
TRACE_METRICS = ("completeness", "utilization", "context_relevance", "hallucination", "accuracy")
_MARKER = re.compile(r"\[\d+\]")


@dataclass
class RunRecord:
    query_id: str
    ranked: list[str]
    dataset: str | None = None

    def __post_init__(self):
        if len(set(self.ranked)) != len(self.ranked):
            raise ValueError(f"run for {self.query_id} has duplicate chunk ids")


@dataclass
class TraceRecord:
    query: str
    answer: str
    snippets: list[str]
    key_points: list[str] | None = None
    human_accuracy: float | None = None
    query_id: str | None = None
    dataset: str | None = None


# --------------------------------------------------------------------------- #
# retrieval metrics

def _relevant(run: RunRecord, qrels: dict[str, set[str]]) -> set[str]:
    rel = qrels.get(run.query_id)
    if not rel:
        raise UnknownQuery(run.query_id)
    return set(rel)


def recall_at_k(run: RunRecord, qrels: dict[str, set[str]], k: int) -> float:
    """Relevant ids found in the top k over all relevant ids; a short run is scored as is."""
    if k < 1:
        raise ValueError("k must be >= 1")
    rel = _relevant(run, qrels)
    return len(rel.intersection(run.ranked[:k])) / len(rel)


def precision_at_k(run: RunRecord, qrels: dict[str, set[str]], k: int) -> float:
    """Relevant ids in the top k over k (k stays the denominator for short runs)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    rel = _relevant(run, qrels)
    return len(rel.intersection(run.ranked[:k])) / k


# --------------------------------------------------------------------------- #
# TRACe metrics

def _answer_sentences(answer: str) -> list[list[str]]:
    return [toks for s in split_sentences(_MARKER.sub(" ", answer)) if (toks := content_tokens(s))]


def _alignment_masks(record: TraceRecord) -> tuple[list[np.ndarray], list[np.ndarray]]:
    sentences = _answer_sentences(record.answer)
    snippets = [content_tokens(s) for s in record.snippets]
    sent_masks = [np.zeros(len(s), dtype=bool) for s in sentences]
    snip_masks = [np.zeros(len(t), dtype=bool) for t in snippets]
    for si, sent in enumerate(sentences):
        for ti, snip in enumerate(snippets):
            if not snip:
                continue
            a, b = encode_tokens(sent, snip)
            ma, mb = lcs_participation(a, b)
            sent_masks[si] |= ma
            snip_masks[ti] |= mb
    return sent_masks, snip_masks


def trace_hallucination(record: TraceRecord) -> float:
    sent_masks, _ = _alignment_masks(record)
    total = sum(m.shape[0] for m in sent_masks)
    if total == 0:
        raise EmptyAnswer("answer has no word tokens")
    supported = sum(int(m.sum()) for m in sent_masks)
    return (total - supported) / total


def trace_utilization(record: TraceRecord) -> float:
    if not record.snippets:
        raise EmptySnippets("record has no snippets")
    _, snip_masks = _alignment_masks(record)
    total = sum(m.shape[0] for m in snip_masks)
    if total == 0:
        raise EmptySnippets("snippets have no word tokens")
    return sum(int(m.sum()) for m in snip_masks) / total


def trace_completeness(record: TraceRecord, threshold: float = 0.6) -> float:
    if not record.key_points:
        raise MissingKeyPoints("record has no key_points")
    covered = 0
    for point in record.key_points:
        if content_tokens(point) and support_score(point, record.answer) >= threshold:
            covered += 1
    return covered / len(record.key_points)


def query_content_terms(query: str) -> set[str]:
    toks = content_tokens(query)
    stop = stopwords()
    content = {t for t in toks if t not in stop}
    return content or set(toks)


def trace_context_relevance(record: TraceRecord) -> float:
    if not record.snippets:
        raise EmptySnippets("record has no snippets")
    q = query_content_terms(record.query)
    if not q:
        return 0.0
    shares = [len(q.intersection(content_tokens(s))) / len(q) for s in record.snippets]
    return sum(shares) / len(shares)


def trace_metrics(record: TraceRecord, threshold: float = 0.6) -> dict[str, float]:
    out = {
        "utilization": trace_utilization(record),
        "context_relevance": trace_context_relevance(record),
        "hallucination": trace_hallucination(record),
    }
    if record.key_points:
        out["completeness"] = trace_completeness(record, threshold)
    if record.human_accuracy is not None:
        out["accuracy"] = float(record.human_accuracy)
    return out


# --------------------------------------------------------------------------- #
# aggregation

@dataclass
class QueryValues:
    query_id: str
    dataset: str
    values: dict[str, float]


@dataclass
class MetricsReport:
    per_query: list[QueryValues]
    per_dataset: dict[str, dict[str, float]]
    micro: dict[str, float]
    macro: dict[str, float]
    metrics: list[str]
    k_grid: list[int] = field(default_factory=lambda: list(DEFAULT_K_GRID))

    def to_dict(self) -> dict:
        return {
            "k_grid": self.k_grid,
            "metrics": self.metrics,
            "per_dataset": self.per_dataset,
            "micro": self.micro,
            "macro_of_datasets": self.macro,
            "per_query": [{"query_id": q.query_id, "dataset": q.dataset, **q.values} for q in self.per_query],
        }

    def to_table(self) -> str:
        """Aligned plain-text tables: IR metrics as percentages, TRACe metrics as fractions."""
        ir = [m for m in self.metrics if m.startswith(("recall@", "precision@"))]
        trace = [m for m in self.metrics if m not in ir]
        blocks = []
        if ir:
            blocks.append(self._table(ir, lambda m, v: f"{v * 100:.2f}"))
        if trace:
            blocks.append(self._table(trace, lambda m, v: f"{v:.2f}" if m == "accuracy" else f"{v:.4f}"))
        return "\n\n".join(blocks) + "\n"

    def _table(self, metrics: list[str], fmt) -> str:
        header = ["Dataset", *(_label(m) for m in metrics)]
        rows = []
        for name, vals in self.per_dataset.items():
            rows.append([name, *(fmt(m, vals[m]) if m in vals else "-" for m in metrics)])
        rows.append(["MICRO", *(fmt(m, self.micro[m]) if m in self.micro else "-" for m in metrics)])
        rows.append(["MACRO", *(fmt(m, self.macro[m]) if m in self.macro else "-" for m in metrics)])
        widths = [max(len(r[i]) for r in [header, *rows]) for i in range(len(header))]

        def line(r):
            return "  ".join(c.ljust(widths[0]) if i == 0 else c.rjust(widths[i]) for i, c in enumerate(r))

        rule = "-" * len(line(header))
        return "\n".join([line(header), rule, *(line(r) for r in rows[:-2]), rule, line(rows[-2]), line(rows[-1])])


def _label(metric: str) -> str:
    if "@" in metric:
        name, k = metric.split("@")
        return f"{name.capitalize()}@{k}"
    return {"context_relevance": "ContextRel"}.get(metric, metric.capitalize())


def _metric_order(names: set[str]) -> list[str]:
    def key(m):
        if "@" in m:
            name, k = m.split("@")
            return (0 if name == "recall" else 1, int(k), m)
        return (2, TRACE_METRICS.index(m) if m in TRACE_METRICS else 99, m)
    return sorted(names, key=key)


def aggregate_report(per_query: list[QueryValues], k_grid=DEFAULT_K_GRID) -> MetricsReport:
    """Per-dataset means, the corpus mean over all queries (micro) and the mean of dataset means (macro)."""
    if not per_query:
        raise EmptyInput("no per-query values to aggregate")
    names = set()
    groups: dict[str, list[QueryValues]] = defaultdict(list)
    for q in per_query:
        names.update(q.values)
        groups[q.dataset].append(q)
    metrics = _metric_order(names)
    per_dataset = {}
    for ds, qs in groups.items():
        per_dataset[ds] = {m: float(np.mean([q.values[m] for q in qs if m in q.values]))
                           for m in metrics if any(m in q.values for q in qs)}
    micro = {m: float(np.mean([q.values[m] for q in per_query if m in q.values])) for m in metrics}
    macro = {m: float(np.mean([v[m] for v in per_dataset.values() if m in v])) for m in metrics}
    return MetricsReport(list(per_query), per_dataset, micro, macro, metrics, list(k_grid))


def evaluate_runs(runs: list[RunRecord], qrels: dict[str, set[str]], k_grid=DEFAULT_K_GRID) -> list[QueryValues]:
    out = []
    for run in runs:
        vals = {}
        for k in k_grid:
            vals[f"recall@{k}"] = recall_at_k(run, qrels, k)
        for k in k_grid:
            vals[f"precision@{k}"] = precision_at_k(run, qrels, k)
        out.append(QueryValues(run.query_id, run.dataset or DEFAULT_DATASET, vals))
    return out


def evaluate_traces(records: list[TraceRecord], threshold: float = 0.6) -> list[QueryValues]:
    return [QueryValues(r.query_id or f"trace-{i}", r.dataset or DEFAULT_DATASET, trace_metrics(r, threshold))
            for i, r in enumerate(records)]


# --------------------------------------------------------------------------- #
# file formats

def _jsonl(path: str | Path):
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                yield json.loads(line)


def read_runs(path: str | Path) -> list[RunRecord]:
    return [RunRecord(str(o["query_id"]), [str(x) for x in o["ranked"]], o.get("dataset")) for o in _jsonl(path)]


def read_qrels(path: str | Path) -> dict[str, set[str]]:
    qrels: dict[str, set[str]] = defaultdict(set)
    for o in _jsonl(path):
        qrels[str(o["query_id"])].update(str(x) for x in o["relevant"])
    return dict(qrels)


def read_traces(path: str | Path) -> list[TraceRecord]:
    return [TraceRecord(o["query"], o["answer"], list(o["snippets"]), o.get("key_points"), o.get("human_accuracy"),
                        o.get("query_id"), o.get("dataset")) for o in _jsonl(path)]
