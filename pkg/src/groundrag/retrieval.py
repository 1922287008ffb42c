"""Query refinement, hybrid candidate retrieval with rank fusion, and reranking."""

from __future__ import annotations

import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyIndex, EmptyQuery, ProviderError
from .index import HybridIndex, analyze

log = logging.getLogger(__name__)

REFINE_PROMPT = """Rewrite the search query below so it retrieves the right passages from a document collection.
Expand synonyms and resolve ambiguity, but keep the meaning.
Reply with plain lines only: the rewritten query on the first line, then up to 5 expansion terms, one per line.

Query: {query}"""

MAX_EXPANSIONS = 5
RERANK_DOC_LIMIT = 1000
_BULLET = re.compile(r"^\s*(?:[-*•]|\d+[.)])\s*")


@dataclass(frozen=True)
class RefinedQuery:
    original: str
    refined: str
    expansion_terms: list[str] = field(default_factory=list)
    fallback: bool = False


@dataclass(frozen=True)
class FusionPolicy:
    method: str = "rrf"
    rrf_c: float = 60.0
    vector_weight: float = 0.5
    n_candidates: int = 200
    keep: int = 50

    def __post_init__(self):
        if self.method not in ("rrf", "weighted"):
            raise ValueError(f"unknown fusion method {self.method!r}")
        if self.rrf_c <= 0:
            raise ValueError("rrf_c must be > 0")
        if not 0.0 <= self.vector_weight <= 1.0:
            raise ValueError("vector_weight must lie in [0, 1]")
        if self.n_candidates < 1 or self.keep < 1:
            raise ValueError("n_candidates and keep must be positive")
        if self.keep > self.n_candidates:
            raise ValueError("keep must not exceed n_candidates")


@dataclass
class Candidate:
    chunk_id: str
    bm25_rank: int | None = None
    bm25_score: float | None = None
    vector_rank: int | None = None
    similarity: float | None = None
    fused_score: float = 0.0
    fused_rank: int = 0


@dataclass
class Snippet:
    chunk_id: str
    text: str
    rerank_score: float
    context_index: int
    fused_rank: int = 0
    reranked: bool = True


def refine_query(raw: str, llm) -> RefinedQuery:
    if raw is None or not raw.strip():
        raise EmptyQuery("query is blank")
    if getattr(llm, "offline", False):
        return RefinedQuery(raw, raw.strip(), [])
    try:
        reply = llm.complete(REFINE_PROMPT.format(query=raw.strip()))
    except ProviderError as exc:
        log.warning("query refinement failed (%s); using the raw query", exc.__class__.__name__)
        return RefinedQuery(raw, raw.strip(), [], fallback=True)
    lines = [_BULLET.sub("", line).strip() for line in (reply or "").splitlines()]
    lines = [line for line in lines if line]
    if not lines:
        return RefinedQuery(raw, raw.strip(), [], fallback=True)
    return RefinedQuery(raw, lines[0], lines[1:1 + MAX_EXPANSIONS])


def _minmax(values: dict[str, float]) -> dict[str, float]:
    if not values:
        return {}
    lo, hi = min(values.values()), max(values.values())
    if hi == lo:
        return {k: 1.0 for k in values}
    return {k: (v - lo) / (hi - lo) for k, v in values.items()}


def fuse(bm25_hits: list[tuple[str, float]], vector_hits: list[tuple[str, float]],
         policy: FusionPolicy = FusionPolicy()) -> list[Candidate]:
    """Merge two ranked lists; result is sorted by fused score, ties by chunk_id, cut at n_candidates."""
    cands: dict[str, Candidate] = {}
    for rank, (cid, score) in enumerate(bm25_hits, 1):
        c = cands.setdefault(cid, Candidate(cid))
        c.bm25_rank, c.bm25_score = rank, score
    for rank, (cid, sim) in enumerate(vector_hits, 1):
        c = cands.setdefault(cid, Candidate(cid))
        c.vector_rank, c.similarity = rank, sim

    if policy.method == "rrf":
        for c in cands.values():
            # fixed summation order (lexical leg first) keeps scores bit-stable
            s = 0.0
            if c.bm25_rank is not None:
                s += 1.0 / (policy.rrf_c + c.bm25_rank)
            if c.vector_rank is not None:
                s += 1.0 / (policy.rrf_c + c.vector_rank)
            c.fused_score = s
    else:
        lex = _minmax({c.chunk_id: c.bm25_score for c in cands.values() if c.bm25_score is not None})
        vec = _minmax({c.chunk_id: c.similarity for c in cands.values() if c.similarity is not None})
        w = policy.vector_weight
        for c in cands.values():
            c.fused_score = w * vec.get(c.chunk_id, 0.0) + (1.0 - w) * lex.get(c.chunk_id, 0.0)

    ordered = sorted(cands.values(), key=lambda c: (-c.fused_score, c.chunk_id))[: policy.n_candidates]
    for rank, c in enumerate(ordered, 1):
        c.fused_rank = rank
    return ordered


def query_terms(refined: RefinedQuery) -> list[str]:
    """Refined-query terms followed by expansion terms, de-duplicated in order."""
    terms = analyze(refined.refined)
    for extra in refined.expansion_terms:
        terms += analyze(extra)
    return list(dict.fromkeys(terms))


def hybrid_retrieve(refined: RefinedQuery, index: HybridIndex, embedder,
                    policy: FusionPolicy = FusionPolicy(), parallel: bool = False) -> list[Candidate]:
    if len(index) == 0:
        raise EmptyIndex("index holds no chunks")
    terms = query_terms(refined)
    qvec = np.asarray(embedder.embed_batch([refined.refined])[0])
    n = policy.n_candidates
    if parallel:
        with ThreadPoolExecutor(max_workers=2) as pool:
            lex = pool.submit(index.bm25_search, terms, n)
            vec = pool.submit(index.hnsw_search, qvec, n, max(n, index.hnsw.params.ef_search))
            bm25_hits, vector_hits = lex.result(), vec.result()
    else:
        bm25_hits = index.bm25_search(terms, n) if terms else []
        vector_hits = index.hnsw_search(qvec, n, max(n, index.hnsw.params.ef_search))
    return fuse(bm25_hits, vector_hits, policy)


def _fallback_snippets(candidates: list[Candidate], index: HybridIndex, keep: int) -> list[Snippet]:
    return [Snippet(c.chunk_id, index.get(c.chunk_id).text, c.fused_score, i, c.fused_rank, reranked=False)
            for i, c in enumerate(candidates[:keep], 1)]


def rerank_candidates(refined: RefinedQuery, candidates: list[Candidate], index: HybridIndex, reranker,
                      policy: FusionPolicy = FusionPolicy(), fallback: bool = True) -> list[Snippet]:
    """Rescore candidates with one rerank call and keep the best ``policy.keep``.

    If the reranker raises a provider error and ``fallback`` is set, the
    fused order is kept instead and snippets are marked ``reranked=False``.
    """
    if not candidates:
        raise ValueError("no candidates to rerank")
    pool = sorted(candidates, key=lambda c: c.fused_rank)[:RERANK_DOC_LIMIT]
    top_n = min(policy.keep, len(pool))
    texts = [index.get(c.chunk_id).text for c in pool]
    try:
        results = reranker.rerank(refined.refined, texts, top_n)
    except ProviderError:
        if not fallback:
            raise
        log.warning("rerank failed; falling back to fused order")
        return _fallback_snippets(pool, index, top_n)
    ranked = sorted(results, key=lambda r: (-r[1], pool[r[0]].fused_rank))[:top_n]
    return [Snippet(pool[i].chunk_id, texts[i], float(score), ctx, pool[i].fused_rank)
            for ctx, (i, score) in enumerate(ranked, 1)]
