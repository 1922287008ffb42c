import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from groundrag.errors import EmptyIndex, EmptyQuery, HttpError
from groundrag.index import HybridIndex
from groundrag.ingest import Chunk
from groundrag.providers import OfflineEmbedder, OfflineExtractiveLLM, OfflineLexicalReranker
from groundrag.retrieval import FusionPolicy, RefinedQuery, fuse, hybrid_retrieve, refine_query, rerank_candidates


class ScriptedLLM:
    offline = False

    def __init__(self, reply=None, error=None):
        self.reply, self.error, self.prompts = reply, error, []

    def complete(self, prompt):
        self.prompts.append(prompt)
        if self.error:
            raise self.error
        return self.reply


class FailingReranker:
    offline = False

    def rerank(self, query, documents, top_n):
        raise HttpError("down", 503)


def corpus_index(texts):
    emb = OfflineEmbedder(dim=64)
    idx = HybridIndex()
    for i, t in enumerate(texts):
        idx.add(Chunk(f"c{i:03d}", "d", i, (0, 1), (0, len(t)), t), emb.embed(t))
    return idx, emb


def rrf_oracle(bm25_ids, vec_ids, c=60.0):
    scores = {}
    for r, cid in enumerate(bm25_ids, 1):
        scores[cid] = scores.get(cid, 0.0) + 1.0 / (c + r)
    for r, cid in enumerate(vec_ids, 1):
        scores[cid] = scores.get(cid, 0.0) + 1.0 / (c + r)
    return scores


def test_refine_offline_identity():
    r = refine_query("arbitration clause", OfflineExtractiveLLM())
    assert (r.refined, r.expansion_terms, r.fallback) == ("arbitration clause", [], False)
    with pytest.raises(EmptyQuery):
        refine_query("   ", OfflineExtractiveLLM())


def test_refine_parses_reply():
    llm = ScriptedLLM("dispute resolution clause\narbitration\nmediation")
    r = refine_query("arbitration clause", llm)
    assert r.refined == "dispute resolution clause"
    assert r.expansion_terms == ["arbitration", "mediation"]
    assert "arbitration clause" in llm.prompts[0]
    many = refine_query("q", ScriptedLLM("- main\n- a\n- b\n\n- c\n- d\n- e\n- f"))
    assert many.refined == "main" and many.expansion_terms == ["a", "b", "c", "d", "e"]


def test_refine_falls_back_on_provider_error():
    r = refine_query("late fee", ScriptedLLM(error=HttpError("boom", 500)))
    assert r.refined == "late fee" and r.fallback


def test_fusion_formula():
    cands = fuse([("x", 5.0), ("y", 4.0), ("z", 3.0)], [("y", 0.9)])
    z = next(c for c in cands if c.chunk_id == "z")
    assert z.fused_score == pytest.approx(1 / 63, abs=1e-15)
    both = fuse([("a", 1.0), ("b", 0.5)], [("a", 0.9), ("b", 0.1)])
    assert both[0].chunk_id == "a" and both[0].fused_rank == 1
    assert both[0].fused_score == pytest.approx(2 / 61)


ranked_lists = st.permutations([f"d{i}" for i in range(12)]).flatmap(
    lambda p: st.tuples(st.just(list(p)), st.permutations(list(p)), st.integers(1, 12), st.integers(1, 12)))


@settings(max_examples=200, deadline=None)
@given(ranked_lists)
def test_rrf_matches_oracle_and_dominance(args):
    bm, vec, nb, nv = args
    bm, vec = bm[:nb], list(vec)[:nv]
    cands = fuse([(c, float(len(bm) - i)) for i, c in enumerate(bm)], [(c, 1.0 - i / 100) for i, c in enumerate(vec)])
    oracle = rrf_oracle(bm, vec)
    got = {c.chunk_id: c.fused_score for c in cands}
    assert got.keys() == oracle.keys()
    assert all(abs(got[k] - oracle[k]) < 1e-15 for k in got)
    rank = {c.chunk_id: c.fused_rank for c in cands}

    def pos(lst, x):
        return lst.index(x) if x in lst else len(lst) + 100

    for a in got:
        for b in got:
            if pos(bm, a) <= pos(bm, b) and pos(vec, a) <= pos(vec, b):
                assert got[a] >= got[b]
    if bm[0] == vec[0]:
        assert rank[bm[0]] == 1


def test_rrf_ignores_score_scale():
    rng = np.random.default_rng(0)
    ids = [f"d{i}" for i in range(30)]
    bm = sorted(((c, float(s)) for c, s in zip(ids, rng.random(30))), key=lambda x: -x[1])
    vec = [(c, float(s)) for c, s in zip(rng.permutation(ids), np.sort(rng.random(30))[::-1])]
    base = [c.chunk_id for c in fuse(bm, vec)]
    scaled = [c.chunk_id for c in fuse([(c, s * 7.3) for c, s in bm], vec)]
    assert base == scaled


def test_weighted_fusion():
    cands = fuse([("a", 10.0), ("b", 0.0)], [("b", 0.8), ("c", 0.2)], FusionPolicy("weighted", vector_weight=0.25))
    got = {c.chunk_id: c.fused_score for c in cands}
    assert got == pytest.approx({"a": 0.75, "b": 0.25, "c": 0.0})
    scaled = fuse([("a", 73.0), ("b", 0.0)], [("b", 0.8), ("c", 0.2)], FusionPolicy("weighted", vector_weight=0.25))
    assert [c.chunk_id for c in scaled] == [c.chunk_id for c in cands]


def test_policy_validation():
    with pytest.raises(ValueError):
        FusionPolicy("max")
    with pytest.raises(ValueError):
        FusionPolicy(keep=300)


def test_small_corpus_returns_everything():
    texts = ["lease rent due", "loan interest rate", "board approved budget", "privacy data deletion", "arbitration"]
    idx, emb = corpus_index(texts)
    cands = hybrid_retrieve(RefinedQuery("lease", "lease"), idx, emb)
    assert len(cands) == 5
    assert cands[0].chunk_id == "c000"
    assert [c.fused_rank for c in cands] == [1, 2, 3, 4, 5]
    par = hybrid_retrieve(RefinedQuery("lease", "lease"), idx, emb, parallel=True)
    assert [(c.chunk_id, c.fused_score) for c in par] == [(c.chunk_id, c.fused_score) for c in cands]
    with pytest.raises(EmptyIndex):
        hybrid_retrieve(RefinedQuery("x", "x"), HybridIndex(), emb)


def test_rerank_keeps_top_and_puts_verbatim_match_first():
    rng = np.random.default_rng(2)
    vocab = ["fee", "rent", "loan", "term", "notice", "party", "court", "board", "vote", "data"]
    texts = [" ".join(rng.choice(vocab, 8)) for _ in range(199)] + ["the security deposit equals two months rent"]
    idx, emb = corpus_index(texts)
    refined = RefinedQuery("security deposit", "security deposit")
    cands = hybrid_retrieve(refined, idx, emb)
    assert len(cands) == 200
    snippets = rerank_candidates(refined, cands, idx, OfflineLexicalReranker())
    assert len(snippets) == 50
    assert snippets[0].chunk_id == "c199" and snippets[0].context_index == 1
    assert [s.context_index for s in snippets] == list(range(1, 51))
    scores = [s.rerank_score for s in snippets]
    assert scores == sorted(scores, reverse=True)


def test_rerank_fallback_keeps_fused_order():
    idx, emb = corpus_index([f"clause number {i} about rent" for i in range(10)])
    refined = RefinedQuery("rent", "rent")
    cands = hybrid_retrieve(refined, idx, emb)
    snippets = rerank_candidates(refined, cands, idx, FailingReranker(), FusionPolicy(keep=4))
    assert [s.chunk_id for s in snippets] == [c.chunk_id for c in cands[:4]]
    assert not any(s.reranked for s in snippets)
    with pytest.raises(HttpError):
        rerank_candidates(refined, cands, idx, FailingReranker(), fallback=False)
