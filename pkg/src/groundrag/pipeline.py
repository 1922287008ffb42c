"""End-to-end wiring: build an index from chunks and answer questions against it."""

from __future__ import annotations

from dataclasses import dataclass

from .config import EngineConfig
from .generation import CoStarSpec
from .index import HybridIndex
from .ingest import Chunk
from .providers import build_provider
from .retrieval import Candidate, RefinedQuery, Snippet, hybrid_retrieve, refine_query, rerank_candidates
from .verify import FinalAnswer, SupportPolicy, grounded_answer_loop


def build_index(chunks: list[Chunk], config: EngineConfig = EngineConfig(), embedder=None) -> HybridIndex:
    embedder = embedder or build_provider(config.embedding)
    index = HybridIndex(config.bm25, config.hnsw)
    if not chunks:
        return index
    vectors = embedder.embed_batch([c.text for c in chunks])
    for chunk, vec in zip(chunks, vectors):
        index.add(chunk, vec)
    return index


@dataclass
class AskResult:
    refined: RefinedQuery
    candidates: list[Candidate]
    snippets: list[Snippet]
    answer: FinalAnswer

    def to_dict(self) -> dict:
        out = self.answer.to_dict()
        out["query"] = {"original": self.refined.original, "refined": self.refined.refined,
                        "expansion_terms": list(self.refined.expansion_terms), "fallback": self.refined.fallback}
        out["snippets"] = [{"context_index": s.context_index, "chunk_id": s.chunk_id, "rerank_score": s.rerank_score,
                            "reranked": s.reranked} for s in self.snippets]
        return out


class Engine:
    def __init__(self, index: HybridIndex, config: EngineConfig = EngineConfig(), embedder=None, llm=None,
                 reranker=None):
        self.index = index
        self.config = config
        self.embedder = embedder or build_provider(config.embedding)
        self.llm = llm or build_provider(config.llm)
        self.reranker = reranker or build_provider(config.rerank)

    def ask(self, question: str, strict: bool | None = None) -> AskResult:
        cfg = self.config
        policy = cfg.support
        if strict is not None and strict != policy.strict:
            policy = SupportPolicy(policy.threshold, policy.max_rounds, strict, policy.check_uncited_against_all)
        refined = refine_query(question, self.llm)
        candidates = hybrid_retrieve(refined, self.index, self.embedder, cfg.fusion)
        snippets = rerank_candidates(refined, candidates, self.index, self.reranker, cfg.fusion) if candidates else []
        spec = CoStarSpec(max_context_tokens=cfg.prompt.max_context_tokens, template_path=cfg.prompt.template_path)
        answer = grounded_answer_loop(refined, snippets, self.llm, spec, policy)
        return AskResult(refined, candidates, snippets, answer)
