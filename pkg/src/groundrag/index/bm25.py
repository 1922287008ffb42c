"""Okapi BM25 inverted index."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from ..errors import UnknownChunk
from ..ingest import content_tokens


@dataclass(frozen=True)
class Bm25Params:
    k1: float = 1.2
    b: float = 0.75

    def __post_init__(self):
        if self.k1 < 0:
            raise ValueError("k1 must be >= 0")
        if not 0.0 <= self.b <= 1.0:
            raise ValueError("b must lie in [0, 1]")


def analyze(text: str) -> list[str]:
    """Index/query terms: lower-cased tokenizer output without punctuation."""
    return content_tokens(text)


class Bm25Index:
    """Postings keyed by term; documents addressed by insertion ordinal internally."""

    def __init__(self, params: Bm25Params = Bm25Params()):
        self.params = params
        self.chunk_ids: list[str] = []
        self.doc_lengths: list[int] = []
        self.postings: dict[str, list[tuple[int, int]]] = {}
        self._ordinal: dict[str, int] = {}
        self._total_len = 0
        self._arrays: dict[str, tuple[np.ndarray, np.ndarray]] = {}

    def __len__(self) -> int:
        return len(self.chunk_ids)

    @property
    def N(self) -> int:
        return len(self.chunk_ids)

    @property
    def avgdl(self) -> float:
        return self._total_len / len(self.chunk_ids) if self.chunk_ids else 0.0

    def df(self, term: str) -> int:
        return len(self.postings.get(term, ()))

    def idf(self, term: str) -> float:
        df = self.df(term)
        return math.log(1.0 + (self.N - df + 0.5) / (df + 0.5))

    def add(self, chunk_id: str, terms: list[str]) -> None:
        if chunk_id in self._ordinal:
            raise ValueError(f"chunk {chunk_id} already indexed")
        ordinal = len(self.chunk_ids)
        self._ordinal[chunk_id] = ordinal
        self.chunk_ids.append(chunk_id)
        self.doc_lengths.append(len(terms))
        self._total_len += len(terms)
        for term, tf in Counter(terms).items():
            self.postings.setdefault(term, []).append((ordinal, tf))
            self._arrays.pop(term, None)

    def _term_arrays(self, term: str) -> tuple[np.ndarray, np.ndarray]:
        arr = self._arrays.get(term)
        if arr is None:
            plist = self.postings[term]
            arr = (np.fromiter((p[0] for p in plist), dtype=np.int64, count=len(plist)),
                   np.fromiter((p[1] for p in plist), dtype=np.float64, count=len(plist)))
            self._arrays[term] = arr
        return arr

    def score(self, query_terms: list[str], chunk_id: str) -> float:
        ordinal = self._ordinal.get(chunk_id)
        if ordinal is None:
            raise UnknownChunk(chunk_id)
        k1, b = self.params.k1, self.params.b
        norm = 1.0 - b + b * self.doc_lengths[ordinal] / self.avgdl if self.avgdl > 0 else 1.0
        total = 0.0
        for term in query_terms:
            plist = self.postings.get(term)
            if not plist:
                continue
            tf = 0
            # postings are in ordinal order
            lo, hi = 0, len(plist)
            while lo < hi:
                mid = (lo + hi) // 2
                if plist[mid][0] < ordinal:
                    lo = mid + 1
                else:
                    hi = mid
            if lo < len(plist) and plist[lo][0] == ordinal:
                tf = plist[lo][1]
            if tf:
                total += self.idf(term) * (tf * (k1 + 1.0) / (tf + k1 * norm))
        return total

    def score_all(self, query_terms: list[str]) -> tuple[np.ndarray, np.ndarray]:
        """Scores for every document plus a mask of documents matching any query term."""
        scores = np.zeros(self.N, dtype=np.float64)
        matched = np.zeros(self.N, dtype=bool)
        if not self.N:
            return scores, matched
        k1, b = self.params.k1, self.params.b
        avgdl = self.avgdl
        dl = np.asarray(self.doc_lengths, dtype=np.float64)
        norm = 1.0 - b + b * dl / avgdl if avgdl > 0 else np.ones_like(dl)
        for term in query_terms:
            if term not in self.postings:
                continue
            idx, tf = self._term_arrays(term)
            scores[idx] += self.idf(term) * (tf * (k1 + 1.0) / (tf + k1 * norm[idx]))
            matched[idx] = True
        return scores, matched

    def search(self, query_terms: list[str], k: int) -> list[tuple[str, float]]:
        """Top-k matching documents, score descending then chunk_id ascending."""
        if k < 1:
            raise ValueError("k must be >= 1")
        scores, matched = self.score_all(query_terms)
        hits = np.flatnonzero(matched)
        if hits.size == 0:
            return []
        ids = np.asarray([self.chunk_ids[i] for i in hits])
        order = np.lexsort((ids, -scores[hits]))[:k]
        return [(str(ids[i]), float(scores[hits[i]])) for i in order]

    # -- persistence helpers -------------------------------------------------
    def to_state(self) -> dict:
        return {
            "k1": self.params.k1,
            "b": self.params.b,
            "chunk_ids": self.chunk_ids,
            "doc_lengths": self.doc_lengths,
            "postings": {t: [list(p) for p in plist] for t, plist in self.postings.items()},
        }

    @classmethod
    def from_state(cls, state: dict) -> "Bm25Index":
        idx = cls(Bm25Params(state["k1"], state["b"]))
        idx.chunk_ids = list(state["chunk_ids"])
        idx.doc_lengths = [int(x) for x in state["doc_lengths"]]
        idx._ordinal = {c: i for i, c in enumerate(idx.chunk_ids)}
        idx._total_len = sum(idx.doc_lengths)
        idx.postings = {t: [(int(o), int(tf)) for o, tf in plist] for t, plist in state["postings"].items()}
        return idx
