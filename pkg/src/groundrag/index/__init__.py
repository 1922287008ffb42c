"""Hybrid chunk index: BM25 postings, an HNSW graph and the raw chunk store."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import DimensionMismatch, DuplicateChunkId, SnapshotError, UnknownChunk
from ..ingest import Chunk
from . import snapshot
from .bm25 import Bm25Index, Bm25Params, analyze
from .hnsw import HnswGraph, HnswParams

__all__ = ["Bm25Index", "Bm25Params", "HnswGraph", "HnswParams", "HybridIndex", "analyze", "cosine",
           "snapshot_load", "snapshot_save"]


def cosine(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    c = float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))
    return min(1.0, max(-1.0, c))


class HybridIndex:
    """Chunks are added once with their embedding and become searchable both ways.

    Searches are read-only; concurrent readers are fine, writes need exclusive access.
    """

    def __init__(self, bm25_params: Bm25Params = Bm25Params(), hnsw_params: HnswParams = HnswParams()):
        self.bm25 = Bm25Index(bm25_params)
        self.hnsw = HnswGraph(hnsw_params)
        self.chunks: dict[str, Chunk] = {}
        self.order: list[str] = []

    def __len__(self) -> int:
        return len(self.order)

    def __contains__(self, chunk_id: str) -> bool:
        return chunk_id in self.chunks

    @property
    def dim(self) -> int | None:
        return self.hnsw.dim

    def add(self, chunk: Chunk, vector) -> None:
        if chunk.chunk_id in self.chunks:
            raise DuplicateChunkId(chunk.chunk_id)
        vec = np.asarray(vector, dtype=np.float64).reshape(-1)
        if self.hnsw.dim is not None and vec.shape[0] != self.hnsw.dim:
            raise DimensionMismatch(f"vector dim {vec.shape[0]} != index dim {self.hnsw.dim}")
        ordinal = self.hnsw.add(vec)
        assert ordinal == len(self.order)
        self.bm25.add(chunk.chunk_id, analyze(chunk.text))
        self.chunks[chunk.chunk_id] = chunk
        self.order.append(chunk.chunk_id)

    def get(self, chunk_id: str) -> Chunk:
        try:
            return self.chunks[chunk_id]
        except KeyError:
            raise UnknownChunk(chunk_id) from None

    def bm25_score(self, query_terms: list[str], chunk_id: str) -> float:
        return self.bm25.score(query_terms, chunk_id)

    def bm25_search(self, query_terms: list[str], k: int) -> list[tuple[str, float]]:
        return self.bm25.search(query_terms, k)

    def hnsw_search(self, query_vector, k: int, ef_search: int | None = None) -> list[tuple[str, float]]:
        if k < 1:
            raise ValueError("k must be >= 1")
        return [(self.order[i], sim) for i, sim in self.hnsw.search(query_vector, k, ef_search)]

    # -- snapshots -----------------------------------------------------------
    def to_bytes(self) -> bytes:
        g = self.hnsw
        meta = {"hnsw": g.state_meta(), "bm25": {"k1": self.bm25.params.k1, "b": self.bm25.params.b}}
        arrays = g.state_arrays()
        graph = b"".join(arrays[name].astype("<i4").tobytes() for name in _graph_names(meta["hnsw"]["n_levels"]))
        chunks = "\n".join(json.dumps(self.chunks[cid].to_dict(), ensure_ascii=False, sort_keys=True)
                           for cid in self.order)
        return snapshot.pack({
            "params": json.dumps(meta, sort_keys=True).encode("utf-8"),
            "postings": json.dumps(self.bm25.to_state(), ensure_ascii=False, sort_keys=True).encode("utf-8"),
            "vectors": arrays["vectors"].astype("<f8").tobytes(),
            "graph": graph,
            "chunks": chunks.encode("utf-8"),
        })

    @classmethod
    def from_bytes(cls, data: bytes) -> "HybridIndex":
        sec = snapshot.unpack(data)
        missing = {"params", "postings", "vectors", "graph", "chunks"} - sec.keys()
        if missing:
            raise SnapshotError(f"snapshot lacks sections {sorted(missing)}")
        meta = json.loads(sec["params"])
        hm = meta["hnsw"]
        n, dim = hm["n"], hm["dim"] or 0
        arrays = {"vectors": np.frombuffer(sec["vectors"], dtype="<f8").reshape(n, dim)}
        graph = np.frombuffer(sec["graph"], dtype="<i4")
        pos = 0
        for name in _graph_names(hm["n_levels"]):
            width = 1 if not name.startswith("links") else (2 * hm["M"] if name == "links0" else hm["M"])
            size = n * width
            arrays[name] = graph[pos:pos + size]
            pos += size
        if pos != graph.shape[0]:
            raise SnapshotError("graph section size does not match header")
        idx = cls.__new__(cls)
        idx.hnsw = HnswGraph.from_state(hm, arrays)
        idx.bm25 = Bm25Index.from_state(json.loads(sec["postings"]))
        raw_chunks = sec["chunks"].decode("utf-8")
        chunk_list = [Chunk.from_dict(json.loads(line)) for line in raw_chunks.split("\n") if line]
        idx.order = [c.chunk_id for c in chunk_list]
        idx.chunks = {c.chunk_id: c for c in chunk_list}
        if idx.order != idx.bm25.chunk_ids or len(idx.order) != n:
            raise SnapshotError("chunk store disagrees with index sections")
        return idx

    def save(self, path: str | Path) -> None:
        snapshot.write_file(path, self.to_bytes())

    @classmethod
    def load(cls, path: str | Path) -> "HybridIndex":
        return cls.from_bytes(Path(path).read_bytes())


def _graph_names(n_levels: int) -> list[str]:
    names = ["levels"]
    for lvl in range(n_levels):
        names += [f"links{lvl}", f"counts{lvl}"]
    return names


def snapshot_save(index: HybridIndex, path: str | Path) -> None:
    index.save(path)


def snapshot_load(path: str | Path) -> HybridIndex:
    return HybridIndex.load(path)
