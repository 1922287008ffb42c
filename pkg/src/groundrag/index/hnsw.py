"""Hierarchical navigable small-world graph over unit vectors (cosine similarity).

Nodes are dense ordinals 0..n-1. Level ``l`` stores neighbour ids in a
``(capacity, max_degree(l))`` int32 array with a parallel count vector, so the
layer search kernel can walk it without Python objects.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import kernels
from ..errors import DimensionMismatch


@dataclass(frozen=True)
class HnswParams:
    M: int = 16
    ef_construction: int = 200
    ef_search: int = 100
    metric: str = "cosine"
    seed: int = 0

    def __post_init__(self):
        if self.M < 2:
            raise ValueError("M must be >= 2")
        if self.ef_construction < 1 or self.ef_search < 1:
            raise ValueError("ef values must be positive")
        if self.metric != "cosine":
            raise ValueError("only cosine is supported")


def normalize(vec) -> np.ndarray:
    v = np.asarray(vec, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(v)):
        raise ValueError("vector has non-finite values")
    n = float(np.linalg.norm(v))
    if n == 0.0:
        raise ValueError("zero vector cannot be normalized")
    return v / n


class HnswGraph:
    def __init__(self, params: HnswParams = HnswParams(), dim: int | None = None):
        self.params = params
        self.dim = dim
        self.n = 0
        self.entry_point = -1
        self.max_level = -1
        self._cap = 0
        self.vectors = np.zeros((0, dim or 0), dtype=np.float64)
        self.levels = np.zeros(0, dtype=np.int32)
        self.links: list[np.ndarray] = []
        self.counts: list[np.ndarray] = []
        self._visited = np.zeros(0, dtype=np.int32)
        self._tag = 0
        self._rng = np.random.default_rng(params.seed)
        self._level_mult = 1.0 / math.log(params.M)

    def __len__(self) -> int:
        return self.n

    def max_degree(self, level: int) -> int:
        return 2 * self.params.M if level == 0 else self.params.M

    # -- storage -------------------------------------------------------------
    def _ensure_capacity(self, need: int) -> None:
        if need <= self._cap:
            return
        cap = max(need, 2 * self._cap, 64)
        vecs = np.zeros((cap, self.dim), dtype=np.float64)
        vecs[: self.n] = self.vectors[: self.n]
        self.vectors = vecs
        self.levels = np.concatenate([self.levels[: self.n], np.zeros(cap - self.n, dtype=np.int32)])
        for lvl in range(len(self.links)):
            self.links[lvl] = np.concatenate(
                [self.links[lvl][: self.n], np.zeros((cap - self.n, self.max_degree(lvl)), dtype=np.int32)])
            self.counts[lvl] = np.concatenate([self.counts[lvl][: self.n], np.zeros(cap - self.n, dtype=np.int32)])
        self._visited = np.zeros(cap, dtype=np.int32)
        self._tag = 0
        self._cap = cap

    def _ensure_level(self, level: int) -> None:
        while len(self.links) <= level:
            lvl = len(self.links)
            self.links.append(np.zeros((self._cap, self.max_degree(lvl)), dtype=np.int32))
            self.counts.append(np.zeros(self._cap, dtype=np.int32))

    def _next_tag(self) -> int:
        self._tag += 1
        if self._tag >= np.iinfo(np.int32).max:
            self._visited[:] = 0
            self._tag = 1
        return self._tag

    def neighbors(self, node: int, level: int) -> np.ndarray:
        return self.links[level][node, : self.counts[level][node]]

    # -- search ------------------------------------------------------------
    def _search_layer(self, query: np.ndarray, entries: np.ndarray, ef: int, level: int):
        return kernels.search_layer(query, self.vectors, self.links[level], self.counts[level],
                                    entries, ef, self._visited, self._next_tag())

    def _descend(self, query: np.ndarray, stop_level: int) -> np.ndarray:
        ep = np.array([self.entry_point], dtype=np.int64)
        for lvl in range(self.max_level, stop_level, -1):
            ids, _ = self._search_layer(query, ep, 1, lvl)
            ep = ids[:1]
        return ep

    def _random_level(self) -> int:
        u = 1.0 - self._rng.random()  # (0, 1]
        return int(-math.log(u) * self._level_mult)

    def _set_links(self, node: int, level: int, ids) -> None:
        ids = np.asarray(ids, dtype=np.int32)
        self.links[level][node, : ids.shape[0]] = ids
        self.counts[level][node] = ids.shape[0]

    def _connect_back(self, node: int, target: int, level: int) -> None:
        cnt = int(self.counts[level][target])
        cap = self.max_degree(level)
        if cnt < cap:
            self.links[level][target, cnt] = node
            self.counts[level][target] = cnt + 1
            return
        cands = np.append(self.links[level][target, :cnt], np.int32(node))
        dists = 1.0 - self.vectors[cands] @ self.vectors[target]
        keep = np.lexsort((cands, dists))[:cap]
        self._set_links(target, level, cands[keep])

    def add(self, vector) -> int:
        """Insert a vector (normalized on the way in) and return its ordinal."""
        v = normalize(vector)
        if self.dim is None:
            self.dim = v.shape[0]
            self.vectors = np.zeros((0, self.dim), dtype=np.float64)
        elif v.shape[0] != self.dim:
            raise DimensionMismatch(f"vector dim {v.shape[0]} != index dim {self.dim}")
        node = self.n
        self._ensure_capacity(node + 1)
        level = self._random_level()
        self._ensure_level(level)
        self.vectors[node] = v
        self.levels[node] = level
        self.n += 1
        if self.entry_point < 0:
            self.entry_point, self.max_level = node, level
            return node
        ep = self._descend(v, level)
        M = self.params.M
        for lvl in range(min(level, self.max_level), -1, -1):
            ids, _ = self._search_layer(v, ep, self.params.ef_construction, lvl)
            ids = ids[ids != node]
            chosen = ids[:M]
            self._set_links(node, lvl, chosen)
            for nb in chosen.tolist():
                self._connect_back(node, nb, lvl)
            ep = ids
        if level > self.max_level:
            self.entry_point, self.max_level = node, level
        return node

    def search(self, query, k: int, ef_search: int | None = None) -> list[tuple[int, float]]:
        """Approximate k nearest ordinals as (ordinal, cosine similarity), best first."""
        if self.n == 0:
            return []
        q = normalize(query)
        if q.shape[0] != self.dim:
            raise DimensionMismatch(f"query dim {q.shape[0]} != index dim {self.dim}")
        ef = max(ef_search or self.params.ef_search, k)
        ep = self._descend(q, 0)
        ids, dists = self._search_layer(q, ep, ef, 0)
        return [(int(i), 1.0 - float(d)) for i, d in zip(ids[:k], dists[:k])]

    def exact_search(self, query, k: int) -> list[tuple[int, float]]:
        if self.n == 0:
            return []
        q = normalize(query)
        sims = self.vectors[: self.n] @ q
        order = np.lexsort((np.arange(self.n), -sims))[:k]
        return [(int(i), float(sims[i])) for i in order]

    def reachable(self) -> np.ndarray:
        """Mask of nodes reachable from the entry point by following links on any level."""
        seen = np.zeros(self.n, dtype=bool)
        if self.n == 0:
            return seen
        stack = [self.entry_point]
        seen[self.entry_point] = True
        while stack:
            node = stack.pop()
            for lvl in range(int(self.levels[node]) + 1):
                for nb in self.neighbors(node, lvl).tolist():
                    if not seen[nb]:
                        seen[nb] = True
                        stack.append(nb)
        return seen

    # -- persistence -------------------------------------------------------
    def state_arrays(self) -> dict[str, np.ndarray]:
        n = self.n
        out = {
            "vectors": np.ascontiguousarray(self.vectors[:n]),
            "levels": np.ascontiguousarray(self.levels[:n]),
        }
        for lvl in range(len(self.links)):
            out[f"links{lvl}"] = np.ascontiguousarray(self.links[lvl][:n])
            out[f"counts{lvl}"] = np.ascontiguousarray(self.counts[lvl][:n])
        return out

    def state_meta(self) -> dict:
        p = self.params
        return {"M": p.M, "ef_construction": p.ef_construction, "ef_search": p.ef_search, "metric": p.metric,
                "seed": p.seed, "dim": self.dim, "n": self.n, "entry_point": self.entry_point,
                "max_level": self.max_level, "n_levels": len(self.links),
                "rng_state": self._rng.bit_generator.state}

    @classmethod
    def from_state(cls, meta: dict, arrays: dict[str, np.ndarray]) -> "HnswGraph":
        params = HnswParams(meta["M"], meta["ef_construction"], meta["ef_search"], meta["metric"], meta["seed"])
        g = cls(params, meta["dim"])
        n = meta["n"]
        g.n = n
        g.entry_point = meta["entry_point"]
        g.max_level = meta["max_level"]
        g._cap = n
        g.vectors = arrays["vectors"].astype(np.float64, copy=True).reshape(n, meta["dim"] or 0)
        g.levels = arrays["levels"].astype(np.int32, copy=True)
        g.links = [arrays[f"links{lvl}"].astype(np.int32, copy=True).reshape(n, g.max_degree(lvl))
                   for lvl in range(meta["n_levels"])]
        g.counts = [arrays[f"counts{lvl}"].astype(np.int32, copy=True) for lvl in range(meta["n_levels"])]
        g._visited = np.zeros(n, dtype=np.int32)
        g._rng.bit_generator.state = meta["rng_state"]
        return g
