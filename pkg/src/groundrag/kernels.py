"""Hot numeric kernels.

Each kernel has a numba implementation (``*_nb``) and a pure-numpy one
(``*_np``). The unsuffixed names point at the numba version unless numba is
unavailable or disabled through ``GROUNDRAG_DISABLE_NUMBA``.

Token sequences are passed as int64 arrays of vocabulary ids; see
:func:`encode_tokens`.
"""

from __future__ import annotations

import heapq

import numpy as np

from ._accel import HAS_NUMBA, jit


def encode_tokens(*sequences: list[str]) -> list[np.ndarray]:
    """Map token strings to shared int64 ids so kernels can compare integers."""
    vocab: dict[str, int] = {}
    out = []
    for seq in sequences:
        out.append(np.fromiter((vocab.setdefault(t, len(vocab)) for t in seq), dtype=np.int64, count=len(seq)))
    return out


# --------------------------------------------------------------------------- #
# LCS

def _lcs_table_np(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # Row recurrence L[i, j] = max_{j' <= j} max(L[i-1, j'], match(i, j') * (L[i-1, j'-1] + 1)),
    # which turns the sequential scan into a cumulative max.
    n, m = a.shape[0], b.shape[0]
    table = np.zeros((n + 1, m + 1), dtype=np.int64)
    for i in range(n):
        prev = table[i]
        step = np.where(b == a[i], prev[:-1] + 1, 0)
        table[i + 1, 1:] = np.maximum.accumulate(np.maximum(prev[1:], step))
    return table


def lcs_length_np(a: np.ndarray, b: np.ndarray) -> int:
    if a.shape[0] == 0 or b.shape[0] == 0:
        return 0
    if a.shape[0] > b.shape[0]:
        a, b = b, a
    prev = np.zeros(b.shape[0] + 1, dtype=np.int64)
    for i in range(a.shape[0]):
        step = np.where(b == a[i], prev[:-1] + 1, 0)
        cur = np.empty_like(prev)
        cur[0] = 0
        cur[1:] = np.maximum.accumulate(np.maximum(prev[1:], step))
        prev = cur
    return int(prev[-1])


def lcs_participation_np(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n, m = a.shape[0], b.shape[0]
    mask_a = np.zeros(n, dtype=np.bool_)
    mask_b = np.zeros(m, dtype=np.bool_)
    if n == 0 or m == 0:
        return mask_a, mask_b
    fwd = _lcs_table_np(a, b)
    total = fwd[n, m]
    if total == 0:
        return mask_a, mask_b
    # bwd[i, j] = LCS(a[i:], b[j:])
    bwd = _lcs_table_np(a[::-1], b[::-1])[::-1, ::-1]
    match = a[:, None] == b[None, :]
    on_path = match & (fwd[:-1, :-1] + 1 + bwd[1:, 1:] == total)
    return on_path.any(axis=1), on_path.any(axis=0)


def _lcs_length_py(a, b):
    n, m = a.shape[0], b.shape[0]
    if n == 0 or m == 0:
        return 0
    prev = np.zeros(m + 1, dtype=np.int64)
    cur = np.zeros(m + 1, dtype=np.int64)
    for i in range(n):
        ai = a[i]
        for j in range(m):
            if ai == b[j]:
                cur[j + 1] = prev[j] + 1
            elif cur[j] >= prev[j + 1]:
                cur[j + 1] = cur[j]
            else:
                cur[j + 1] = prev[j + 1]
        prev, cur = cur, prev
    return prev[m]


def _lcs_participation_py(a, b):
    n, m = a.shape[0], b.shape[0]
    mask_a = np.zeros(n, dtype=np.bool_)
    mask_b = np.zeros(m, dtype=np.bool_)
    if n == 0 or m == 0:
        return mask_a, mask_b
    fwd = np.zeros((n + 1, m + 1), dtype=np.int64)
    for i in range(n):
        for j in range(m):
            if a[i] == b[j]:
                fwd[i + 1, j + 1] = fwd[i, j] + 1
            else:
                fwd[i + 1, j + 1] = max(fwd[i, j + 1], fwd[i + 1, j])
    total = fwd[n, m]
    if total == 0:
        return mask_a, mask_b
    bwd = np.zeros((n + 1, m + 1), dtype=np.int64)
    for i in range(n - 1, -1, -1):
        for j in range(m - 1, -1, -1):
            if a[i] == b[j]:
                bwd[i, j] = bwd[i + 1, j + 1] + 1
            else:
                bwd[i, j] = max(bwd[i + 1, j], bwd[i, j + 1])
    for i in range(n):
        for j in range(m):
            if a[i] == b[j] and fwd[i, j] + 1 + bwd[i + 1, j + 1] == total:
                mask_a[i] = True
                mask_b[j] = True
    return mask_a, mask_b


# --------------------------------------------------------------------------- #
# HNSW layer search (cosine distance on unit vectors: 1 - dot)

def _search_layer_py(query, vectors, links, counts, entries, ef, visited, tag):
    dim = query.shape[0]
    cand = [(0.0, np.int64(0))]
    best = [(0.0, np.int64(0))]
    cand.pop()
    best.pop()
    for e in entries:
        if visited[e] == tag:
            continue
        visited[e] = tag
        d = 1.0
        for t in range(dim):
            d -= query[t] * vectors[e, t]
        heapq.heappush(cand, (d, np.int64(e)))
        heapq.heappush(best, (-d, np.int64(e)))
        if len(best) > ef:
            heapq.heappop(best)
    while len(cand) > 0:
        d, c = heapq.heappop(cand)
        if d > -best[0][0] and len(best) >= ef:
            break
        for i in range(counts[c]):
            nb = np.int64(links[c, i])
            if visited[nb] == tag:
                continue
            visited[nb] = tag
            dn = 1.0
            for t in range(dim):
                dn -= query[t] * vectors[nb, t]
            if len(best) < ef or dn < -best[0][0]:
                heapq.heappush(cand, (dn, nb))
                heapq.heappush(best, (-dn, nb))
                if len(best) > ef:
                    heapq.heappop(best)
    ordered = sorted([(-negd, node) for negd, node in best])
    ids = np.empty(len(ordered), dtype=np.int64)
    dists = np.empty(len(ordered), dtype=np.float64)
    for i in range(len(ordered)):
        dists[i] = ordered[i][0]
        ids[i] = ordered[i][1]
    return ids, dists


def search_layer_np(query, vectors, links, counts, entries, ef, visited, tag):
    """Best-first search over one graph layer, batching neighbour distances."""
    cand: list[tuple[float, int]] = []
    best: list[tuple[float, int]] = []
    fresh = [int(e) for e in entries if visited[e] != tag]
    visited[fresh] = tag
    if fresh:
        dists = 1.0 - vectors[fresh] @ query
        for d, e in zip(dists.tolist(), fresh):
            heapq.heappush(cand, (d, e))
            heapq.heappush(best, (-d, e))
            if len(best) > ef:
                heapq.heappop(best)
    while cand:
        d, c = heapq.heappop(cand)
        if d > -best[0][0] and len(best) >= ef:
            break
        nbrs = links[c, : counts[c]]
        nbrs = nbrs[visited[nbrs] != tag]
        if nbrs.shape[0] == 0:
            continue
        visited[nbrs] = tag
        dists = 1.0 - vectors[nbrs] @ query
        for dn, nb in zip(dists.tolist(), nbrs.tolist()):
            if len(best) < ef or dn < -best[0][0]:
                heapq.heappush(cand, (dn, nb))
                heapq.heappush(best, (-dn, nb))
                if len(best) > ef:
                    heapq.heappop(best)
    ordered = sorted((-negd, node) for negd, node in best)
    ids = np.array([node for _, node in ordered], dtype=np.int64)
    dists = np.array([d for d, _ in ordered], dtype=np.float64)
    return ids, dists


lcs_length_nb = jit(_lcs_length_py)
lcs_participation_nb = jit(_lcs_participation_py)
search_layer_nb = jit(_search_layer_py)

if HAS_NUMBA:
    def lcs_length(a: np.ndarray, b: np.ndarray) -> int:
        return int(lcs_length_nb(a, b))

    lcs_participation = lcs_participation_nb
    search_layer = search_layer_nb
else:
    lcs_length = lcs_length_np
    lcs_participation = lcs_participation_np
    search_layer = search_layer_np


def warmup() -> None:
    """Trigger compilation (or cache load) of every numba kernel."""
    a = np.array([1, 2, 3], dtype=np.int64)
    b = np.array([2, 3, 4], dtype=np.int64)
    lcs_length(a, b)
    lcs_participation(a, b)
    vecs = np.eye(2, dtype=np.float64)
    links = np.zeros((2, 2), dtype=np.int32)
    counts = np.zeros(2, dtype=np.int32)
    search_layer(vecs[0], vecs, links, counts, np.array([0], dtype=np.int64), 1, np.zeros(2, dtype=np.int32), 1)
