import numpy as np
import pytest

from groundrag.errors import DimensionMismatch
from groundrag.index.hnsw import HnswGraph, HnswParams


def unit_vectors(n, d, seed):
    v = np.random.default_rng(seed).normal(size=(n, d))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def brute_knn(data, q, k):
    sims = data @ (q / np.linalg.norm(q))
    return np.argsort(-sims, kind="stable")[:k]


@pytest.fixture(scope="module")
def graph_800():
    data = unit_vectors(800, 24, 0)
    g = HnswGraph(HnswParams(M=8, ef_construction=100, ef_search=60))
    for v in data:
        g.add(v)
    return g, data


def test_empty_and_single():
    g = HnswGraph()
    assert g.search(np.ones(4), 3) == []
    g.add([1.0, 0, 0, 0])
    assert g.search([1.0, 0, 0, 0], 3) == [(0, 1.0)]


def test_dimension_checks():
    g = HnswGraph()
    g.add(np.ones(8))
    with pytest.raises(DimensionMismatch):
        g.add(np.ones(4))
    with pytest.raises(DimensionMismatch):
        g.search(np.ones(4), 1)
    with pytest.raises(ValueError):
        g.add(np.zeros(8))


def test_self_query(graph_800):
    g, data = graph_800
    for i in range(0, 800, 37):
        top = g.search(data[i], 1)[0]
        assert top[0] == i
        assert abs(top[1] - 1.0) < 1e-6


def test_recall_against_brute_force(graph_800):
    g, data = graph_800
    queries = unit_vectors(100, 24, 99)
    hits = 0
    for q in queries:
        hits += len(set(i for i, _ in g.search(q, 10)) & set(brute_knn(data, q, 10).tolist()))
    assert hits / 1000 >= 0.9


def test_results_sorted_and_match_exact_similarity(graph_800):
    g, data = graph_800
    q = unit_vectors(1, 24, 5)[0]
    res = g.search(q, 10)
    sims = [s for _, s in res]
    assert sims == sorted(sims, reverse=True)
    for i, s in res:
        assert abs(s - float(data[i] @ q)) < 1e-12
    assert [i for i, _ in g.exact_search(q, 10)] == brute_knn(data, q, 10).tolist()


def test_degree_bounds_and_reachability(graph_800):
    g, _ = graph_800
    M = g.params.M
    for lvl, counts in enumerate(g.counts):
        cap = 2 * M if lvl == 0 else M
        live = counts[: g.n]
        assert live.max() <= cap
        nodes = np.flatnonzero(g.levels[: g.n] >= lvl)
        for node in nodes[:50]:
            nb = g.neighbors(int(node), lvl)
            assert len(set(nb.tolist())) == len(nb)
            assert int(node) not in nb.tolist()
            # neighbours on a level exist on that level
            assert np.all(g.levels[nb] >= lvl)
    assert g.reachable().all()


def test_level_distribution_is_geometric():
    g = HnswGraph(HnswParams(M=16, ef_construction=16))
    for v in unit_vectors(3000, 4, 1):
        g.add(v)
    frac_upper = float(np.mean(g.levels[: g.n] >= 1))
    assert abs(frac_upper - 1 / 16) < 0.02
    assert g.levels[g.entry_point] == g.max_level == g.levels[: g.n].max()


def test_build_is_deterministic_for_seed():
    data = unit_vectors(200, 8, 2)
    a, b = HnswGraph(HnswParams(M=6, ef_construction=40)), HnswGraph(HnswParams(M=6, ef_construction=40))
    for v in data:
        a.add(v)
        b.add(v)
    for lvl in range(len(a.links)):
        assert np.array_equal(a.links[lvl][: a.n], b.links[lvl][: b.n])


def test_state_restore_then_continue_matches_uninterrupted_build():
    data = unit_vectors(300, 8, 4)
    full = HnswGraph(HnswParams(M=6, ef_construction=40))
    part = HnswGraph(HnswParams(M=6, ef_construction=40))
    for v in data[:150]:
        full.add(v)
        part.add(v)
    restored = HnswGraph.from_state(part.state_meta(), part.state_arrays())
    for v in data[150:]:
        full.add(v)
        restored.add(v)
    q = unit_vectors(1, 8, 8)[0]
    assert full.search(q, 10) == restored.search(q, 10)
