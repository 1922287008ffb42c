"""Compare the numba kernels with their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--n-vectors 2000]

Prints the best wall time per kernel for each backend and the speedup.
"""

import argparse
import time

import numpy as np

from groundrag import kernels
from groundrag.index import hnsw


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def lcs_pairs(rng, n_pairs=200):
    return [(rng.integers(0, 50, rng.integers(10, 60)), rng.integers(0, 50, rng.integers(200, 1000)))
            for _ in range(n_pairs)]


def build_graph(data, search_layer):
    saved = kernels.search_layer
    kernels.search_layer = search_layer
    try:
        g = hnsw.HnswGraph(hnsw.HnswParams(M=16, ef_construction=200))
        for v in data:
            g.add(v)
        return g
    finally:
        kernels.search_layer = saved


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--n-vectors", type=int, default=2000)
    ap.add_argument("--dim", type=int, default=32)
    args = ap.parse_args()

    if not kernels.HAS_NUMBA:
        raise SystemExit("numba is unavailable or disabled; nothing to compare")
    kernels.warmup()

    rng = np.random.default_rng(0)
    pairs = lcs_pairs(rng)
    data = rng.normal(size=(args.n_vectors, args.dim))
    data /= np.linalg.norm(data, axis=1, keepdims=True)

    cases = {
        "lcs_length (200 pairs)": (
            lambda: [kernels.lcs_length_np(a, b) for a, b in pairs],
            lambda: [kernels.lcs_length_nb(a, b) for a, b in pairs]),
        "lcs_participation (200 pairs)": (
            lambda: [kernels.lcs_participation_np(a, b) for a, b in pairs],
            lambda: [kernels.lcs_participation_nb(a, b) for a, b in pairs]),
        f"hnsw build ({args.n_vectors} x {args.dim})": (
            lambda: build_graph(data, kernels.search_layer_np),
            lambda: build_graph(data, kernels.search_layer_nb)),
    }
    print(f"{'kernel':34s} {'numpy s':>10s} {'numba s':>10s} {'speedup':>8s}")
    for name, (np_fn, nb_fn) in cases.items():
        # the graph build is slow on the numpy path, one run is enough there
        reps = 1 if name.startswith("hnsw") else args.repeat
        t_np = best_of(np_fn, reps)
        t_nb = best_of(nb_fn, reps)
        print(f"{name:34s} {t_np:10.4f} {t_nb:10.4f} {t_np / t_nb:7.1f}x")


if __name__ == "__main__":
    main()
