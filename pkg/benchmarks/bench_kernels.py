"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Both backends are imported directly, so the environment variable that forces
the fallback does not matter here. Results go to stdout as a small table.
"""

import argparse
import time

import numpy as np

from rcc import _kernels_py
from rcc.graphdata import generate_synthetic_homophily_graph

try:
    from rcc import _kernels_c
except ImportError:
    _kernels_c = None


def best_time(fn, repeat):
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def cases(seed=0):
    for n, deg in ((1_000, 4.0), (10_000, 8.0), (50_000, 8.0)):
        g = generate_synthetic_homophily_graph(n, 3, 3, 0.9, 0.5, deg, seed=seed)
        yield g


def bench_neighbor_sum(backend, g, repeat):
    values = np.random.default_rng(0).random((g.n, 3))
    adj = g.adjacency
    return best_time(lambda: backend.neighbor_sum(adj.indptr, adj.indices, values), repeat)


def bench_gibbs(backend, g, repeat, sweeps):
    rng = np.random.default_rng(1)
    adj = g.adjacency
    base = np.ascontiguousarray(rng.normal(size=(g.n, 3)))
    theta_r = np.ascontiguousarray(rng.normal(size=(3, 3)))
    uniforms = rng.random((sweeps, g.n))
    labels = rng.integers(0, 3, g.n)

    def run():
        backend.gibbs_chain(adj.indptr, adj.indices, base, theta_r, labels.copy(), uniforms,
                            1, 1.0, 1, 0.5, 0)
    return best_time(run, repeat)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--sweeps", type=int, default=5, help="Gibbs sweeps per timing")
    args = ap.parse_args()
    if _kernels_c is None:
        print("compiled extension not built; only the fallback can be timed")
    print(f"{'kernel':<14}{'nodes':>8}{'edges':>9}{'python s':>12}{'cython s':>12}{'speedup':>9}")
    for g in cases():
        for name, fn in (("neighbor_sum", lambda b: bench_neighbor_sum(b, g, args.repeat)),
                         ("gibbs_chain", lambda b: bench_gibbs(b, g, 1, args.sweeps))):
            py = fn(_kernels_py)
            c = fn(_kernels_c) if _kernels_c is not None else float("nan")
            print(f"{name:<14}{g.n:>8}{g.adjacency.num_edges:>9}{py:>12.5f}{c:>12.5f}"
                  f"{py / c:>8.1f}x")


if __name__ == "__main__":
    main()
