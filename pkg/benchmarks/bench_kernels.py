"""Compare the compiled and pure-Python kernel backends.

Usage: python3 benchmarks/bench_kernels.py [--N 256] [--steps 200000] [--repeat 3]
"""

import argparse
import time

import numpy as np

from lrperc import Box, Kernel, sample_config
from lrperc import _kernels
from lrperc.electro import grid_network


def best_of(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--N", type=int, default=256, help="side of the d=2 labeling box")
    ap.add_argument("--steps", type=int, default=200_000, help="walk length")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    cfg = sample_config(Kernel(2, 3.0, 1.0), Box(2, args.N), 1)
    net = grid_network(64, 2)
    indptr, indices, cumw = net.adjacency()
    u = np.random.default_rng(0).random(args.steps)

    print(f"{'kernel':<16}{'backend':<10}{'seconds':>10}")
    results = {}
    for name in sorted(_kernels.BACKENDS):
        t1, lab = best_of(lambda: _kernels.label_components(cfg.box.n_sites, cfg.bonds, name),
                          args.repeat)
        t2, path = best_of(lambda: _kernels.walk_path(indptr, indices, cumw, 0, u, name),
                           args.repeat)
        results[name] = (lab, path)
        print(f"{'label ' + str(args.N) + '^2':<16}{name:<10}{t1:>10.4f}")
        print(f"{'walk ' + str(args.steps):<16}{name:<10}{t2:>10.4f}")
    if len(results) == 2:
        (la, pa), (lb, pb) = results.values()
        same = np.array_equal(la, lb) and np.array_equal(pa, pb)
        print(f"backends agree: {same}")
    else:
        print("compiled backend not built; only the pure-Python timings are shown")


if __name__ == "__main__":
    main()
