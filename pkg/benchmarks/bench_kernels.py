"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--n 200] [--u 4] [--repeat 20]
"""
import argparse
import timeit

import numpy as np

from subspace_perturb import _kernels_py as py
from subspace_perturb.graph import build_constraint_matrices, generate_geometric_graph

try:
    from subspace_perturb import _kernels as cy
except ImportError:
    cy = None


def cases(n, u, seed):
    g = generate_geometric_graph(n, seed=seed)
    cm = build_constraint_matrices(g, u)
    ei, ej = cm.edge_index
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, u))
    x2 = rng.standard_normal((n, u))
    lam = rng.standard_normal((2 * g.m, u))
    z = rng.standard_normal((g.m, u))
    A = rng.standard_normal((3, 40))
    G = A.T @ A
    h = A.T @ rng.standard_normal(3)
    return g.m, {
        "pdmm_aggregate": lambda k: k.pdmm_aggregate(x, lam, ei, ej, 0.4),
        "pdmm_dual_update": lambda k: k.pdmm_dual_update(x2, x, lam, ei, ej, 0.4, 0.5),
        "admm_aggregate": lambda k: k.admm_aggregate(z, lam, ei, ej, 0.4, n),
        "admm_edge_update": lambda k: k.admm_edge_update(x, lam, ei, ej, 0.4),
        "incidence_T": lambda k: k.incidence_T(z, ei, ej, n),
        "lasso_cd": lambda k: k.lasso_cd(G, h, 0.1, np.zeros(40), 1e-12, 20000),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=200)
    ap.add_argument("--u", type=int, default=4)
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    m, fns = cases(args.n, args.u, args.seed)
    print(f"n={args.n} m={m} u={args.u}  (best of 5, {args.repeat} calls each, microseconds per call)")
    print(f"{'kernel':<18}{'numpy':>12}{'cython':>12}{'speedup':>10}")
    for name, fn in fns.items():
        t_py = min(timeit.repeat(lambda: fn(py), number=args.repeat, repeat=5)) / args.repeat
        if cy is None:
            print(f"{name:<18}{t_py * 1e6:12.1f}{'n/a':>12}{'':>10}")
            continue
        t_cy = min(timeit.repeat(lambda: fn(cy), number=args.repeat, repeat=5)) / args.repeat
        print(f"{name:<18}{t_py * 1e6:12.1f}{t_cy * 1e6:12.1f}{t_py / t_cy:9.1f}x")


if __name__ == "__main__":
    main()
