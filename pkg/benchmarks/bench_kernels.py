"""Time the compiled kernels against the numpy fallback at desk-scale sizes.

Usage: python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]
"""
import argparse
import json
import timeit

import numpy as np

from sherbet import _kernels


def cases(rng):
    n, d = 400, 128
    E = rng.uniform(-0.05, 0.05, size=(n, d))
    I = rng.integers(0, n, size=5000)
    J = rng.integers(0, n, size=5000)
    gd = rng.normal(size=5000)
    occ = 40000
    seg = np.sort(rng.integers(0, 6000, size=occ))
    S = rng.normal(size=(occ, 1))
    X = rng.normal(size=(occ, 64))
    P = _kernels.segment_softmax(S, seg, 6000)
    G = rng.normal(size=(occ, 1))
    sizes = rng.integers(1, 20, size=5000)
    indptr = np.concatenate([[0], np.cumsum(sizes)])
    codes = rng.integers(0, n, size=int(indptr[-1]))
    return {
        "poincare_distance_pairs": lambda m: _kernels.poincare_distance_pairs(E, I, J, impl=m),
        "poincare_distance_pairs_grad": lambda m: _kernels.poincare_distance_pairs_grad(
            E, I, J, gd, np.zeros_like(E), impl=m),
        "segment_sum": lambda m: _kernels.segment_sum(X, seg, 6000, impl=m),
        "segment_softmax": lambda m: _kernels.segment_softmax(S, seg, 6000, impl=m),
        "segment_softmax_grad": lambda m: _kernels.segment_softmax_grad(P, G, seg, 6000, impl=m),
        "cooccurrence_counts": lambda m: _kernels.cooccurrence_counts(indptr, codes, n, impl=m),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", help="also write results here")
    args = ap.parse_args(argv)
    backends = _kernels.available_backends()
    results = {}
    print(f"{'kernel':32s}" + "".join(f"{m.BACKEND:>12s}" for m in backends) + "   speedup")
    for name, fn in cases(np.random.default_rng(0)).items():
        row = {}
        for m in backends:
            fn(m)  # warm up
            row[m.BACKEND] = min(timeit.repeat(lambda: fn(m), number=1, repeat=args.repeat))
        results[name] = row
        speed = row["python"] / row["cython"] if "cython" in row else float("nan")
        print(f"{name:32s}" + "".join(f"{row[m.BACKEND] * 1e3:10.2f}ms" for m in backends) + f"   {speed:6.1f}x")
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(results, fh, indent=2, sort_keys=True)


if __name__ == "__main__":
    main()
