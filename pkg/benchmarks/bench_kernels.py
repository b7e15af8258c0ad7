"""Time the compiled segment kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--edges 20000] [--width 64] [--repeat 20]
"""
import argparse
import time

import numpy as np

from synergraph.diffcore import kernels


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--edges", type=int, default=20000)
    ap.add_argument("--nodes", type=int, default=2000)
    ap.add_argument("--width", type=int, default=64)
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    src = rng.normal(size=(args.edges, args.width))
    scores = rng.normal(size=args.edges)
    index = rng.integers(0, args.nodes, size=args.edges)

    backends = ["python"] + (["cython"] if kernels.BACKEND == "cython" else [])
    cases = {
        "scatter_add_rows": lambda b: kernels.scatter_add_rows(src, index, args.nodes, backend=b),
        "segment_max": lambda b: kernels.segment_max(scores, index, args.nodes, backend=b),
        "segment_softmax": lambda b: kernels.segment_softmax(scores, index, args.nodes, backend=b),
    }
    print(f"edges={args.edges} nodes={args.nodes} width={args.width} default backend={kernels.BACKEND}")
    print(f"{'kernel':<18}" + "".join(f"{b:>12}" for b in backends) + ("     speedup" if len(backends) == 2 else ""))
    for name, fn in cases.items():
        ref = fn("python")
        row = [best_of(lambda: fn(b), args.repeat) for b in backends]
        line = f"{name:<18}" + "".join(f"{t * 1e3:>10.3f}ms" for t in row)
        if len(backends) == 2:
            # results must agree exactly, otherwise the timing is meaningless
            assert np.array_equal(ref, fn("cython")), name
            line += f"{row[0] / row[1]:>11.1f}x"
        print(line)
    if len(backends) == 1:
        print("compiled extension not built; only the numpy fallback was timed")


if __name__ == "__main__":
    main()
