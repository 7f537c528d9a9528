"""Time the LSTM kernels with and without numba.

    python3 benchmarks/bench_kernels.py [--repeat N]

Covers the two workloads the package actually runs: a single cell step on
one vector (RNNG stack updates, incremental scoring) and a full batched
sequence forward/backward (word-LM and ActionLSTM training).
"""
import argparse
import timeit

import numpy as np

from coordlm.nn._kernels import jit_kernels, py_kernels


def make_inputs(rng, T, B, n, d):
    Wx = rng.uniform(-0.1, 0.1, (n, 4 * d))
    Wh = rng.uniform(-0.1, 0.1, (d, 4 * d))
    b = np.zeros(4 * d)
    X = rng.normal(size=(T, B, n))
    h0 = np.zeros((B, d))
    c0 = np.zeros((B, d))
    return Wx, Wh, b, X, h0, c0


def bench(kernels, T, B, d, repeat):
    rng = np.random.default_rng(0)
    Wx, Wh, b, X, h0, c0 = make_inputs(rng, T, B, d, d)
    x1, h1, c1 = X[0, :1], h0[:1], c0[:1]

    def cell():
        kernels.cell_forward(Wx, Wh, b, x1, h1, c1)

    def seq():
        H, C, G = kernels.seq_forward(Wx, Wh, b, X, h0, c0)
        kernels.seq_backward(Wx, Wh, X, h0, c0, H, C, G, np.ones_like(H))

    cell(), seq()  # warm up (triggers compilation for the jit variant)
    n_cell = 2000
    t_cell = min(timeit.repeat(cell, number=n_cell, repeat=repeat)) / n_cell
    t_seq = min(timeit.repeat(seq, number=5, repeat=repeat)) / 5
    return t_cell, t_seq


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--T", type=int, default=12)
    ap.add_argument("--B", type=int, default=32)
    ap.add_argument("--dim", type=int, default=64)
    args = ap.parse_args()

    variants = [("numpy", py_kernels)]
    if jit_kernels is not None:
        variants.append(("numba", jit_kernels))
    else:
        print("numba is not installed; timing the numpy path only")
    results = {}
    print(f"T={args.T} B={args.B} d={args.dim}")
    print(f"{'backend':8s} {'cell step (us)':>15s} {'seq fwd+bwd (ms)':>18s}")
    for name, k in variants:
        t_cell, t_seq = bench(k, args.T, args.B, args.dim, args.repeat)
        results[name] = (t_cell, t_seq)
        print(f"{name:8s} {t_cell * 1e6:15.2f} {t_seq * 1e3:18.3f}")
    if len(results) == 2:
        (pc, ps), (jc, js) = results["numpy"], results["numba"]
        print(f"speedup  {pc / jc:15.2f}x {ps / js:17.2f}x")


if __name__ == "__main__":
    main()
