"""Compare the compiled and pure-Python FISTA kernels on one frame stack.

    python benchmarks/bench_fista.py [--H 128 --W 160 --T 9 --repeat 3]
"""

import argparse
import time

import numpy as np

from dyan import init_ring
from dyan.dictionary import build_encoder
from dyan.solver import BACKEND, SolverState, fista_batch
from dyan.synth import SynthSpec, generate


def best_time(fn, repeat):
    best, out = np.inf, None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--H", type=int, default=128)
    ap.add_argument("--W", type=int, default=160)
    ap.add_argument("--T", type=int, default=9)
    ap.add_argument("--lam", type=float, default=0.01)
    ap.add_argument("--max-iter", type=int, default=100)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    ps = init_ring()
    state = SolverState.from_dictionary(build_encoder(ps, args.T))
    spec = SynthSpec(modes=((0.95, 0.4, 1.0, 0.0), (1.02, 1.1, 0.5, 0.3)), T=args.T,
                     H=args.H, W=args.W, amp_spread=0.5, seed=0)
    seq, _ = generate(spec)
    Y = np.asarray(seq.data, dtype=np.float64).reshape(args.T, -1)

    print(f"{args.H}x{args.W} pixels, T={args.T}, N={state.D.shape[1]}, "
          f"lam={args.lam}, max_iter={args.max_iter}, threads={args.threads}")
    results = {}
    backends = ["python"] + (["cython"] if BACKEND == "cython" else [])
    for name in backends:
        t, cf = best_time(lambda: fista_batch(state, Y, args.lam, args.max_iter,
                                              num_threads=args.threads, backend=name), args.repeat)
        results[name] = cf
        print(f"  {name:7s} {t:8.3f} s  mean iters {cf.iterations.mean():.1f}")
    if len(results) == 2:
        diff = np.max(np.abs(results["python"].codes - results["cython"].codes))
        print(f"  max |python - cython| = {diff:.2e}")
    else:
        print("  compiled kernel not built; only the python backend was timed")


if __name__ == "__main__":
    main()
