"""Compare the compiled kernels with the numpy fallback on market games.

    python benchmarks/bench_kernels.py --sizes 20 50 --iters 20000
"""
import argparse
import time

import numpy as np

from tvnash import kernels
from tvnash.cournot import generate_instance
from tvnash.engine import centralized_ne
from tvnash.experiments import certify
from tvnash.network import parse_graph_spec


def bench(N: int, iters: int, repeats: int) -> dict:
    game = generate_instance(N=N, seed=0).game
    seq = parse_graph_spec("er:0.2", N, family_size=5, seed=0)
    alpha = certify(game, seq, "alg1").alpha
    x_star = centralized_ne(game).x
    args = (kernels.ALG1, seq.weight_array(), seq.indices(0, iters),
            np.zeros((N, game.n)), game.gamma, game.c, game.owner.astype(np.intp),
            game.lo, game.hi, alpha, 0.0, x_star, True, 0.0, 1e12)
    row = {"N": N, "n": game.n, "iters": iters}
    outs = {}
    backends = [("python", kernels.fallback)]
    if kernels.BACKEND == "cython":
        backends.append(("cython", kernels.backend))
    for name, mod in backends:
        best = np.inf
        for _ in range(repeats):
            t0 = time.perf_counter()
            outs[name] = mod.run_affine(*args)
            best = min(best, time.perf_counter() - t0)
        row[name] = best
    if "cython" in outs:
        row["speedup"] = row["python"] / row["cython"]
        row["max_abs_diff"] = float(np.abs(outs["python"][0] - outs["cython"][0]).max())
    return row


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", type=int, nargs="+", default=[20, 50])
    ap.add_argument("--iters", type=int, default=20000)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()
    print(f"backend: {kernels.BACKEND}")
    for N in args.sizes:
        r = bench(N, args.iters, args.repeats)
        line = f"N={r['N']:<4} n={r['n']:<4} iters={r['iters']} python={r['python']:.3f}s"
        if "cython" in r:
            line += (f" cython={r['cython']:.3f}s speedup={r['speedup']:.1f}x"
                     f" max|diff|={r['max_abs_diff']:.1e}")
        print(line)


if __name__ == "__main__":
    main()
