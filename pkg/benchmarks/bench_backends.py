"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_backends.py [--repeat 3]

Both backends consume the same inputs; the script checks that their outputs
agree before reporting times.
"""
import argparse
import time

import numpy as np

from heisenberg_mf import _backend


def _best(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        res = fn()
        best = min(best, time.perf_counter() - t0)
    return best, res


def bench_ring(k, repeat, n=400, m=400, q=9):
    rng = np.random.default_rng(0)
    s_t, t_t = rng.uniform(0, 9, n), rng.uniform(-9, 9, n)
    S, T, W = rng.uniform(0, 9, (m, q)), rng.uniform(-9, 9, (m, q)), rng.random((m, q))

    def run():
        out = np.empty((n, m))
        k.ring_log_sum(s_t, t_t, S, T, W, out)
        return out
    return _best(run, repeat)


def bench_mcmc(k, repeat, n=8, sweeps=2000):
    rng = np.random.default_rng(1)
    X0 = rng.uniform(-0.5, 0.5, (n, 3))
    steps = rng.standard_normal((sweeps, n, 3))
    logu = np.log(rng.random((sweeps, n)))

    def run():
        X = X0.copy()
        out = np.empty((sweeps, n, 3))
        k.metropolis_sweeps(X, steps, logu, 2.0 / (n - 1), (-2.0, 0.0, 0.0), 81.0, 0, 0, 1, out)
        return out
    return _best(run, repeat)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    names = _backend.available()
    print(f"available backends: {', '.join(names)} (default: {_backend.BACKEND})")
    for label, bench in (("ring_log_sum 400x400x9", bench_ring), ("metropolis 8 particles x 2000 sweeps", bench_mcmc)):
        results = {name: bench(_backend.load(name), args.repeat) for name in names}
        outs = [r[1] for r in results.values()]
        same = all(np.allclose(o, outs[0], rtol=1e-12, atol=1e-12) for o in outs)
        line = "  ".join(f"{name}={t * 1e3:9.2f} ms" for name, (t, _) in results.items())
        if len(results) == 2:
            line += f"  speedup={results['python'][0] / results['compiled'][0]:6.1f}x"
        print(f"{label:40s} {line}  outputs agree: {same}")


if __name__ == "__main__":
    main()
