"""Compiled vs numpy kernels: W2 merge, transport, and a full fit + predict.

    python benchmarks/bench_kernels.py --sizes 1000,100000 --repeats 5 --out kernels.csv

Reports the best of ``--repeats`` wall times per (task, size, backend) and the
speedup of the compiled kernels. Both backends are checked to agree before
timing.
"""
import argparse
import csv
import sys
import time

import numpy as np

import cfbary.ot1d as ot1d
from cfbary import _pykernels
from cfbary.partition import Dataset
from cfbary.postprocess import FitConfig, fit

try:
    from cfbary import _ckernels
except ImportError:
    _ckernels = None


def best_of(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def tasks(n, rng):
    a = np.sort(rng.normal(size=n))
    b = np.sort(rng.normal(0.3, 2.0, size=n // 2 + 1))
    ga, gb = np.arange(1, a.size + 1) / a.size, np.arange(1, b.size + 1) / b.size
    z = rng.normal(size=n)
    v = rng.random(n)
    s = (rng.random(n) < 0.5).astype(np.int64)
    data = Dataset(v=v, s=s, score=(2 * s - 1) * v + rng.uniform(-0.5, 0.5, n))
    cfg = FitConfig(L=max(1, int(round(n ** (1 / 3)))))

    def full(k):
        ot1d.kernels = k
        try:
            fit(data, cfg).predict_dataset(data)
        finally:
            ot1d.kernels = default

    default = ot1d.kernels
    return {
        "w2_steps": lambda k: k.w2_steps(ga, a, gb, b),
        "transport": lambda k: k.transport(a, gb, b, z),
        "fit_predict": full,
    }


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--sizes", default="1000,10000,100000,1000000")
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="CSV path (default: stdout only)")
    args = p.parse_args(argv)

    if _ckernels is None:
        print("compiled extension not built; nothing to compare", file=sys.stderr)
        return 1
    backends = {"python": _pykernels, "cython": _ckernels}
    rows = []
    for n in (int(x) for x in args.sizes.split(",")):
        rng = np.random.default_rng(args.seed)
        for name, fn in tasks(n, rng).items():
            if name != "fit_predict":
                r_py, r_c = fn(_pykernels), fn(_ckernels)
                if not np.allclose(r_py, r_c, rtol=1e-12, atol=1e-12):
                    print(f"backends disagree on {name} at n={n}", file=sys.stderr)
                    return 1
            t = {b: best_of(lambda: fn(k), args.repeats) for b, k in backends.items()}
            rows.append([name, n, t["python"], t["cython"], t["python"] / t["cython"]])
            print(f"{name:12s} n={n:>8d}  python={t['python'] * 1e3:9.3f} ms  "
                  f"cython={t['cython'] * 1e3:9.3f} ms  speedup={rows[-1][-1]:6.2f}x")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["task", "n", "python_s", "cython_s", "speedup"])
            w.writerows(rows)
    return 0


if __name__ == "__main__":
    sys.exit(main())
