"""Compare the numba kernels with their pure-numpy twins.

Kernel timings call both implementations directly in this process. The
end-to-end timing runs a full multi-step fit in a fresh interpreter per
backend, selected through MSALASSO_DISABLE_NUMBA, and checks that both
backends produce the same coefficients.

    python benchmarks/bench_backends.py [--repeat 5] [--p 500] [--n 100]
"""
import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np

from msalasso import _kernels

END_TO_END = """
import json, sys, time
import numpy as np
from msalasso import _kernels, run_msa_lasso, TuneMethod
from msalasso.simgen import SimConfig, gen_instance
cfg = SimConfig(p={p}, n_train={n}, rho=0.5)
train, val, _ = gen_instance(cfg, 0)
run_msa_lasso(train, TuneMethod.holdout(val), 3)  # warm-up and JIT
t0 = time.perf_counter()
for run in range({repeat}):
    train, val, _ = gen_instance(cfg, run)
    trace = run_msa_lasso(train, TuneMethod.holdout(val), 3)
secs = (time.perf_counter() - t0) / {repeat}
json.dump({{"backend": _kernels.BACKEND, "seconds": secs,
           "beta": trace[3].coefficients.beta.tolist()}}, sys.stdout)
"""


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def kernel_problem(n, p, seed=0):
    rng = np.random.default_rng(seed)
    x = np.asfortranarray(rng.standard_normal((n, p)))
    x -= x.mean(axis=0)
    x /= np.sqrt((x * x).mean(axis=0))
    beta = np.zeros(p)
    beta[:5] = 2.0
    y = x @ beta + rng.standard_normal(n)
    col_sq = (x * x).sum(axis=0)
    lam_max = np.abs(x.T @ y).max()
    return x, y, col_sq, np.full(p, 0.05 * lam_max)


def bench_cd(n, p, repeat):
    x, y, col_sq, pen = kernel_problem(n, p)
    out = {}
    for name in ("numpy", "numba"):
        fn = getattr(_kernels, f"cd_solve_{name}", None)
        if fn is None:
            continue

        def call():
            beta = np.zeros(p)
            r = y.copy()
            fn(x, r, beta, col_sq, pen, 1e-8, 100000)
            return beta

        call()  # compile / warm caches
        out[name] = (best_of(call, repeat), call())
    return out


def bench_matvec(p, repeat):
    v = np.random.default_rng(1).standard_normal(p)
    out = {}
    for name in ("numpy", "numba"):
        fn = getattr(_kernels, f"ar1_matvec_{name}", None)
        if fn is None:
            continue
        fn(v, 0.5)
        out[name] = (best_of(lambda: fn(v, 0.5), repeat), fn(v, 0.5))
    return out


def end_to_end(n, p, repeat):
    code = END_TO_END.format(n=n, p=p, repeat=repeat)
    results = {}
    for disable in ("0", "1"):
        env = dict(os.environ, MSALASSO_DISABLE_NUMBA=disable)
        res = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        rec = json.loads(res.stdout)
        results[rec["backend"]] = rec
    return results


def report(title, res):
    print(title)
    for name, (secs, _) in res.items():
        print(f"  {name:6s} {secs * 1e3:10.3f} ms")
    if len(res) == 2:
        (a, ra), (b, rb) = res["numpy"], res["numba"]
        print(f"  speedup {a / b:8.1f}x   max |diff| {np.max(np.abs(ra - rb)):.2e}")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=100)
    ap.add_argument("--p", type=int, default=500)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--skip-end-to-end", action="store_true")
    args = ap.parse_args(argv)
    if not _kernels.HAVE_NUMBA:
        print("numba is not installed; only the numpy kernels can run")
    report(f"cd_solve, n={args.n}, p={args.p}", bench_cd(args.n, args.p, args.repeat))
    report(f"ar1_matvec, p={args.p * 4}", bench_matvec(args.p * 4, args.repeat * 20))
    if args.skip_end_to_end or not _kernels.HAVE_NUMBA:
        return
    res = end_to_end(args.n, args.p, max(1, args.repeat // 2))
    print(f"3-step fit end to end, n={args.n}, p={args.p} (mean per fit)")
    for name, rec in res.items():
        print(f"  {name:6s} {rec['seconds']:10.3f} s")
    diff = np.max(np.abs(np.array(res["numpy"]["beta"]) - np.array(res["numba"]["beta"])))
    print(f"  speedup {res['numpy']['seconds'] / res['numba']['seconds']:8.1f}x   max |diff| {diff:.2e}")


if __name__ == "__main__":
    main()
