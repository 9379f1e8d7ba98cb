"""Compare the numba and pure-numpy kernel backends.

Each backend runs in its own interpreter because the backend is fixed at import
time by ``ZICS_BACKEND``. Numba compilation is excluded by a warm-up call.

    python benchmarks/bench_kernels.py [--repeat 5] [--json out.json]
"""
import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
import numpy as np
from zics import kernels, _backend
from zics.corpus import load
from zics.moments import build_basis
from zics.oracle import SsaConfig, ssa_sample
from zics.solver import SolverConfig, solve_adaptive
from zics.statespace import StateSpace, falling_factorial_tables

repeat = int(sys.argv[1])

def best(fn):
    fn()  # warm-up (JIT compile, caches)
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)

space = StateSpace.from_max(199, 199)
idx = np.array(build_basis(2, 8).lower)
tables = falling_factorial_tables(space, 8)
offsets = space.offsets()
F = kernels.product_features(offsets, tables, idx)
rng = np.random.default_rng(0)
w = rng.random(space.size)
w /= w.sum()

wilhelm, wspace = load("wilhelm")
bd, bdspace = load("birth_death")
out = {
    "backend": _backend.BACKEND,
    "features_40k_x44": best(lambda: kernels.product_features(offsets, tables, idx)),
    "column_sums_40k_x44": best(lambda: kernels.weighted_column_sums(w, F)),
    "gram_40k_44x44": best(lambda: kernels.weighted_gram(w, F, F)),
    "ssa_birth_death_T1e4": best(lambda: ssa_sample(bd, SsaConfig(seed=1, total_time=1e4), bdspace)),
    "solve_wilhelm_order8": best(lambda: solve_adaptive(wilhelm, wspace, SolverConfig())),
}
print(json.dumps(out))
"""


def run(backend, repeat):
    env = dict(os.environ, ZICS_BACKEND=backend)
    proc = subprocess.run([sys.executable, "-c", WORKER, str(repeat)], env=env, capture_output=True, text=True)
    if proc.returncode:
        sys.exit(f"{backend} worker failed:\n{proc.stderr}")
    return json.loads(proc.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--json", help="also write the timings here")
    args = ap.parse_args()
    res = {b: run(b, args.repeat) for b in ("numba", "numpy")}
    keys = [k for k in res["numba"] if k != "backend"]
    print(f"{'benchmark':28s} {'numba [s]':>11s} {'numpy [s]':>11s} {'speedup':>8s}")
    for k in keys:
        a, b = res["numba"][k], res["numpy"][k]
        print(f"{k:28s} {a:11.5f} {b:11.5f} {b / a:8.1f}x")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(res, fh, indent=2)


if __name__ == "__main__":
    main()
