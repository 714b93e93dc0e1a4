"""Compare the compiled and pure-Python kernel backends.

Times the three hot kernels (flat top-k scan, IVF probe scan over a subset of
rows, k-means assignment) on seeded unit keys, checks that both backends return
identical results, and prints one JSON object per kernel.

    python benchmarks/bench_kernels.py --n 100000 --dim 64 --repeat 20
"""
import argparse
import json
import platform
import time

import numpy as np

from tuna._kernels import backends


def _unit_rows(rng, n, dim):
    x = rng.standard_normal((n, dim))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def _time(fn, repeat):
    fn()  # warm-up
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return 1000.0 * float(np.median(times))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--n", type=int, default=100_000)
    ap.add_argument("--dim", type=int, default=64)
    ap.add_argument("--k", type=int, default=5)
    ap.add_argument("--nlist", type=int, default=64)
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    keys_t = np.ascontiguousarray(_unit_rows(rng, args.n, args.dim).astype(np.float32).T)
    query = _unit_rows(rng, 1, args.dim)[0]
    rows = np.sort(rng.choice(args.n, size=args.n // 8, replace=False)).astype(np.int64)
    centroids = _unit_rows(rng, args.nlist, args.dim).astype(np.float32)

    found = backends()
    cases = {
        "scan_topk": lambda m: m.scan_topk(keys_t, query, args.k, None, -1),
        "scan_topk_subset": lambda m: m.scan_topk(keys_t, query, args.k, rows, -1),
        "assign_nearest": lambda m: m.assign_nearest(keys_t, centroids),
    }
    print(json.dumps({"machine": platform.machine(), "python": platform.python_version(),
                      "n": args.n, "dim": args.dim, "backends": sorted(found)}))
    for name, call in cases.items():
        report = {"kernel": name}
        outputs = {}
        for label, mod in sorted(found.items()):
            outputs[label] = call(mod)
            report[f"{label}_ms"] = round(_time(lambda: call(mod), args.repeat), 3)
        if len(outputs) == 2:
            a, b = outputs["cython"], outputs["python"]
            report["identical"] = all(np.array_equal(x, y) for x, y in zip(a, b))
            report["speedup"] = round(report["python_ms"] / max(report["cython_ms"], 1e-9), 2)
        print(json.dumps(report))


if __name__ == "__main__":
    main()
