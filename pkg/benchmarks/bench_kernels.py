"""Compiled vs numpy kernels (and the FFT path used by training).

Run: ``python benchmarks/bench_kernels.py [--repeat N] [--json out.json]``
"""
from __future__ import annotations

import argparse
import json
import platform
import timeit

import numpy as np
import torch

from lovmm import kernels
from lovmm.policy.model import correlate_fft

CASES = {
    "correlate_small": dict(H=16, W=32, c=4, k=8, d=3),
    "correlate_desk": dict(H=80, W=160, c=16, k=36, d=3),
}


def _best(fn, repeat: int) -> float:
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def bench_correlate(H, W, c, k, d, repeat):
    rng = np.random.default_rng(0)
    templates = rng.normal(size=(k, c, c, d))
    key = rng.normal(size=(H, W, d))
    row = {}
    ref = kernels.python_impl.correlate(templates, key)
    row["python_s"] = _best(lambda: kernels.python_impl.correlate(templates, key), repeat)
    if kernels.compiled_impl is not None:
        out = kernels.compiled_impl.correlate(templates, key)
        row["max_abs_diff"] = float(np.abs(np.asarray(out) - ref).max())
        row["cython_s"] = _best(lambda: kernels.compiled_impl.correlate(templates, key), repeat)
        row["speedup"] = row["python_s"] / row["cython_s"]
    t = torch.as_tensor(templates.transpose(0, 3, 1, 2).copy())
    kk = torch.as_tensor(key.transpose(2, 0, 1).copy())
    fft = correlate_fft(t, kk).permute(1, 2, 0).numpy()
    row["fft_max_abs_diff"] = float(np.abs(fft - ref).max())
    row["fft_s"] = _best(lambda: correlate_fft(t, kk), repeat)
    return row


def bench_accumulate(repeat, n=200_000, cells=10_000, C=64):
    rng = np.random.default_rng(0)
    idx = rng.integers(0, cells, n)
    emb = rng.normal(size=(n, C))
    z = rng.random(n)

    def run(impl):
        sums, counts, heights = np.zeros((cells, C)), np.zeros(cells, dtype=np.int64), np.zeros(cells)
        impl.accumulate_cells(idx, emb, z, sums, counts, heights)
        return sums

    row = {"python_s": _best(lambda: run(kernels.python_impl), repeat)}
    if kernels.compiled_impl is not None:
        row["max_abs_diff"] = float(np.abs(run(kernels.compiled_impl) - run(kernels.python_impl)).max())
        row["cython_s"] = _best(lambda: run(kernels.compiled_impl), repeat)
        row["speedup"] = row["python_s"] / row["cython_s"]
    return row


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--json")
    args = ap.parse_args(argv)
    torch.set_num_threads(1)
    results = {"backend": kernels.BACKEND, "machine": platform.machine(), "python": platform.python_version()}
    for name, case in CASES.items():
        results[name] = bench_correlate(**case, repeat=args.repeat)
    results["accumulate_cells"] = bench_accumulate(args.repeat)
    for name, row in results.items():
        if isinstance(row, dict):
            print(f"{name:18s} " + "  ".join(f"{k}={v:.4g}" for k, v in row.items()))
        else:
            print(f"{name:18s} {row}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(results, fh, indent=1)
    return results


if __name__ == "__main__":
    main()
