"""Numba vs pure-numpy kernel timings.

Both backends stay importable side by side, so each kernel is timed on
identical inputs in one process. ``--train`` additionally times full training
iterations in two subprocesses, one per ``BGFD_NUMBA`` setting.

    python3 benchmarks/bench_kernels.py [--repeat 20] [--train] [--json out.json]
"""
import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np

from bgfd.kernels import _numba, _numpy


def cases(rng):
    xp = rng.standard_normal((8, 32, 18, 18))
    cols = _numpy.im2col(xp, 3, 3, 1, 16, 16)
    up = rng.standard_normal((8, 32, 16, 16))
    g = rng.standard_normal((8, 32, 32, 32))
    x, y = rng.standard_normal(8192), rng.standard_normal(8192)
    gh = rng.standard_normal((32, 32))
    return {
        "im2col 8x32x16x16 k3": lambda m: m.im2col(xp, 3, 3, 1, 16, 16),
        "col2im 8x32x16x16 k3": lambda m: m.col2im(cols, 18, 18, 1),
        "upsample2x 8x32x16x16": lambda m: m.upsample2x(up),
        "upsample2x backward": lambda m: m.upsample2x_backward(g),
        "soft joint hist 8192/32": lambda m: m.soft_joint_hist(x, y, -4.0, 4.0, 32),
        "soft joint hist backward": lambda m: m.soft_joint_hist_backward(x, y, -4.0, 4.0, 32, gh),
        "hard joint hist 8192/32": lambda m: m.hard_joint_hist(x, y, -4.0, 4.0, 32),
    }


def best_of(fn, repeat):
    fn()  # warm-up (triggers JIT compilation on the numba side)
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


TRAIN_SNIPPET = """
import time
from bgfd.data import Dataset, SynthConfig, generate_dataset
from bgfd.harness.config import ModelConfig
from bgfd.harness.train import train
from bgfd.kernels import BACKEND
ds = Dataset.from_pairs(generate_dataset(SynthConfig(count=8)))
cfg = ModelConfig(); cfg.optim.iterations = 2
train(cfg, ds)
cfg.optim.iterations = 20
t = time.perf_counter(); train(cfg, ds); print(BACKEND, (time.perf_counter() - t) / 20)
"""


def train_iteration(flag):
    env = dict(os.environ, BGFD_NUMBA=flag)
    out = subprocess.run([sys.executable, "-c", TRAIN_SNIPPET], env=env, capture_output=True, text=True, check=True)
    backend, secs = out.stdout.split()
    return backend, float(secs)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--train", action="store_true", help="also time full-model training iterations")
    ap.add_argument("--json", help="write results here")
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    rows = []
    print(f"{'kernel':<28}{'numpy ms':>10}{'numba ms':>10}{'speedup':>9}")
    for name, fn in cases(rng).items():
        a = np.asarray(fn(_numpy))
        b = np.asarray(fn(_numba))
        assert np.allclose(a, b, rtol=1e-10, atol=1e-12), name
        t_np, t_nb = best_of(lambda: fn(_numpy), args.repeat), best_of(lambda: fn(_numba), args.repeat)
        rows.append({"kernel": name, "numpy_s": t_np, "numba_s": t_nb})
        print(f"{name:<28}{t_np * 1e3:>10.3f}{t_nb * 1e3:>10.3f}{t_np / t_nb:>8.2f}x")

    result = {"kernels": rows}
    if args.train:
        per_iter = dict(train_iteration(flag) for flag in ("0", "1"))
        result["train_iteration_s"] = per_iter
        print(f"full-model iteration (batch 4): numpy {per_iter['numpy']:.3f}s  numba {per_iter['numba']:.3f}s")
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(result, fh, indent=2)


if __name__ == "__main__":
    main()
