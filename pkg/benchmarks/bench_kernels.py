#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-Python fallback.

Times the per-step loss/gradient routines over random logit vectors and a
full toy-model training run under each backend, then cross-checks that both
produced bit-identical outputs.

Usage: python benchmarks/bench_kernels.py [--trials 20000] [--vocab 32]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from pplpipe import _kernels, toylm
from pplpipe.objective import CLAMP_EPS


def time_kernel(backend, fn_name: str, cases, eps_arg: bool) -> tuple[float, float]:
    fn = getattr(backend, fn_name)
    acc = 0.0
    t0 = time.perf_counter()
    if fn_name == "softmax":
        for z, t in cases:
            acc += float(fn(z)[t])
    elif eps_arg:
        for z, t in cases:
            acc += fn(z, t, CLAMP_EPS)[0]
    else:
        for z, t in cases:
            acc += fn(z, t)[0]
    return time.perf_counter() - t0, acc


def bench_kernels(trials: int, vocab: int) -> None:
    rng = np.random.default_rng(7)
    cases = [
        (rng.uniform(-10, 10, vocab), int(rng.integers(0, vocab))) for _ in range(trials)
    ]
    rows = []
    for fn_name, eps_arg in (
        ("softmax", False),
        ("ce_loss_grad", False),
        ("ul_loss_grad", True),
    ):
        times = {}
        sums = {}
        for name in _kernels.available_backends():
            backend = _kernels.get_backend(name)
            elapsed, acc = time_kernel(backend, fn_name, cases, eps_arg)
            times[name] = elapsed
            sums[name] = acc
        if len(sums) == 2 and sums["python"] != sums["cython"]:
            raise SystemExit(f"{fn_name}: backends disagree bitwise")
        rows.append((fn_name, times))
    print(f"\nper-step kernels ({trials} calls, V={vocab}):")
    _print_table(rows, trials)


def bench_training(steps: int) -> None:
    task = toylm.build_overconfidence_task()
    model = toylm.model_for_task(task)
    rows = []
    traces = {}
    times = {}
    for name in _kernels.available_backends():
        _kernels.use_backend(name)
        t0 = time.perf_counter()
        _, trace = toylm.train(
            model, task, toylm.Objective.PROMOTE_SUPPRESS,
            alpha=toylm.DEMO_UL_WEIGHT, steps=steps, step_size=0.5,
        )
        times[name] = time.perf_counter() - t0
        traces[name] = trace
    if len(traces) == 2:
        for a, b in zip(traces["python"], traces["cython"]):
            if a != b:
                raise SystemExit("training traces disagree between backends")
    rows.append(("train (full objective)", times))
    print(f"\ntoy training ({steps} full-batch steps):")
    _print_table(rows, steps)


def _print_table(rows, per_count: int) -> None:
    names = sorted({name for _, times in rows for name in times})
    header = f"{'kernel':<24}" + "".join(f"{n:>12}" for n in names)
    if len(names) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for fn_name, times in rows:
        line = f"{fn_name:<24}"
        for n in names:
            line += f"{times[n] * 1e6 / per_count:>10.2f}us"
        if len(names) == 2:
            line += f"{times['python'] / times['cython']:>9.1f}x"
        print(line)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--trials", type=int, default=20000)
    parser.add_argument("--vocab", type=int, default=32)
    parser.add_argument("--train-steps", type=int, default=500)
    args = parser.parse_args()

    print(f"available backends: {', '.join(_kernels.available_backends())}")
    if "cython" not in _kernels.available_backends():
        print("compiled extension not built; benchmarking the fallback only")
    bench_kernels(args.trials, args.vocab)
    default = "cython" if "cython" in _kernels.available_backends() else "python"
    try:
        bench_training(args.train_steps)
    finally:
        _kernels.use_backend(default)
    print("\nbackends agree bitwise on every benchmarked output")


if __name__ == "__main__":
    main()
