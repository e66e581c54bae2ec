"""Compiled vs pure-Python timings for the hot kernels.

    python3 benchmarks/bench_kernels.py [--repeat N]

The pure-Python path is each kernel's ``py_func``, which is exactly what runs
when ``COALITION_MARKET_DISABLE_NUMBA=1`` is set.  Inputs are kept small for
the Python side to finish in seconds.
"""
from __future__ import annotations

import argparse
import statistics
import time

import numpy as np

from coalition_market._accel import NUMBA_ENABLED
from coalition_market.instances import random_market
from coalition_market.leakage import pearson_stream_update
from coalition_market.oracle import _best_with_prefix, _market_arrays, _subset_tables, _tables


def _median_s(fn, repeat):
    out = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        out.append(time.perf_counter() - t0)
    return statistics.median(out)


def _pearson_case(n_rounds):
    streams = np.random.default_rng(0).normal(size=(3, n_rounds))
    pi, pj = (a.astype(np.int64) for a in np.triu_indices(3, 1))

    def run(kernel):
        state = np.zeros((len(pi), 9))
        state[:, 6] = np.nan
        state[:, 8] = -1
        kernel(streams, pi, pj, state, 1e-3, 10.0)

    return run


def _tables_case(M):
    args = _market_arrays(random_market(M, 0))
    return lambda kernel: kernel(*args)


def _search_case(M):
    tables = _tables(random_market(M, 0))
    prefix = np.zeros(1, dtype=np.int64)
    return lambda kernel: kernel(prefix, *tables)


CASES = [
    ("pearson_stream_update, 3 streams x 200k rounds", pearson_stream_update, _pearson_case(200_000)),
    ("subset tables, M=9", _subset_tables, _tables_case(9)),
    ("partition search, M=8 (4140 partitions)", _best_with_prefix, _search_case(8)),
]


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args(argv)
    if not NUMBA_ENABLED:
        print("numba disabled: both columns run the Python kernels")
    print(f"{'kernel':<48} {'numba s':>10} {'python s':>10} {'speed-up':>9}")
    for name, kernel, run in CASES:
        run(kernel)  # compile outside the timed region
        fast = _median_s(lambda: run(kernel), args.repeat)
        slow = _median_s(lambda: run(kernel.py_func), args.repeat)
        print(f"{name:<48} {fast:>10.4f} {slow:>10.4f} {slow / fast:>8.1f}x")


if __name__ == "__main__":
    main()
