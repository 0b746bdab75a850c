"""Benchmark the numba and numpy kernel backends side by side.

Run:  python benchmarks/bench_kernels.py

The library picks its backend once at import (SEMLINK_NUMBA=0 forces the
numpy path); this script calls both implementations directly so one process
can compare them.  The first numba call includes JIT compilation and is
timed separately.
"""

import time

import numpy as np

from semlink import kernels
from semlink.channel import ChannelConfig, awgn, bpsk_map
from semlink.classical.ldpc import LdpcCode, llr_from_awgn


def timeit(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_crc():
    rng = np.random.default_rng(0)
    bits = rng.integers(0, 2, size=1024).astype(np.uint8)
    sweep = 200

    def run(fn):
        def body():
            for _ in range(sweep):
                fn(bits)
        return body

    t_first = timeit(run(kernels.crc16_bits_numba), 1)
    t_numba = timeit(run(kernels.crc16_bits_numba), 5)
    t_numpy = timeit(run(kernels.crc16_bits_numpy), 5)
    assert kernels.crc16_bits_numba(bits) == kernels.crc16_bits_numpy(bits)
    print(f"crc16 ({sweep}x1024 bits):  numba {t_numba*1e3:8.2f} ms   "
          f"numpy {t_numpy*1e3:8.2f} ms   speedup {t_numpy/t_numba:6.1f}x"
          f"   (first numba call {t_first*1e3:.0f} ms incl. JIT)")


def bench_ldpc():
    code = LdpcCode(n=700, seed=2024)
    rng = np.random.default_rng(1)
    frames = 20
    llrs = []
    for trial in range(frames):
        data = rng.integers(0, 2, size=code.k).astype(np.uint8)
        rx = awgn(bpsk_map(code.encode(data)), ChannelConfig(1.0, trial))
        llrs.append(llr_from_awgn(rx, 1.0))
    args = (code.chk_ptr, code.chk_vars, code.var_ptr, code.var_edges, 50)

    def run(fn):
        def body():
            for llr in llrs:
                fn(llr, *args)
        return body

    t_first = timeit(run(kernels.ldpc_bp_numba), 1)
    t_numba = timeit(run(kernels.ldpc_bp_numba), 5)
    t_numpy = timeit(run(kernels.ldpc_bp_numpy), 3)
    print(f"ldpc bp ({frames} frames @1dB): numba {t_numba*1e3:8.2f} ms   "
          f"numpy {t_numpy*1e3:8.2f} ms   speedup {t_numpy/t_numba:6.1f}x"
          f"   (first numba call {t_first*1e3:.0f} ms incl. JIT)")


if __name__ == "__main__":
    print(f"active backend: {kernels.backend()}")
    bench_crc()
    bench_ldpc()
