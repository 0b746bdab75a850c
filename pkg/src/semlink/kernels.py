"""Hot inner loops with two interchangeable backends.

The numba backend JIT-compiles the scalar loops; the numpy backend expresses
the same math with array operations.  The active backend is chosen once at
import time: set ``SEMLINK_NUMBA=0`` to force the numpy path (the default is
numba whenever it imports).  Integer kernels (CRC) agree bit-for-bit across
backends; the float kernel (LDPC belief propagation) agrees to rounding.

Both implementations of each kernel stay importable so the benchmark in
benchmarks/bench_kernels.py can time them side by side.
"""

import os

import numpy as np

_CRC_POLY = 0x1021
_CRC_INIT = 0xFFFF


def _want_numba():
    return os.environ.get("SEMLINK_NUMBA", "1") != "0"


try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised via the env flag instead
    _HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def deco(fn):
            return fn

        return deco


USE_NUMBA = _HAVE_NUMBA and _want_numba()


def backend():
    return "numba" if USE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# CRC-16/CCITT (poly 0x1021, init 0xFFFF) over a bit sequence, MSB-first
# ---------------------------------------------------------------------------

def _crc16_bits_py(bits):
    crc = _CRC_INIT
    for b in bits:
        fb = ((crc >> 15) & 1) ^ int(b)
        crc = (crc << 1) & 0xFFFF
        if fb:
            crc ^= _CRC_POLY
    return crc


_crc16_bits_jit = njit(cache=True)(_crc16_bits_py)


def _crc_table():
    table = np.empty(256, dtype=np.uint32)
    for byte in range(256):
        reg = byte << 8
        for _ in range(8):
            if reg & 0x8000:
                reg = ((reg << 1) ^ _CRC_POLY) & 0xFFFF
            else:
                reg = (reg << 1) & 0xFFFF
        table[byte] = reg
    return table


_CRC_TABLE = _crc_table()


def crc16_bits_numpy(bits):
    """Table-driven CRC: eight bits per step via packbits, tail bit-serial."""
    bits = np.asarray(bits, dtype=np.uint8)
    n_whole = bits.size // 8
    crc = _CRC_INIT
    if n_whole:
        packed = np.packbits(bits[: n_whole * 8])
        for byte in packed:
            crc = ((crc << 8) & 0xFFFF) ^ int(_CRC_TABLE[((crc >> 8) ^ byte) & 0xFF])
    for b in bits[n_whole * 8:]:
        fb = ((crc >> 15) & 1) ^ int(b)
        crc = (crc << 1) & 0xFFFF
        if fb:
            crc ^= _CRC_POLY
    return crc


def crc16_bits_numba(bits):
    bits = np.ascontiguousarray(bits, dtype=np.uint8)
    return int(_crc16_bits_jit(bits))


def crc16_bits(bits):
    """Checksum of a 0/1 bit array under the active backend."""
    if USE_NUMBA:
        return crc16_bits_numba(bits)
    return crc16_bits_numpy(bits)


# ---------------------------------------------------------------------------
# LDPC sum-product decoding over a CSR edge layout (handles irregular codes)
#
# Edges are enumerated check-major: check i owns edge ids
# chk_ptr[i]..chk_ptr[i+1], and chk_vars[e] names the variable on edge e.
# var_ptr / var_edges give each variable's edge ids.  Messages are bit LLRs
# with the log(P0/P1) convention: positive favours bit 0.
# ---------------------------------------------------------------------------

_ATANH_CLIP = 1.0 - 1e-12


def ldpc_bp_numpy(llr, chk_ptr, chk_vars, var_ptr, var_edges, max_iters):
    m = chk_ptr.size - 1
    n = var_ptr.size - 1
    var_of_slot = np.repeat(np.arange(n), np.diff(var_ptr))
    edge_row = np.repeat(np.arange(m), np.diff(chk_ptr))
    v2c = llr[chk_vars].astype(np.float64)

    hard = np.zeros(n, dtype=np.uint8)
    for it in range(1, max_iters + 1):
        t = np.tanh(0.5 * v2c)
        zero = t == 0.0
        tn = np.where(zero, 1.0, t)  # product over non-zero factors
        row_prod = np.multiply.reduceat(tn, chk_ptr[:-1])
        row_zeros = np.add.reduceat(zero.astype(np.int64), chk_ptr[:-1])
        other_zeros = row_zeros[edge_row] - zero
        ext = np.where(other_zeros > 0, 0.0, row_prod[edge_row] / tn)
        ext = np.clip(ext, -_ATANH_CLIP, _ATANH_CLIP)
        c2v = 2.0 * np.arctanh(ext)

        gathered = c2v[var_edges]
        post = llr + np.add.reduceat(gathered, var_ptr[:-1])
        hard = (post < 0).astype(np.uint8)
        syndrome = np.bitwise_and(
            np.add.reduceat(hard[chk_vars].astype(np.int64), chk_ptr[:-1]), 1)
        if not syndrome.any():
            return hard, True, it

        v2c[var_edges] = post[var_of_slot] - gathered
    return hard, False, max_iters


def _ldpc_bp_loops(llr, chk_ptr, chk_vars, var_ptr, var_edges, max_iters):
    m = chk_ptr.size - 1
    n = var_ptr.size - 1
    E = chk_vars.size
    v2c = np.empty(E)
    c2v = np.zeros(E)
    for e in range(E):
        v2c[e] = llr[chk_vars[e]]

    hard = np.zeros(n, dtype=np.uint8)
    post = np.zeros(n)
    pref = np.empty(E)
    for it in range(1, max_iters + 1):
        for i in range(m):
            lo, hi = chk_ptr[i], chk_ptr[i + 1]
            prod = 1.0
            for e in range(lo, hi):
                pref[e] = prod
                prod *= np.tanh(0.5 * v2c[e])
            suff = 1.0
            for e in range(hi - 1, lo - 1, -1):
                ext = pref[e] * suff
                if ext > _ATANH_CLIP:
                    ext = _ATANH_CLIP
                elif ext < -_ATANH_CLIP:
                    ext = -_ATANH_CLIP
                c2v[e] = 2.0 * np.arctanh(ext)
                suff *= np.tanh(0.5 * v2c[e])

        for v in range(n):
            total = llr[v]
            for s in range(var_ptr[v], var_ptr[v + 1]):
                total += c2v[var_edges[s]]
            post[v] = total
            hard[v] = 1 if total < 0 else 0
        ok = True
        for i in range(m):
            acc = 0
            for e in range(chk_ptr[i], chk_ptr[i + 1]):
                acc ^= hard[chk_vars[e]]
            if acc:
                ok = False
                break
        if ok:
            return hard, True, it

        for v in range(n):
            for s in range(var_ptr[v], var_ptr[v + 1]):
                e = var_edges[s]
                v2c[e] = post[v] - c2v[e]
    return hard, False, max_iters


_ldpc_bp_jit = njit(cache=True)(_ldpc_bp_loops)


def ldpc_bp_numba(llr, chk_ptr, chk_vars, var_ptr, var_edges, max_iters):
    return _ldpc_bp_jit(
        np.ascontiguousarray(llr, dtype=np.float64),
        np.ascontiguousarray(chk_ptr, dtype=np.int64),
        np.ascontiguousarray(chk_vars, dtype=np.int64),
        np.ascontiguousarray(var_ptr, dtype=np.int64),
        np.ascontiguousarray(var_edges, dtype=np.int64),
        max_iters,
    )


def ldpc_bp(llr, chk_ptr, chk_vars, var_ptr, var_edges, max_iters=50):
    """Sum-product decode; returns (hard bits, syndrome-clean flag, iterations)."""
    if USE_NUMBA:
        return ldpc_bp_numba(llr, chk_ptr, chk_vars, var_ptr, var_edges, max_iters)
    return ldpc_bp_numpy(
        np.asarray(llr, dtype=np.float64),
        np.asarray(chk_ptr), np.asarray(chk_vars),
        np.asarray(var_ptr), np.asarray(var_edges), max_iters)
