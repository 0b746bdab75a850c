"""Backend-agreement and env-flag tests for the hot kernels."""

import os
import subprocess
import sys

import numpy as np
from hypothesis import given, settings, strategies as st

from semlink import kernels
from semlink.classical.ldpc import LdpcCode, llr_from_awgn
from semlink.channel import ChannelConfig, awgn, bpsk_map


def test_backend_reflects_environment():
    assert kernels.backend() in ("numba", "numpy")
    out = subprocess.run(
        [sys.executable, "-c",
         "from semlink import kernels; print(kernels.backend())"],
        env={**os.environ, "SEMLINK_NUMBA": "0"},
        capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"


@given(st.lists(st.integers(0, 1), min_size=1, max_size=400))
@settings(max_examples=60, deadline=None)
def test_crc_backends_agree(bits):
    arr = np.array(bits, dtype=np.uint8)
    assert kernels.crc16_bits_numpy(arr) == kernels.crc16_bits_numba(arr)


def test_crc_known_reference():
    # "123456789" CRC-16/CCITT-FALSE = 0x29B1
    data = np.unpackbits(np.frombuffer(b"123456789", dtype=np.uint8))
    assert kernels.crc16_bits_numpy(data) == 0x29B1
    assert kernels.crc16_bits_numba(data) == 0x29B1


def test_ldpc_backends_agree():
    code = LdpcCode(n=70, seed=9)
    rng = np.random.default_rng(2)
    for trial in range(8):
        data = rng.integers(0, 2, size=code.k).astype(np.uint8)
        rx = awgn(bpsk_map(code.encode(data)), ChannelConfig(2.0, trial))
        llr = llr_from_awgn(rx, 2.0)
        args = (llr, code.chk_ptr, code.chk_vars, code.var_ptr,
                code.var_edges, 50)
        bits_a, ok_a, it_a = kernels.ldpc_bp_numpy(*args)
        bits_b, ok_b, it_b = kernels.ldpc_bp_numba(*args)
        assert ok_a == ok_b and it_a == it_b
        np.testing.assert_array_equal(bits_a, bits_b)


def test_ldpc_zero_message_handling():
    # an exactly-zero LLR makes a tanh factor 0; the leave-one-out product
    # logic must not divide by it
    code = LdpcCode(n=70, seed=9)
    data = np.zeros(code.k, dtype=np.uint8)
    cw = code.encode(data)
    llr = llr_from_awgn(bpsk_map(cw), 4.0)
    llr[::7] = 0.0
    bits, ok, _ = kernels.ldpc_bp_numpy(llr, code.chk_ptr, code.chk_vars,
                                        code.var_ptr, code.var_edges, 50)
    assert np.isfinite(bits).all()
    bits_b, ok_b, _ = kernels.ldpc_bp_numba(llr, code.chk_ptr, code.chk_vars,
                                            code.var_ptr, code.var_edges, 50)
    assert ok == ok_b
