"""Byte-alphabet LZW with variable code width.

Codes start at 9 bits (256 byte literals + EOD + growth room) and widen
whenever the dictionary outgrows the current width, up to 16 bits; past
that the dictionary freezes.  The decoder mirrors the encoder's dictionary
construction exactly, so round-trips are lossless by construction.
"""

from __future__ import annotations

import numpy as np

EOD = 256           # end-of-data code
FIRST_FREE = 257
MIN_WIDTH = 9
MAX_WIDTH = 16


class LzwError(ValueError):
    pass


def _emit(bits_out, code, width):
    for shift in range(width - 1, -1, -1):
        bits_out.append((code >> shift) & 1)


def lzw_encode(data: bytes):
    """bytes -> bit array (EOD-terminated)."""
    table = {bytes([i]): i for i in range(256)}
    next_code = FIRST_FREE
    width = MIN_WIDTH
    bits_out = []
    current = b""
    for byte in data:
        candidate = current + bytes([byte])
        if candidate in table:
            current = candidate
            continue
        _emit(bits_out, table[current], width)
        if next_code < (1 << MAX_WIDTH):
            table[candidate] = next_code
            next_code += 1
            if next_code > (1 << width) and width < MAX_WIDTH:
                width += 1
        current = bytes([byte])
    if current:
        _emit(bits_out, table[current], width)
    _emit(bits_out, EOD, width)
    return np.array(bits_out, dtype=np.uint8)


def lzw_decode(bits):
    """bit array -> (bytes, ok flag).  ok False on malformed streams."""
    bits = np.asarray(bits, dtype=np.uint8).reshape(-1)
    table = {i: bytes([i]) for i in range(256)}
    next_code = FIRST_FREE
    width = MIN_WIDTH
    pos = 0
    out = bytearray()
    prev = None
    while True:
        if pos + width > bits.size:
            return bytes(out), False
        code = 0
        for b in bits[pos: pos + width]:
            code = (code << 1) | int(b)
        pos += width
        if code == EOD:
            return bytes(out), True
        if code in table:
            entry = table[code]
        elif code == next_code and prev is not None:
            entry = prev + prev[:1]
        else:
            return bytes(out), False
        out += entry
        if prev is not None and next_code < (1 << MAX_WIDTH):
            table[next_code] = prev + entry[:1]
            next_code += 1
            # the decoder's dictionary lags the encoder's by one entry, so
            # it must switch widths one addition early to stay in sync
            if next_code + 1 > (1 << width) and width < MAX_WIDTH:
                width += 1
        prev = entry
