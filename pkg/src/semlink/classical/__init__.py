from .chain import (ACCOUNTING_ROWS, ChainConfig, ChainOutcome, ClassicalChain,
                    bit_accounting_report)
from .galois import GF, GF8, GF16
from .huffman import HuffmanCodebook
from .ldpc import LdpcCode, llr_from_awgn
from .lzw import lzw_decode, lzw_encode
from .rs import RS_7_5, RsCode, RsDecodeFailure

__all__ = [
    "ACCOUNTING_ROWS", "ChainConfig", "ChainOutcome", "ClassicalChain",
    "bit_accounting_report", "GF", "GF8", "GF16", "HuffmanCodebook",
    "LdpcCode", "llr_from_awgn", "lzw_decode", "lzw_encode", "RS_7_5",
    "RsCode", "RsDecodeFailure",
]
