"""semlink: link-level simulator for sentence-level semantic communication.

A tiny transformer joint source-channel coder with one-bit quantization,
incremental-knowledge HARQ, adaptive bit-rate control via a policy network,
two denoising modules, and classical Huffman/LZW + RS/LDPC baselines over an
AWGN channel.
"""

__version__ = "0.1.0"

from . import autodiff, channel, classical, denoisers, harq, kernels
from . import ratecontrol, semcoder, textpipe
