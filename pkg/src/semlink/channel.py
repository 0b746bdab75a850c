"""BPSK symbol mapping and the AWGN channel, with explicit SNR bookkeeping.

SNR convention: Es/N0 with unit symbol energy, so the per-real-symbol noise
variance is 1 / (2 * 10^(snr_db/10)).  The same convention is used for the
semantic chain and the classical chains so comparisons stay fair.
"""

from __future__ import annotations

from dataclasses import dataclass
import hashlib
import math

import numpy as np

from .autodiff import Tensor, add

NOISELESS = math.inf


class ChannelError(ValueError):
    pass


@dataclass(frozen=True)
class ChannelConfig:
    snr_db: float
    seed: int = 0


def noise_sigma(snr_db):
    """Per-real-symbol noise standard deviation at the given Es/N0."""
    if snr_db == NOISELESS:
        return 0.0
    return math.sqrt(1.0 / (2.0 * 10.0 ** (snr_db / 10.0)))


def bpsk_map(bits):
    """0 -> -1, +1 stays +1; rejects non-binary frames."""
    arr = np.asarray(bits, dtype=np.float64)
    if not np.isin(arr, (0.0, 1.0)).all():
        raise ChannelError("bpsk_map input must be a 0/1 frame")
    return 2.0 * arr - 1.0


def bpsk_demap(symbols):
    """Hard decision back to bits; sign convention matches bpsk_map."""
    return (np.asarray(symbols) > 0).astype(np.uint8)


def awgn(symbols, cfg: ChannelConfig):
    """y = x + n with seed-deterministic Gaussian noise.

    Same (seed, shape, snr_db) always produces the identical frame.
    """
    x = np.asarray(symbols, dtype=np.float64)
    sigma = noise_sigma(cfg.snr_db)
    if sigma == 0.0:
        return x.copy()
    rng = np.random.default_rng(np.random.PCG64(cfg.seed))
    return x + sigma * rng.standard_normal(x.shape)


def awgn_tensor(x: Tensor, snr_db, rng):
    """Channel layer for training graphs: add a fixed noise draw to x."""
    sigma = noise_sigma(snr_db)
    if sigma == 0.0:
        return x
    noise = Tensor(sigma * rng.standard_normal(x.shape))
    return add(x, noise)


def ber_theory(snr_db):
    """Hard-decision BPSK bit error rate Q(sqrt(2 * Es/N0))."""
    snr = 10.0 ** (snr_db / 10.0)
    return 0.5 * math.erfc(math.sqrt(snr))


def derive_seed(*parts):
    """Stable 63-bit seed from arbitrary labels; independent of process state."""
    text = "\x1f".join(repr(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1
