"""Denoising modules that slot into the semantic pipeline.

Two flavours:

* SNR-conditioned: pools the per-word features to one scalar each, appends
  the (standardized) channel SNR, and generates per-word scale/shift factors.
  Encoder-side and decoder-side instances share structure, not parameters.
* Self-attention: a residual multihead attention block over the expanded
  semantic vector.  Needs no SNR input at all; its signature has none.

Both are exact shape-preserving maps and are identity at initialization
(zero-initialized factor generators / output projection), so inserting an
untrained denoiser does not perturb a trained pipeline.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor, add, concat_rows, mul, relu, reshape
from .layers import affine, init_affine, init_attention, multihead_attention

# Channel SNR is fed to conditioned modules standardized by the training
# range (uniform on [-2, 6] dB: mean 2, std 8/sqrt(12)).
TRAIN_SNR_RANGE = (-2.0, 6.0)
_SNR_MEAN = 2.0
_SNR_STD = 8.0 / np.sqrt(12.0)


def standardize_snr(snr_db):
    snr_db = float(snr_db)
    if np.isinf(snr_db):
        # noiseless test hook: condition as if the channel were very clean
        snr_db = 20.0
    return (snr_db - _SNR_MEAN) / _SNR_STD


def init_snr_denoiser(store, prefix, rng, sem_dim, max_len):
    init_affine(store, prefix + ".pool", rng, sem_dim, 1)
    init_affine(store, prefix + ".scale", rng, max_len + 1, max_len, zero=True)
    init_affine(store, prefix + ".shift", rng, max_len + 1, max_len, zero=True)


def snr_denoise(store, prefix, x2d, b, l, snr_db):
    """y = x * (1 + ds) + db with per-word factors conditioned on SNR."""
    pooled = relu(affine(store, prefix + ".pool", x2d))      # (b*l, 1)
    pooled = reshape(pooled, (b, l))
    snr_col = Tensor(np.full((b, 1), standardize_snr(snr_db)))
    feat = concat_rows([pooled, snr_col])                    # (b, l+1)
    ds = affine(store, prefix + ".scale", feat)              # (b, l)
    db = affine(store, prefix + ".shift", feat)
    m = x2d.shape[-1]
    x3 = reshape(x2d, (b, l, m))
    scaled = mul(x3, add(reshape(ds, (b, l, 1)), Tensor(1.0)))
    return reshape(add(scaled, reshape(db, (b, l, 1))), (b * l, m))


def init_self_denoiser(store, prefix, rng, dim):
    init_attention(store, prefix, rng, dim, zero_out=True)


def self_denoise(store, prefix, x2d, b, l, dim, heads):
    """Residual multihead self-attention; no channel information enters."""
    return add(x2d, multihead_attention(store, prefix, x2d, b, l, dim, heads))


def retrain_with_denoisers(model, corpus_tokens, lengths, which=(), *, steps,
                           batch_size=32, lr=1e-3, seed=0, snr_range=TRAIN_SNR_RANGE,
                           log_every=0):
    """Insert the selected modules ('snr', 'self') and finetune end to end.

    Toggling nothing is a no-op that leaves the model untouched.  Returns the
    training history of the finetune (empty when nothing was toggled).
    """
    which = tuple(which)
    unknown = set(which) - {"snr", "self"}
    if unknown:
        raise ValueError(f"unknown denoiser toggles: {sorted(unknown)}")
    if not which:
        return {"loss": []}
    model.enable_denoisers(snr="snr" in which, self_attn="self" in which,
                           rng=np.random.default_rng(np.random.PCG64(seed ^ 0x5EED)))
    from .semcoder import train_end_to_end

    return train_end_to_end(model, corpus_tokens, lengths, steps=steps,
                            batch_size=batch_size, lr=lr, seed=seed,
                            snr_range=snr_range, log_every=log_every)
