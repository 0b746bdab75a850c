"""Shared fixtures.

`overfit_model` trains the base coder on a 200-sentence toy corpus until the
noiseless quantized pipeline recovers nearly every training sentence; it
backs the semantic-coder, HARQ and rate-control behaviour tests.  The heavy
desk-scale artifacts for the acceptance suite live in test_acceptance.py.
"""

import os

import numpy as np
import pytest

from semlink import channel as ch
from semlink.semcoder import (CoderConfig, SemanticCoder, tokens_from_corpus,
                              train_end_to_end, train_stage1, train_stage2)
from semlink.textpipe import build_vocab, synthetic_corpus


class ToyData:
    def __init__(self):
        corpus = synthetic_corpus(260, max_len=16, seed=7)
        self.sentences = corpus.sentences
        self.vocab = build_vocab(self.sentences, 1000)
        toks, lens = tokens_from_corpus(self.sentences, self.vocab, 16)
        self.tokens, self.lengths = toks[:200], lens[:200]
        self.holdout_tokens, self.holdout_lengths = toks[200:], lens[200:]


@pytest.fixture(scope="session")
def toy_data():
    return ToyData()


def exact_rate(model, tokens, lengths, snr_db=ch.NOISELESS, seed=0):
    bits = model.bits_for(tokens,
                          snr_db if model.enc_snr_denoise else None)
    rx = ch.awgn(2.0 * bits - 1.0, ch.ChannelConfig(snr_db, seed))
    needs = model.enc_snr_denoise or model.decoder.snr_denoise
    _, pred = model.decode_frames(rx, snr_db if needs else None)
    l = tokens.shape[1]
    mask = np.arange(l)[None, :] < lengths[:, None]
    return float(((pred == tokens) | ~mask).all(axis=1).mean())


@pytest.fixture(scope="session")
def overfit_model(toy_data, tmp_path_factory):
    """Base coder overfit on the toy corpus (cached across the session)."""
    cache = os.environ.get("SEMLINK_TEST_CACHE")
    path = os.path.join(cache, "overfit_base.npz") if cache else None
    if path and os.path.exists(path):
        return SemanticCoder.load(path)

    model = SemanticCoder(CoderConfig.desk(), seed=3)
    toks, lens = toy_data.tokens, toy_data.lengths
    train_stage1(model, toks, lens, steps=700, batch_size=32, lr=2e-3, seed=11)
    train_stage2(model, toks, lens, steps=400, batch_size=32, lr=2e-3, seed=12)
    for round_idx in range(6):
        train_end_to_end(model, toks, lens, steps=400, batch_size=32,
                         lr=1e-3, seed=13 + round_idx,
                         warmup=100 if round_idx == 0 else 0,
                         decay=round_idx == 5)
        if exact_rate(model, toks, lens) >= 0.97:
            break
    if path:
        os.makedirs(cache, exist_ok=True)
        model.save(path)
    return model
