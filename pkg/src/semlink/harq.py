"""Incremental-knowledge HARQ: decoders that consume every received frame of
a sentence jointly, plus the retransmission session state machine.

Two decoder schemes:

* DecoderBank - one decoder per cumulative transmission count.  Decoder 1 is
  the base coder's decoder (shared parameters, never retrained); decoder i
  prepends an integration layer mapping the i*B concatenated frame down to B
  and is trained with everything earlier frozen.
* UnifiedHarqDecoder - a single decoder sized for n_max*B whose input is the
  tail-zero-padded concatenation of however many frames have arrived.

Retransmissions are fresh channel realizations of the same bit frame; the
ACK/NAK signalling and the CRC tag ride an error-free side channel.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import json

import numpy as np

from . import channel as ch
from .autodiff import ParamStore, Tensor, concat_rows, no_grad, softmax_rows
from .checkpoint import load_checkpoint, save_checkpoint
from .semcoder import (DecoderStack, SemanticCoder, bpsk_tensor, masked_ce,
                       _batch_iter, _check_loss, _lr_at, _optimizer)
from .textpipe import bleu1, sentence_matches_tag, sentence_tag


class HarqError(ValueError):
    pass


def _copy_decoder_params(src_store, src_prefix, dst_store, dst_prefix, names):
    for suffix in names:
        # denoiser params may exist on one side only; warm-start what aligns
        if dst_prefix + suffix in dst_store:
            dst_store[dst_prefix + suffix].tensor.data = \
                src_store[src_prefix + suffix].tensor.data.copy()


def _decoder_suffixes(store, prefix):
    skip = prefix + ".agg."
    return [n[len(prefix):] for n in store.names()
            if n.startswith(prefix + ".") and not n.startswith(skip)]


class DecoderBank:
    """Decoders 1..n_max; decoder 1 is the base model's own."""

    def __init__(self, model: SemanticCoder, n_max):
        if n_max < 1:
            raise HarqError("n_max must be at least 1")
        self.model = model
        self.n_max = n_max
        self.store = ParamStore()
        self.stacks = {1: model.decoder}

    @classmethod
    def build(cls, model, n_max, seed=0):
        bank = cls(model, n_max)
        rng = np.random.default_rng(np.random.PCG64(seed))
        cfg = model.cfg
        bits = cfg.bits_per_word
        for i in range(2, n_max + 1):
            prefix = f"d{i}"
            stack = DecoderStack.build(bank.store, prefix, cfg, rng,
                                       input_width=i * bits, use_agg=True)
            bank.stacks[i] = stack
            bank._warm_start(stack, i)
        return bank

    def _warm_start(self, stack, i):
        """Initialize decoder i to 'average the frames, then run decoder 1'."""
        base = self.model.params
        cfg = self.model.cfg
        bits = cfg.bits_per_word
        _copy_decoder_params(base, "dec", self.store, stack.prefix,
                             _decoder_suffixes(base, "dec"))
        agg_w = np.tile(np.eye(bits) / i, (i, 1))
        self.store[stack.prefix + ".agg.w"].tensor.data = agg_w
        # shift by +2 so the ReLU after the integration layer passes the
        # averaged +/-1 symbols through; the dequantizer bias absorbs it
        self.store[stack.prefix + ".agg.b"].tensor.data = np.full((1, bits), 2.0)
        dq_w = self.store[stack.prefix + ".dequant.w"].tensor.data
        self.store[stack.prefix + ".dequant.b"].tensor.data = (
            base["dec.dequant.b"].tensor.data - 2.0 * dq_w.sum(axis=0))

    def stack_for(self, n_frames):
        if n_frames not in self.stacks:
            raise HarqError(f"no decoder for {n_frames} frames (n_max "
                            f"{self.n_max})")
        return self.stacks[n_frames]

    def save(self, path):
        save_checkpoint(path, self.store.state_dict(),
                        {"kind": "decoder-bank", "n_max": self.n_max,
                         "stacks": {str(i): s.describe()
                                    for i, s in self.stacks.items() if i > 1}})

    @classmethod
    def load(cls, path, model):
        arrays, meta = load_checkpoint(path)
        if meta.get("kind") != "decoder-bank":
            raise HarqError(f"{path}: not a decoder-bank checkpoint")
        bank = cls.build(model, meta["n_max"], seed=0)
        for i, desc in meta["stacks"].items():
            bank.stacks[int(i)] = DecoderStack.from_description(
                bank.store, model.cfg, desc)
        bank.store.load_state(arrays)
        return bank


class UnifiedHarqDecoder:
    """One decoder sized for n_max frames; missing frames are tail-padded
    with zeros (the only supported convention)."""

    def __init__(self, model: SemanticCoder, n_max):
        self.model = model
        self.n_max = n_max
        self.store = ParamStore()
        self.stack = None

    @classmethod
    def build(cls, model, n_max, seed=0):
        uni = cls(model, n_max)
        rng = np.random.default_rng(np.random.PCG64(seed))
        cfg = model.cfg
        width = n_max * cfg.bits_per_word
        uni.stack = DecoderStack.build(uni.store, "u", cfg, rng,
                                       input_width=width)
        uni._warm_start()
        return uni

    def _warm_start(self):
        """Zero-extended dequantizer: decoding one zero-padded frame starts
        out exactly equal to the base decoder."""
        base = self.model.params
        cfg = self.model.cfg
        _copy_decoder_params(base, "dec", self.store, "u",
                             [s for s in _decoder_suffixes(base, "dec")
                              if not s.startswith(".dequant.")])
        w = np.zeros((self.n_max * cfg.bits_per_word, cfg.sem_dim))
        w[: cfg.bits_per_word] = base["dec.dequant.w"].tensor.data
        self.store["u.dequant.w"].tensor.data = w
        self.store["u.dequant.b"].tensor.data = \
            base["dec.dequant.b"].tensor.data.copy()

    def save(self, path):
        save_checkpoint(path, self.store.state_dict(),
                        {"kind": "unified-decoder", "n_max": self.n_max,
                         "stack": self.stack.describe()})

    @classmethod
    def load(cls, path, model):
        arrays, meta = load_checkpoint(path)
        if meta.get("kind") != "unified-decoder":
            raise HarqError(f"{path}: not a unified-decoder checkpoint")
        uni = cls.build(model, meta["n_max"], seed=0)
        uni.stack = DecoderStack.from_description(uni.store, model.cfg,
                                                  meta["stack"])
        uni.store.load_state(arrays)
        return uni


def _concat_padded(frames_2d, b, l, bits, n_max):
    pad_width = n_max * bits - len(frames_2d) * bits
    parts = list(frames_2d)
    if pad_width:
        parts.append(Tensor(np.zeros((b * l, pad_width))))
    return concat_rows(parts)


def decode_ik_tensor(decoder, frames_2d, b, l, snr_db=None):
    """Graph-mode IK decode; frames_2d is a list of (b*l, B) tensors."""
    n = len(frames_2d)
    if isinstance(decoder, DecoderBank):
        stack = decoder.stack_for(n)
        y = frames_2d[0] if n == 1 else concat_rows(frames_2d)
        return stack.forward(y, b, l, snr_db), stack
    if n > decoder.n_max:
        raise HarqError(f"{n} frames exceed n_max {decoder.n_max}")
    bits = decoder.model.cfg.bits_per_word
    y = _concat_padded(frames_2d, b, l, bits, decoder.n_max)
    return decoder.stack.forward(y, b, l, snr_db), decoder.stack


def decode_ik(model, decoder, frames, snr_db=None):
    """Received frames (list of (b, l, B) arrays) -> (probs, argmax tokens)."""
    frames = [np.asarray(f) for f in frames]
    if not frames:
        raise HarqError("need at least one received frame")
    b, l, w = frames[0].shape
    if w != model.cfg.bits_per_word:
        raise HarqError(f"frame width {w} != bits_per_word "
                        f"{model.cfg.bits_per_word}")
    for f in frames[1:]:
        if f.shape != frames[0].shape:
            raise HarqError("all frames must share one shape")
    with no_grad():
        tensors = [Tensor(f.reshape(b * l, w)) for f in frames]
        logits, _ = decode_ik_tensor(decoder, tensors, b, l, snr_db)
        probs = softmax_rows(logits).data.reshape(b, l, model.cfg.vocab_size)
    return probs, probs.argmax(axis=-1)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

def train_multi_decoder(model, bank, i, tokens, lengths, *, steps,
                        batch_size=32, lr=1e-3, seed=0,
                        snr_range=(-2.0, 6.0), warmup=50, decay=True,
                        log_every=0):
    """Train decoder i on i independent noisy copies; everything else frozen."""
    if i < 2 or i > bank.n_max:
        raise HarqError(f"decoder index {i} out of range 2..{bank.n_max}")
    model.params.set_trainable(False)
    bank.store.set_trainable(False)
    bank.store.set_trainable(True, f"d{i}.")
    stack = bank.stacks[i]
    opt = _optimizer(bank.store, (f"d{i}.",), lr)
    rng = np.random.default_rng(np.random.PCG64(seed))
    history = []
    for step, idx in enumerate(_batch_iter(rng, len(tokens), batch_size, steps)):
        tb, lb = tokens[idx], lengths[idx]
        b, l = tb.shape
        snr_db = float(rng.uniform(*snr_range))
        opt.lr = _lr_at(step, steps, lr, warmup, decay)
        model.params.zero_grads()
        bank.store.zero_grads()
        s = model.encode(tb, snr_db=snr_db if model.enc_snr_denoise else None)
        bits = model.quantize(s)
        symbols = bpsk_tensor(bits)
        frames = [ch.awgn_tensor(symbols, snr_db, rng) for _ in range(i)]
        logits = stack.forward(concat_rows(frames), b, l,
                               snr_db if stack.snr_denoise else None)
        loss = masked_ce(logits, tb, lb)
        history.append(_check_loss(loss, f"ik-decoder-{i}", seed, model.cfg))
        loss.backward()
        opt.step()
        if log_every and step % log_every == 0:
            print(f"ik d{i} step {step} loss {history[-1]:.4f}")
    model.params.set_trainable(True)
    return {"loss": history}


def train_unified(model, unified, tokens, lengths, *, steps, batch_size=32,
                  lr=1e-3, seed=0, snr_range=(-2.0, 6.0), warmup=50,
                  decay=True, log_every=0, draw_log=None):
    """Algorithm: draw a transmission count uniformly, transmit that many
    noisy copies, zero-pad, decode, cross-entropy.  Encoder stays frozen."""
    model.params.set_trainable(False)
    unified.store.set_trainable(True)
    opt = _optimizer(unified.store, ("",), lr)
    rng = np.random.default_rng(np.random.PCG64(seed))
    cfg = model.cfg
    history = []
    for step, idx in enumerate(_batch_iter(rng, len(tokens), batch_size, steps)):
        tb, lb = tokens[idx], lengths[idx]
        b, l = tb.shape
        snr_db = float(rng.uniform(*snr_range))
        n_tx = int(rng.integers(1, unified.n_max + 1))
        if draw_log is not None:
            draw_log.append(n_tx)
        opt.lr = _lr_at(step, steps, lr, warmup, decay)
        model.params.zero_grads()
        unified.store.zero_grads()
        s = model.encode(tb, snr_db=snr_db if model.enc_snr_denoise else None)
        bits = model.quantize(s)
        symbols = bpsk_tensor(bits)
        frames = [ch.awgn_tensor(symbols, snr_db, rng) for _ in range(n_tx)]
        logits, _ = decode_ik_tensor(
            unified, frames, b, l,
            snr_db if unified.stack.snr_denoise else None)
        loss = masked_ce(logits, tb, lb)
        history.append(_check_loss(loss, "ik-unified", seed, cfg))
        loss.backward()
        opt.step()
        if log_every and step % log_every == 0:
            print(f"ik unified step {step} n={n_tx} loss {history[-1]:.4f}")
    model.params.set_trainable(True)
    return {"loss": history}


# ---------------------------------------------------------------------------
# retransmission sessions
# ---------------------------------------------------------------------------

@dataclass
class AttemptRecord:
    attempt: int
    snr_db: float
    crc_ok: bool
    words: list
    bleu1: float


@dataclass
class HarqSession:
    reference: list
    snr_db: float
    n_max: int
    attempts: list = field(default_factory=list)
    success: bool = False
    payload_bits: int = 0

    @property
    def n_transmissions(self):
        return len(self.attempts)

    def trace_records(self):
        return [
            {"attempt": a.attempt, "snr_db": a.snr_db, "crc_ok": a.crc_ok,
             "decoded": " ".join(a.words), "bleu1": round(a.bleu1, 6)}
            for a in self.attempts
        ]


def run_session(model, decoder, tokens_row, true_len, vocab, snr_db, seed,
                n_max=None):
    """Encode once, then transmit/decode/CRC-check until success or n_max.

    tokens_row: (max_len,) indices; the CRC tag and the sentence length ride
    the error-free side channel.  Failure is an outcome, not an error.
    """
    n_max = n_max or getattr(decoder, "n_max", 1)
    cfg = model.cfg
    tokens = np.asarray(tokens_row, dtype=np.int64).reshape(1, -1)
    ref_words = [vocab.to_token(int(t)) for t in tokens[0, :true_len]]
    tag = sentence_tag(ref_words)
    session = HarqSession(ref_words, snr_db, n_max)

    bits = model.bits_for(tokens,
                          snr_db if model.enc_snr_denoise else None)
    symbols = 2.0 * bits - 1.0
    frames = []
    for attempt in range(1, n_max + 1):
        rx = ch.awgn(symbols, ch.ChannelConfig(snr_db,
                                               ch.derive_seed(seed, attempt)))
        frames.append(rx)
        session.payload_bits += cfg.max_len * cfg.bits_per_word
        needs_snr = (isinstance(decoder, UnifiedHarqDecoder)
                     and decoder.stack.snr_denoise) or \
                    (isinstance(decoder, DecoderBank)
                     and decoder.stack_for(attempt).snr_denoise)
        _, pred = decode_ik(model, decoder, frames,
                            snr_db if needs_snr else None)
        words = [vocab.to_token(int(t)) for t in pred[0, :true_len]]
        ok = sentence_matches_tag(words, tag)
        session.attempts.append(AttemptRecord(
            attempt, snr_db, ok, words, bleu1(words, ref_words)))
        if ok:
            session.success = True
            break
    return session


def write_trace(path, sessions):
    """Line-delimited JSON, one record per attempt, for the sweep runner."""
    with open(path, "w", encoding="utf-8") as fh:
        for s_idx, session in enumerate(sessions):
            for rec in session.trace_records():
                rec = {"session": s_idx, **rec}
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
