"""The base joint source-channel coder: embedding + positional encoding, a
transformer semantic encoder, one-bit quantization with a straight-through
gradient, the matching dequantizer/decoder, and the three-stage training
schedule (coder, quantizer, end-to-end finetune under channel noise).

Shapes follow the config: sentences of max_len words, embed_dim-wide
transformer, sem_dim semantic features per word, bits_per_word quantized
bits.  The decoder is non-autoregressive: one parallel pass emits a
probability row per word position.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
import math

import numpy as np

from . import channel as ch
from . import denoisers
from .autodiff import (Adam, ParamStore, Tensor, add, binarize_ste,
                       cross_entropy, lookup_rows, mse, no_grad, relu,
                       reshape, scale, softmax_rows, tanh)
from .checkpoint import load_checkpoint, save_checkpoint
from .layers import (affine, init_affine, init_transformer_stack,
                     sinusoidal_positions, transformer_stack)
from .textpipe import encode_sentence


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class CoderConfig:
    max_len: int
    embed_dim: int
    sem_dim: int
    bits_per_word: int
    vocab_size: int
    layers: int = 3
    heads: int = 4
    ffn_mult: int = 4

    @classmethod
    def desk(cls, **overrides):
        base = dict(max_len=16, embed_dim=64, sem_dim=8, bits_per_word=16,
                    vocab_size=1000, layers=3, heads=4)
        base.update(overrides)
        return cls(**base)

    @classmethod
    def paper(cls, **overrides):
        base = dict(max_len=30, embed_dim=128, sem_dim=16, bits_per_word=30,
                    vocab_size=32478, layers=3, heads=8)
        base.update(overrides)
        return cls(**base)

    @property
    def ffn_dim(self):
        return self.embed_dim * self.ffn_mult


class DecoderStack:
    """Dequantizer + expansion + transformer decoder + vocabulary head.

    input_width is the received frame width per word.  With use_agg an extra
    integration layer maps input_width down to bits_per_word first (the
    multi-decoder HARQ shape); otherwise the dequantizer consumes the frame
    directly (base coder and unified HARQ decoder).
    """

    def __init__(self, store, prefix, cfg, input_width=None, use_agg=False):
        self.store = store
        self.prefix = prefix
        self.cfg = cfg
        self.input_width = input_width or cfg.bits_per_word
        self.use_agg = use_agg
        self.snr_denoise = False
        self.self_denoise = False

    @classmethod
    def build(cls, store, prefix, cfg, rng, input_width=None, use_agg=False):
        stack = cls(store, prefix, cfg, input_width, use_agg)
        dequant_in = cfg.bits_per_word if use_agg else stack.input_width
        if use_agg:
            init_affine(store, prefix + ".agg", rng, stack.input_width,
                        cfg.bits_per_word)
        init_affine(store, prefix + ".dequant", rng, dequant_in, cfg.sem_dim)
        init_affine(store, prefix + ".expand", rng, cfg.sem_dim, cfg.embed_dim)
        init_transformer_stack(store, prefix + ".tf", rng, cfg.embed_dim,
                               cfg.ffn_dim, cfg.layers)
        init_affine(store, prefix + ".out", rng, cfg.embed_dim, cfg.vocab_size,
                    weight_scale=0.02)
        return stack

    def enable_denoisers(self, snr=False, self_attn=False, rng=None):
        if snr and not self.snr_denoise:
            denoisers.init_snr_denoiser(self.store, self.prefix + ".dn_snr",
                                        rng, self.cfg.sem_dim, self.cfg.max_len)
            self.snr_denoise = True
        if self_attn and not self.self_denoise:
            denoisers.init_self_denoiser(self.store, self.prefix + ".dn_self",
                                         rng, self.cfg.embed_dim)
            self.self_denoise = True

    def dequantize(self, y2d, b, l, snr_db=None):
        """Received frame -> semantic vector (b*l, sem_dim)."""
        x = y2d
        if self.use_agg:
            x = relu(affine(self.store, self.prefix + ".agg", x))
        x = relu(affine(self.store, self.prefix + ".dequant", x))
        if self.snr_denoise:
            if snr_db is None:
                raise ValueError("decoder has an SNR-conditioned denoiser; "
                                 "decode needs snr_db")
            x = denoisers.snr_denoise(self.store, self.prefix + ".dn_snr",
                                      x, b, l, snr_db)
        return x

    def forward(self, y2d, b, l, snr_db=None):
        """Received frame (b*l, input_width) -> logits (b*l, vocab)."""
        cfg = self.cfg
        x = self.dequantize(y2d, b, l, snr_db)
        x = relu(affine(self.store, self.prefix + ".expand", x))
        if self.self_denoise:
            x = denoisers.self_denoise(self.store, self.prefix + ".dn_self",
                                       x, b, l, cfg.embed_dim, cfg.heads)
        x = transformer_stack(self.store, self.prefix + ".tf", x, b, l,
                              cfg.embed_dim, cfg.heads, cfg.layers)
        return affine(self.store, self.prefix + ".out", x)

    def param_names(self):
        return [n for n in self.store.names() if n.startswith(self.prefix + ".")]

    def describe(self):
        return {"prefix": self.prefix, "input_width": self.input_width,
                "use_agg": self.use_agg, "snr_denoise": self.snr_denoise,
                "self_denoise": self.self_denoise}

    @classmethod
    def from_description(cls, store, cfg, desc):
        """Rebuild the stack's shape (including denoiser parameters, which a
        later load_state overwrites) from its checkpoint description."""
        stack = cls(store, desc["prefix"], cfg, desc["input_width"],
                    desc["use_agg"])
        stack.enable_denoisers(snr=desc["snr_denoise"],
                               self_attn=desc["self_denoise"],
                               rng=np.random.default_rng(0))
        return stack


class SemanticCoder:
    """Encoder + quantizer + base decoder with named parameter groups."""

    ALPHA_EN = ("embed.", "enc.")
    THETA_EN = ("quant.",)
    THETA_DE = ("dec.dequant.",)
    ALPHA_DE = ("dec.expand.", "dec.tf.", "dec.out.", "dec.dn_")

    def __init__(self, cfg: CoderConfig, seed=0):
        self.cfg = cfg
        self.params = ParamStore()
        self.pe = sinusoidal_positions(cfg.max_len, cfg.embed_dim)
        rng = np.random.default_rng(np.random.PCG64(seed))
        # unit-scale rows keep token identity comparable to the positional
        # constants, which the downstream layer norms would otherwise drown
        self.params.add("embed.table",
                        rng.standard_normal((cfg.vocab_size, cfg.embed_dim)))
        init_transformer_stack(self.params, "enc.tf", rng, cfg.embed_dim,
                               cfg.ffn_dim, cfg.layers)
        init_affine(self.params, "enc.head", rng, cfg.embed_dim, cfg.sem_dim)
        init_affine(self.params, "quant", rng, cfg.sem_dim, cfg.bits_per_word)
        self.decoder = DecoderStack.build(self.params, "dec", cfg, rng)
        self.enc_snr_denoise = False

    # -- forward pieces ----------------------------------------------------

    def embed(self, tokens):
        """Token indices (b, l) -> embedded rows + positional constants."""
        tokens = np.asarray(tokens)
        b, l = tokens.shape
        x = lookup_rows(self.params["embed.table"].tensor, tokens)
        x = add(x, Tensor(self.pe[:l]))
        return reshape(x, (b * l, self.cfg.embed_dim))

    def encode(self, tokens, snr_db=None):
        """Tokens (b, l) -> semantic matrix (b*l, sem_dim)."""
        tokens = np.asarray(tokens)
        b, l = tokens.shape
        x = self.embed(tokens)
        x = transformer_stack(self.params, "enc.tf", x, b, l,
                              self.cfg.embed_dim, self.cfg.heads, self.cfg.layers)
        s = relu(affine(self.params, "enc.head", x))
        if self.enc_snr_denoise:
            if snr_db is None:
                raise ValueError("encoder has an SNR-conditioned denoiser; "
                                 "encode needs snr_db")
            s = denoisers.snr_denoise(self.params, "enc.dn_snr", s, b, l, snr_db)
        return s

    def quantize(self, s2d, hard=True):
        """Semantic matrix -> bit frame {0,1} (straight-through in training)."""
        pre = tanh(affine(self.params, "quant", s2d))
        return binarize_ste(pre) if hard else pre

    def decode(self, y2d, b, l, snr_db=None):
        return self.decoder.forward(y2d, b, l, snr_db)

    def enable_denoisers(self, snr=False, self_attn=False, rng=None):
        if snr and not self.enc_snr_denoise:
            denoisers.init_snr_denoiser(self.params, "enc.dn_snr", rng,
                                        self.cfg.sem_dim, self.cfg.max_len)
            self.enc_snr_denoise = True
        self.decoder.enable_denoisers(snr=snr, self_attn=self_attn, rng=rng)

    # -- numpy-facing inference helpers -------------------------------------

    def encode_batch(self, tokens, snr_db=None):
        with no_grad():
            return self.encode(tokens, snr_db).data.reshape(
                tokens.shape[0], tokens.shape[1], self.cfg.sem_dim)

    def bits_for(self, tokens, snr_db=None):
        """Hard bit frames (b, l, bits_per_word) for a token batch."""
        b, l = np.asarray(tokens).shape
        with no_grad():
            s = self.encode(tokens, snr_db)
            return self.quantize(s).data.reshape(b, l, self.cfg.bits_per_word)

    def decode_frames(self, frames, snr_db=None, stack=None):
        """Soft frames (b, l, W) -> (probability rows, argmax tokens)."""
        stack = stack or self.decoder
        b, l, w = frames.shape
        with no_grad():
            y = Tensor(frames.reshape(b * l, w))
            logits = stack.forward(y, b, l, snr_db)
            probs = softmax_rows(logits).data.reshape(b, l, self.cfg.vocab_size)
        return probs, probs.argmax(axis=-1)

    # -- persistence ---------------------------------------------------------

    def meta(self):
        return {"kind": "semantic-coder", "config": asdict(self.cfg),
                "enc_snr_denoise": self.enc_snr_denoise,
                "decoder": self.decoder.describe()}

    def save(self, path):
        save_checkpoint(path, self.params.state_dict(), self.meta())

    @classmethod
    def load(cls, path):
        arrays, meta = load_checkpoint(path)
        if meta.get("kind") != "semantic-coder":
            raise TrainingError(f"{path}: not a semantic-coder checkpoint")
        model = cls(CoderConfig(**meta["config"]))
        if meta["enc_snr_denoise"]:
            denoisers.init_snr_denoiser(model.params, "enc.dn_snr",
                                        np.random.default_rng(0),
                                        model.cfg.sem_dim, model.cfg.max_len)
            model.enc_snr_denoise = True
        model.decoder = DecoderStack.from_description(model.params, model.cfg,
                                                      meta["decoder"])
        model.params.load_state(arrays)
        return model


# ---------------------------------------------------------------------------
# batching / loss helpers
# ---------------------------------------------------------------------------

def tokens_from_corpus(sentences, vocab, max_len):
    """Encode sentences into (tokens (n, max_len), lengths (n,)) arrays."""
    toks = np.zeros((len(sentences), max_len), dtype=np.int64)
    lens = np.zeros(len(sentences), dtype=np.int64)
    for i, text in enumerate(sentences):
        seq = encode_sentence(text, vocab, max_len)
        toks[i] = seq.indices
        lens[i] = seq.true_length
    return toks, lens


def length_mask(lengths, max_len):
    return (np.arange(max_len)[None, :] < np.asarray(lengths)[:, None]).astype(float)


def masked_ce(logits2d, tokens, lengths):
    b, l = tokens.shape
    return cross_entropy(logits2d, tokens.reshape(-1),
                         mask=length_mask(lengths, l).reshape(-1))


def bpsk_tensor(bits):
    """0/1 bit tensor -> +/-1 symbols inside the training graph."""
    return add(scale(bits, 2.0), Tensor(-1.0))


def _check_loss(loss, stage, seed, cfg):
    val = float(loss.data)
    if not math.isfinite(val):
        raise TrainingError(
            f"{stage} diverged (loss={val}); seed={seed} config={cfg}")
    return val


def _optimizer(store, prefixes, lr):
    params = [p for p in store
              if p.trainable and any(p.name.startswith(x) for x in prefixes)]
    return Adam(params, lr=lr)


def _batch_iter(rng, n, batch_size, steps):
    for _ in range(steps):
        yield rng.integers(0, n, size=batch_size)


# ---------------------------------------------------------------------------
# the three-stage schedule
# ---------------------------------------------------------------------------

def train_stage1(model, tokens, lengths, *, steps, batch_size=32, lr=1e-3,
                 seed=0, log_every=0):
    """Coder-only training: encoder output feeds the decoder expansion
    directly (quantizer and channel bypassed); masked cross-entropy."""
    cfg = model.cfg
    rng = np.random.default_rng(np.random.PCG64(seed))
    model.params.set_trainable(True)
    opt = _optimizer(model.params, model.ALPHA_EN + model.ALPHA_DE, lr)
    history = []
    for step, idx in enumerate(_batch_iter(rng, len(tokens), batch_size, steps)):
        tb, lb = tokens[idx], lengths[idx]
        model.params.zero_grads()
        s = model.encode(tb)
        logits = _decode_from_semantic(model.decoder, s, *tb.shape)
        loss = masked_ce(logits, tb, lb)
        history.append(_check_loss(loss, "stage1", seed, cfg))
        loss.backward()
        opt.step()
        if log_every and step % log_every == 0:
            print(f"stage1 step {step} loss {history[-1]:.4f}")
    return {"loss": history}


def _decode_from_semantic(stack, s2d, b, l, snr_db=None):
    """Decoder tail from the semantic vector (skips the dequantizer)."""
    cfg = stack.cfg
    x = relu(affine(stack.store, stack.prefix + ".expand", s2d))
    if stack.self_denoise:
        x = denoisers.self_denoise(stack.store, stack.prefix + ".dn_self",
                                   x, b, l, cfg.embed_dim, cfg.heads)
    x = transformer_stack(stack.store, stack.prefix + ".tf", x, b, l,
                          cfg.embed_dim, cfg.heads, cfg.layers)
    return affine(stack.store, stack.prefix + ".out", x)


def train_stage2(model, tokens, lengths, *, steps, batch_size=32, lr=1e-3,
                 seed=0, hard=True, log_every=0):
    """Quantizer/dequantizer training against frozen encoder output (MSE).

    The dequantizer is fed symbol-domain (+/-1) values, the same domain the
    channel delivers at stage 3, so the reconstruction carries over."""
    cfg = model.cfg
    rng = np.random.default_rng(np.random.PCG64(seed))
    model.params.set_trainable(False)
    model.params.set_trainable(True, "quant.")
    model.params.set_trainable(True, "dec.dequant.")
    opt = _optimizer(model.params, model.THETA_EN + model.THETA_DE, lr)
    history = []
    for step, idx in enumerate(_batch_iter(rng, len(tokens), batch_size, steps)):
        tb = tokens[idx]
        b, l = tb.shape
        model.params.zero_grads()
        s = model.encode(tb)
        bits = model.quantize(s, hard=hard)
        recon = model.decoder.dequantize(bpsk_tensor(bits) if hard else bits,
                                         b, l)
        loss = mse(s, recon)
        history.append(_check_loss(loss, "stage2", seed, cfg))
        loss.backward()
        opt.step()
        if log_every and step % log_every == 0:
            print(f"stage2 step {step} loss {history[-1]:.6f}")
    model.params.set_trainable(True)
    return {"loss": history}


def _lr_at(step, steps, lr, warmup, decay):
    if warmup and step < warmup:
        return lr * (step + 1) / warmup
    if not decay:
        return lr
    done = (step - warmup) / max(steps - warmup, 1)
    return lr * (0.05 + 0.95 * 0.5 * (1.0 + math.cos(math.pi * done)))


def train_end_to_end(model, tokens, lengths, *, steps, batch_size=32, lr=1e-3,
                     seed=0, snr_range=denoisers.TRAIN_SNR_RANGE,
                     prefixes=None, warmup=100, decay=False, log_every=0,
                     stage_name="stage3"):
    """Full-pipeline finetune under AWGN with per-batch uniform SNR."""
    cfg = model.cfg
    rng = np.random.default_rng(np.random.PCG64(seed))
    if prefixes is None:
        prefixes = ("",)
    opt = _optimizer(model.params, prefixes, lr)
    history = []
    for step, idx in enumerate(_batch_iter(rng, len(tokens), batch_size, steps)):
        tb, lb = tokens[idx], lengths[idx]
        b, l = tb.shape
        snr_db = float(rng.uniform(*snr_range)) if snr_range else ch.NOISELESS
        opt.lr = _lr_at(step, steps, lr, warmup, decay)
        model.params.zero_grads()
        s = model.encode(tb, snr_db=snr_db)
        bits = model.quantize(s)
        y = ch.awgn_tensor(bpsk_tensor(bits), snr_db, rng)
        logits = model.decode(y, b, l, snr_db=snr_db)
        loss = masked_ce(logits, tb, lb)
        history.append(_check_loss(loss, stage_name, seed, cfg))
        loss.backward()
        opt.step()
        if log_every and step % log_every == 0:
            print(f"{stage_name} step {step} snr {snr_db:+.1f} "
                  f"loss {history[-1]:.4f}")
    return {"loss": history}


train_stage3 = train_end_to_end


# ---------------------------------------------------------------------------
# evaluation helpers
# ---------------------------------------------------------------------------

def eval_stage1_loss(model, tokens, lengths):
    with no_grad():
        s = model.encode(tokens)
        logits = _decode_from_semantic(model.decoder, s, *tokens.shape)
        return float(masked_ce(logits, tokens, lengths).data)


def eval_pipeline_loss(model, tokens, lengths, snr_db=ch.NOISELESS, seed=0):
    rng = np.random.default_rng(np.random.PCG64(seed))
    b, l = tokens.shape
    with no_grad():
        s = model.encode(tokens,
                         snr_db=snr_db if model.enc_snr_denoise else None)
        bits = model.quantize(s)
        y = ch.awgn_tensor(bpsk_tensor(bits), snr_db, rng)
        logits = model.decode(y, b, l,
                              snr_db=snr_db if _needs_snr(model) else None)
        return float(masked_ce(logits, tokens, lengths).data)


def _needs_snr(model):
    return model.enc_snr_denoise or model.decoder.snr_denoise


def token_accuracy(model, tokens, lengths, snr_db=ch.NOISELESS, seed=0):
    """Fraction of true-length positions recovered over one transmission."""
    b, l = tokens.shape
    bits = model.bits_for(tokens, snr_db if model.enc_snr_denoise else None)
    symbols = 2.0 * bits - 1.0
    received = ch.awgn(symbols, ch.ChannelConfig(snr_db, seed))
    _, pred = model.decode_frames(received,
                                  snr_db if _needs_snr(model) else None)
    mask = length_mask(lengths, l).astype(bool)
    return float((pred == tokens)[mask].mean())
