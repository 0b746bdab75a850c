"""Adaptive bit-rate control: prefix-masked multi-rate training, the rate
ladder, dataset relabeling, the policy network, and incremental-transmission
splicing.

Masking convention: a transmission at ladder rung w carries the first w bit
columns of the full-width frame; the receiver zero-fills the remaining
columns before dequantization.  Because transmitted bits are always a
prefix, later increments splice into the same buffer coherently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import channel as ch
from .autodiff import (ParamStore, Tensor, concat_rows, cross_entropy,
                       no_grad, relu, reshape)
from .checkpoint import load_checkpoint, save_checkpoint
from .denoisers import standardize_snr
from .harq import UnifiedHarqDecoder, decode_ik_tensor
from .layers import affine, init_affine
from .semcoder import (bpsk_tensor, masked_ce, _batch_iter, _check_loss,
                       _lr_at, _optimizer)
from .textpipe import sentence_matches_tag, sentence_tag


class RateControlError(ValueError):
    pass


@dataclass(frozen=True)
class RateLadder:
    rungs: tuple

    def __post_init__(self):
        rungs = tuple(int(r) for r in self.rungs)
        object.__setattr__(self, "rungs", rungs)
        if len(rungs) < 2:
            raise RateControlError("ladder needs at least two rungs")
        if any(nxt <= prev for prev, nxt in zip(rungs, rungs[1:])):
            raise RateControlError(f"ladder must be strictly increasing: {rungs}")

    @classmethod
    def desk(cls):
        return cls((8, 12, 16))

    @classmethod
    def paper(cls):
        return cls((30, 45, 60))

    @property
    def top(self):
        return self.rungs[-1]

    def __len__(self):
        return len(self.rungs)

    def validate_for(self, cfg):
        if self.top != cfg.bits_per_word:
            raise RateControlError(
                f"top rung {self.top} must equal quantizer width "
                f"{cfg.bits_per_word}")


def mask_to_width(bits2d, width, full_width):
    """Keep the first `width` columns, zero-fill the rest (graph op)."""
    if width == full_width:
        return bits2d
    from .autodiff import slice_cols
    kept = slice_cols(bits2d, 0, width)
    pad = Tensor(np.zeros((bits2d.shape[0], full_width - width)))
    return concat_rows([kept, pad])


def transmit_prefix_tensor(bits2d, width, full_width, snr_db, rng):
    """Channel pass over the first `width` columns; tail stays zero."""
    from .autodiff import slice_cols
    kept = slice_cols(bits2d, 0, width)
    rx = ch.awgn_tensor(bpsk_tensor(kept), snr_db, rng)
    if width == full_width:
        return rx
    pad = Tensor(np.zeros((bits2d.shape[0], full_width - width)))
    return concat_rows([rx, pad])


def next_increment(ladder: RateLadder, rung_index):
    """Column span carried by the next incremental transmission."""
    if rung_index >= len(ladder) - 1:
        raise RateControlError(
            "already at the top rung; switch to a full retransmission")
    return ladder.rungs[rung_index], ladder.rungs[rung_index + 1]


def splice_increment(buffer, received_cols, lo, hi):
    """Insert freshly received columns [lo, hi) into the padded buffer."""
    if hi - lo != received_cols.shape[-1]:
        raise RateControlError("increment width mismatch")
    buffer[..., lo:hi] = received_cols
    return buffer


# ---------------------------------------------------------------------------
# multi-rate training (base decoder) and the integrated trainer (unified)
# ---------------------------------------------------------------------------

def train_multirate(model, tokens, lengths, ladder: RateLadder, *, steps,
                    batch_size=32, lr=1e-3, seed=0, snr_range=(-2.0, 6.0),
                    warmup=50, decay=True, log_every=0, rung_log=None):
    """Finetune the full coder with a uniformly drawn prefix width per batch."""
    ladder.validate_for(model.cfg)
    rng = np.random.default_rng(np.random.PCG64(seed))
    model.params.set_trainable(True)
    opt = _optimizer(model.params, ("",), lr)
    full = model.cfg.bits_per_word
    history = []
    for step, idx in enumerate(_batch_iter(rng, len(tokens), batch_size, steps)):
        tb, lb = tokens[idx], lengths[idx]
        b, l = tb.shape
        snr_db = float(rng.uniform(*snr_range))
        width = int(ladder.rungs[int(rng.integers(len(ladder)))])
        if rung_log is not None:
            rung_log.append(width)
        opt.lr = _lr_at(step, steps, lr, warmup, decay)
        model.params.zero_grads()
        s = model.encode(tb, snr_db=snr_db if model.enc_snr_denoise else None)
        bits = model.quantize(s)
        y = transmit_prefix_tensor(bits, width, full, snr_db, rng)
        logits = model.decode(y, b, l,
                              snr_db if model.decoder.snr_denoise else None)
        loss = masked_ce(logits, tb, lb)
        history.append(_check_loss(loss, "multirate", seed, model.cfg))
        loss.backward()
        opt.step()
        if log_every and step % log_every == 0:
            print(f"multirate step {step} w={width} loss {history[-1]:.4f}")
    return {"loss": history}


def train_integrated(model, unified: UnifiedHarqDecoder, tokens, lengths,
                     ladder: RateLadder, *, steps, batch_size=32, lr=1e-3,
                     seed=0, snr_range=(-2.0, 6.0), warmup=50, decay=True,
                     train_coder=True, single_tx_frac=0.5, log_every=0):
    """Joint curriculum for the integrated system: per batch, draw the
    transmission count; a single transmission gets a random ladder width
    (masked prefix, lower rungs oversampled since the first transmission is
    the common case at run time), retransmissions are always full-width."""
    ladder.validate_for(model.cfg)
    rng = np.random.default_rng(np.random.PCG64(seed))
    model.params.set_trainable(bool(train_coder))
    unified.store.set_trainable(True)
    opt_params = ([p for p in model.params if p.trainable] if train_coder
                  else [])
    opt_params += list(unified.store)
    from .autodiff import Adam

    opt = Adam(opt_params, lr=lr)
    full = model.cfg.bits_per_word
    rung_p = np.full(len(ladder), 0.6 / max(len(ladder) - 1, 1))
    rung_p[0] = 0.4
    history = []
    for step, idx in enumerate(_batch_iter(rng, len(tokens), batch_size, steps)):
        tb, lb = tokens[idx], lengths[idx]
        b, l = tb.shape
        snr_db = float(rng.uniform(*snr_range))
        if unified.n_max == 1 or rng.random() < single_tx_frac:
            n_tx = 1
        else:
            n_tx = int(rng.integers(2, unified.n_max + 1))
        opt.lr = _lr_at(step, steps, lr, warmup, decay)
        model.params.zero_grads()
        unified.store.zero_grads()
        s = model.encode(tb, snr_db=snr_db if model.enc_snr_denoise else None)
        bits = model.quantize(s)
        if n_tx == 1:
            width = int(ladder.rungs[int(rng.choice(len(ladder), p=rung_p))])
            frames = [transmit_prefix_tensor(bits, width, full, snr_db, rng)]
        else:
            symbols = bpsk_tensor(bits)
            frames = [ch.awgn_tensor(symbols, snr_db, rng)
                      for _ in range(n_tx)]
        logits, _ = decode_ik_tensor(
            unified, frames, b, l,
            snr_db if unified.stack.snr_denoise else None)
        loss = masked_ce(logits, tb, lb)
        history.append(_check_loss(loss, "integrated", seed, model.cfg))
        loss.backward()
        opt.step()
        if log_every and step % log_every == 0:
            print(f"integrated step {step} n={n_tx} loss {history[-1]:.4f}")
    model.params.set_trainable(True)
    return {"loss": history}


# ---------------------------------------------------------------------------
# relabeling
# ---------------------------------------------------------------------------

@dataclass
class RateLabelDataset:
    sentence_ids: np.ndarray
    snr_db: np.ndarray
    labels: np.ndarray
    ladder: RateLadder
    all_rungs_failed: int = 0

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("# sentence_id,snr_db,label\n")
            for sid, snr, lab in zip(self.sentence_ids, self.snr_db,
                                     self.labels):
                fh.write(f"{int(sid)},{float(snr):g},{int(lab)}\n")

    @classmethod
    def load(cls, path, ladder):
        sids, snrs, labs = [], [], []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if line.startswith("#") or not line.strip():
                    continue
                a, b, c = line.strip().split(",")
                sids.append(int(a))
                snrs.append(float(b))
                labs.append(int(c))
        return cls(np.array(sids), np.array(snrs), np.array(labs), ladder)


def _decode_padded(model, decoder, buffers, snr_db):
    """buffers: (b, l, B) spliced/padded frames -> argmax tokens."""
    b, l, w = buffers.shape
    with no_grad():
        y = Tensor(buffers.reshape(b * l, w))
        if isinstance(decoder, UnifiedHarqDecoder):
            logits, _ = decode_ik_tensor(
                decoder, [y], b, l,
                snr_db if decoder.stack.snr_denoise else None)
        else:
            logits = decoder.forward(y, b, l,
                                     snr_db if decoder.snr_denoise else None)
        return logits.data.reshape(b, l, model.cfg.vocab_size).argmax(axis=-1)


def _exact_ok(model, decoder, tokens, lengths, vocab, tags, width, snr_db,
              seeds):
    """One masked transmission per sentence; True where CRC passes."""
    b, l = tokens.shape
    full = model.cfg.bits_per_word
    bits = model.bits_for(tokens, snr_db if model.enc_snr_denoise else None)
    buffers = np.zeros((b, l, full))
    for i in range(b):
        rx = ch.awgn(2.0 * bits[i, :, :width] - 1.0,
                     ch.ChannelConfig(snr_db, seeds[i]))
        buffers[i, :, :width] = rx
    pred = _decode_padded(model, decoder, buffers, snr_db)
    ok = np.zeros(b, dtype=bool)
    for i in range(b):
        words = [vocab.to_token(int(t)) for t in pred[i, : lengths[i]]]
        ok[i] = sentence_matches_tag(words, tags[i])
    return ok


def relabel(model, decoder, tokens, lengths, vocab, ladder: RateLadder,
            snr_grid, *, trials=10, success_threshold=0.9, seed=0,
            log_every=0):
    """Label each (sentence, SNR) with the smallest rung whose exact-recovery
    rate over `trials` transmissions reaches the threshold; sentences failing
    every rung get the top rung and a diagnostics count."""
    n = len(tokens)
    vocab_words = [[vocab.to_token(int(t)) for t in tokens[i, : lengths[i]]]
                   for i in range(n)]
    tags = [sentence_tag(w) for w in vocab_words]
    sids, snrs, labels = [], [], []
    failed_everywhere = 0
    for snr_db in snr_grid:
        remaining = np.arange(n)
        chosen = np.full(n, -1, dtype=np.int64)
        for rung_idx, width in enumerate(ladder.rungs):
            if remaining.size == 0:
                break
            wins = np.zeros(remaining.size, dtype=np.int64)
            for trial in range(trials):
                seeds = [ch.derive_seed(seed, "relabel", float(snr_db),
                                        int(width), trial, int(i))
                         for i in remaining]
                ok = _exact_ok(model, decoder, tokens[remaining],
                               lengths[remaining], vocab,
                               [tags[i] for i in remaining],
                               int(width), float(snr_db), seeds)
                wins += ok
            passed = wins >= int(np.ceil(success_threshold * trials))
            chosen[remaining[passed]] = rung_idx
            remaining = remaining[~passed]
        failed_everywhere += remaining.size
        chosen[remaining] = len(ladder) - 1
        sids.extend(range(n))
        snrs.extend([float(snr_db)] * n)
        labels.extend(chosen.tolist())
        if log_every:
            print(f"relabel snr {snr_db:+.1f}: "
                  f"mean rung {np.mean(chosen):.2f}")
    return RateLabelDataset(np.array(sids), np.array(snrs),
                            np.array(labels), ladder, failed_everywhere)


# ---------------------------------------------------------------------------
# policy network
# ---------------------------------------------------------------------------

class PolicyNetwork:
    """Per-word pooling -> concat standardized SNR -> rung logits."""

    def __init__(self, cfg, n_rungs, seed=0):
        self.cfg = cfg
        self.n_rungs = n_rungs
        self.params = ParamStore()
        rng = np.random.default_rng(np.random.PCG64(seed))
        init_affine(self.params, "pool", rng, cfg.sem_dim, 1)
        init_affine(self.params, "head", rng, cfg.max_len + 1, n_rungs)

    def logits(self, s_en_2d, b, l, snr_db):
        pooled = relu(affine(self.params, "pool", s_en_2d))
        pooled = reshape(pooled, (b, l))
        snr_col = Tensor(np.full((b, 1), standardize_snr(snr_db)))
        feat = concat_rows([pooled, snr_col])
        return affine(self.params, "head", feat)

    def select(self, s_en, snr_db):
        """s_en: (l, m) or (b, l, m) -> rung index / indices (argmax)."""
        arr = np.asarray(s_en)
        squeeze = arr.ndim == 2
        if squeeze:
            arr = arr[None]
        b, l, m = arr.shape
        with no_grad():
            logits = self.logits(Tensor(arr.reshape(b * l, m)), b, l, snr_db)
        picks = logits.data.argmax(axis=-1)
        return int(picks[0]) if squeeze else picks

    def save(self, path):
        save_checkpoint(path, self.params.state_dict(),
                        {"kind": "rate-policy", "n_rungs": self.n_rungs,
                         "sem_dim": self.cfg.sem_dim,
                         "max_len": self.cfg.max_len})

    @classmethod
    def load(cls, path, cfg):
        arrays, meta = load_checkpoint(path)
        if meta.get("kind") != "rate-policy":
            raise RateControlError(f"{path}: not a policy checkpoint")
        policy = cls(cfg, meta["n_rungs"])
        policy.params.load_state(arrays)
        return policy


def train_policy(policy: PolicyNetwork, model, tokens, dataset, *, steps,
                 batch_size=64, lr=3e-3, seed=0, holdout_frac=0.1,
                 log_every=0):
    """Classification training on the relabeled dataset.

    Sentence features are the deployed encoder's semantic vectors, computed
    per distinct SNR (the encoder may condition on it) and cached."""
    labels = np.unique(dataset.labels)
    if labels.size == 1:
        print("warning: single-class rate dataset; policy will be constant")
    rng = np.random.default_rng(np.random.PCG64(seed))
    rows = rng.permutation(len(dataset.labels))
    n_hold = max(1, int(len(rows) * holdout_frac))
    hold, train = rows[:n_hold], rows[n_hold:]

    cache = {}
    with no_grad():
        for snr_db in np.unique(dataset.snr_db):
            cache[float(snr_db)] = model.encode_batch(
                tokens, snr_db if model.enc_snr_denoise else None)

    def features(row_ids):
        feats = np.stack([cache[float(dataset.snr_db[r])]
                          [dataset.sentence_ids[r]] for r in row_ids])
        return feats

    opt = _optimizer(policy.params, ("",), lr)
    history = []
    b_l = policy.cfg.max_len
    for step in range(steps):
        idx = train[rng.integers(0, len(train), size=min(batch_size,
                                                         len(train)))]
        snr_vals = dataset.snr_db[idx]
        feats = features(idx)
        b = feats.shape[0]
        policy.params.zero_grads()
        pooled = relu(affine(policy.params, "pool",
                             Tensor(feats.reshape(b * b_l, -1))))
        pooled = reshape(pooled, (b, b_l))
        snr_col = Tensor(np.array([standardize_snr(s)
                                   for s in snr_vals])[:, None])
        logits = affine(policy.params, "head",
                        concat_rows([pooled, snr_col]))
        loss = cross_entropy(logits, dataset.labels[idx])
        history.append(_check_loss(loss, "policy", seed, policy.cfg))
        loss.backward()
        opt.step()
        if log_every and step % log_every == 0:
            print(f"policy step {step} loss {history[-1]:.4f}")

    correct = 0
    for r in hold:
        sel = policy.select(cache[float(dataset.snr_db[r])]
                            [dataset.sentence_ids[r]], dataset.snr_db[r])
        correct += sel == dataset.labels[r]
    return {"loss": history, "holdout_accuracy": correct / len(hold)}
