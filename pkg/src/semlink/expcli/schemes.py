"""Sweep scheme registry and the batched session runners.

Every cell (scheme, snr_db) runs `trials` eval sentences with per-sentence
seeds derived from (master seed, scheme, snr_db, trial index, attempt), so
results are independent of batching and worker count.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import json
import os

import numpy as np

from .. import channel as ch
from ..classical import ChainConfig, ClassicalChain
from ..harq import DecoderBank, UnifiedHarqDecoder, decode_ik
from ..ratecontrol import PolicyNetwork
from ..semcoder import SemanticCoder
from ..textpipe import bleu1 as _bleu1, bleu4 as _bleu4
from ..textpipe import sentence_matches_tag, sentence_tag
from .config import ExperimentConfig
from .pipeline import CHECKPOINTS, build_data

CLASSICAL_SCHEMES = ["huffman-rs", "huffman-rs-harq", "huffman-ldpc",
                     "huffman-ldpc-harq", "lzw-rs", "lzw-rs-harq",
                     "lzw-ldpc", "lzw-ldpc-harq"]


def scheme_names(cfg: ExperimentConfig):
    ladder = cfg.rate_ladder()
    names = ["sc-base"]
    names += [f"ik-multi-n{i}" for i in range(1, cfg.n_max + 1)]
    names += [f"ik-unified-n{i}" for i in range(1, cfg.n_max + 1)]
    names += [f"rung-{w}" for w in ladder.rungs]
    names += ["basic-sc", "policy", "policy-it", "policy-it-ik"]
    if cfg.denoisers:
        names += ["sc-snr-denoise", "sc-self-denoise", "sc-both-denoise",
                  "policy-denoise", "policy-it-ik-denoise"]
    names += CLASSICAL_SCHEMES
    return names


class ModelBundle:
    """Lazy loader for everything a sweep worker needs."""

    def __init__(self, out_dir):
        self.out_dir = out_dir
        self.cfg = ExperimentConfig.from_file(os.path.join(out_dir,
                                                           "config.ini"))
        self.ladder = self.cfg.rate_ladder()
        sentences, vocab, split = build_data(self.cfg)
        self.sentences = sentences
        self.vocab = vocab
        self.eval_tokens, self.eval_lengths = split["eval"]
        self._cache = {}

    def _ck(self, name):
        return os.path.join(self.out_dir, "checkpoints", CHECKPOINTS[name])

    def model(self, name):
        key = f"model:{name}"
        if key not in self._cache:
            self._cache[key] = SemanticCoder.load(self._ck(name))
        return self._cache[key]

    def bank(self):
        if "bank" not in self._cache:
            self._cache["bank"] = DecoderBank.load(self._ck("bank"),
                                                   self.model("base"))
        return self._cache["bank"]

    def unified(self, which="unified", model_name="base"):
        key = f"uni:{which}"
        if key not in self._cache:
            self._cache[key] = UnifiedHarqDecoder.load(
                self._ck(which), self.model(model_name))
        return self._cache[key]

    def policy(self, which):
        key = f"policy:{which}"
        if key not in self._cache:
            model = self.model("integrated_model" if which == "policy_plain"
                               else "denoised_model")
            self._cache[key] = PolicyNetwork.load(self._ck(which), model.cfg)
        return self._cache[key]

    def chain(self, source, code, harq):
        key = f"chain:{source}:{code}:{harq}"
        if key not in self._cache:
            self._cache[key] = ClassicalChain(
                ChainConfig(source, code, harq), self.sentences)
        return self._cache[key]


@dataclass
class CellResult:
    scheme: str
    snr_db: float
    bleu1: np.ndarray
    bleu4: np.ndarray
    bits: np.ndarray
    attempts: np.ndarray
    success: np.ndarray
    rung_counts: dict = field(default_factory=dict)
    traces: list = field(default_factory=list)

    def row(self):
        n = len(self.bleu1)
        ci = 1.96 * float(np.std(self.bleu1)) / np.sqrt(n) if n > 1 else 0.0
        return {
            "scheme": self.scheme, "snr_db": self.snr_db,
            "bleu1": float(np.mean(self.bleu1)),
            "bleu4": float(np.mean(self.bleu4)),
            "bits_mean": float(np.mean(self.bits)),
            "attempts_mean": float(np.mean(self.attempts)),
            "success_rate": float(np.mean(self.success)),
            "ci": ci,
        }


def run_cell(bundle: ModelBundle, scheme, snr_db, trials, master_seed):
    toks = bundle.eval_tokens[:trials]
    lens = bundle.eval_lengths[:trials]
    if scheme in CLASSICAL_SCHEMES:
        return _classical_cell(bundle, scheme, snr_db, toks, lens, master_seed)
    return _semantic_cell(bundle, scheme, snr_db, toks, lens, master_seed)


# ---------------------------------------------------------------------------
# classical cells
# ---------------------------------------------------------------------------

def _classical_cell(bundle, scheme, snr_db, toks, lens, master_seed):
    parts = scheme.split("-")
    source, code = parts[0], parts[1]
    harq = scheme.endswith("-harq")
    chain = bundle.chain(source, code, harq)
    vocab = bundle.vocab
    n = len(toks)
    b1 = np.zeros(n)
    b4 = np.zeros(n)
    bits = np.zeros(n)
    attempts = np.zeros(n)
    success = np.zeros(n, dtype=bool)
    for i in range(n):
        ref = [vocab.to_token(int(t)) for t in toks[i, : lens[i]]]
        out = chain.transmit(ref, snr_db,
                             ch.derive_seed(master_seed, scheme, snr_db, i))
        b1[i] = _bleu1(out.words, ref) if out.words else 0.0
        b4[i] = _bleu4(out.words, ref) if out.words else 0.0
        bits[i] = out.bits_on_air
        attempts[i] = out.attempts
        success[i] = out.success
    return CellResult(scheme, snr_db, b1, b4, bits, attempts, success)


# ---------------------------------------------------------------------------
# semantic cells
# ---------------------------------------------------------------------------

def _spec_for(bundle, scheme):
    """Resolve a scheme name to (model, decode kind, options)."""
    cfg = bundle.cfg
    min_rung = bundle.ladder.rungs[0]
    if scheme == "basic-sc":
        scheme = f"rung-{min_rung}"
    if scheme == "sc-base":
        return dict(model=bundle.model("base"), kind="single")
    if scheme == "sc-snr-denoise":
        return dict(model=bundle.model("ablation_snr"), kind="single")
    if scheme == "sc-self-denoise":
        return dict(model=bundle.model("ablation_self"), kind="single")
    if scheme == "sc-both-denoise":
        return dict(model=bundle.model("ablation_both"), kind="single")
    if scheme.startswith("ik-multi-n"):
        return dict(model=bundle.model("base"), kind="fixed-n",
                    decoder=bundle.bank(), n=int(scheme.rsplit("n", 1)[1]))
    if scheme.startswith("ik-unified-n"):
        return dict(model=bundle.model("base"), kind="fixed-n",
                    decoder=bundle.unified("unified", "base"),
                    n=int(scheme.rsplit("n", 1)[1]))
    if scheme.startswith("rung-"):
        return dict(model=bundle.model("integrated_model"), kind="session",
                    decoder=bundle.unified("integrated_unified",
                                           "integrated_model"),
                    width=int(scheme.split("-")[1]), it=False, ik=False)
    if scheme in ("policy", "policy-it", "policy-it-ik"):
        return dict(model=bundle.model("integrated_model"), kind="session",
                    decoder=bundle.unified("integrated_unified",
                                           "integrated_model"),
                    policy=bundle.policy("policy_plain"),
                    it="it" in scheme.split("-"), ik=scheme.endswith("ik"))
    if scheme == "policy-denoise":
        return dict(model=bundle.model("denoised_model"), kind="session",
                    decoder=bundle.unified("denoised_unified",
                                           "denoised_model"),
                    policy=bundle.policy("policy_denoised"),
                    it=False, ik=False)
    if scheme == "policy-it-ik-denoise":
        return dict(model=bundle.model("denoised_model"), kind="session",
                    decoder=bundle.unified("denoised_unified",
                                           "denoised_model"),
                    policy=bundle.policy("policy_denoised"),
                    it=True, ik=True)
    raise ValueError(f"unknown scheme {scheme!r}")


def _words_of(vocab, pred_row, length):
    return [vocab.to_token(int(t)) for t in pred_row[:length]]


def _semantic_cell(bundle, scheme, snr_db, toks, lens, master_seed):
    spec = _spec_for(bundle, scheme)
    model = spec["model"]
    vocab = bundle.vocab
    cfg = model.cfg
    n, l = toks.shape
    full = cfg.bits_per_word
    refs = [_words_of(vocab, toks[i], lens[i]) for i in range(n)]
    tags = [sentence_tag(r) for r in refs]
    seeds = [ch.derive_seed(master_seed, scheme, float(snr_db), i)
             for i in range(n)]

    bits_frames = model.bits_for(toks, snr_db if model.enc_snr_denoise
                                 else None)
    symbols = 2.0 * bits_frames - 1.0

    b1 = np.zeros(n)
    b4 = np.zeros(n)
    bits_sent = np.zeros(n)
    attempts = np.zeros(n, dtype=np.int64)
    success = np.zeros(n, dtype=bool)
    traces = [[] for _ in range(n)]
    rung_counts = {}

    def rx_full_frame(i, attempt):
        seed = ch.derive_seed(seeds[i], attempt)
        return ch.awgn(symbols[i], ch.ChannelConfig(snr_db, seed))

    def score(i, pred_row):
        words = _words_of(vocab, pred_row, lens[i])
        ok = sentence_matches_tag(words, tags[i])
        b1[i] = _bleu1(words, refs[i])
        b4[i] = _bleu4(words, refs[i])
        success[i] = ok
        traces[i].append({"attempt": int(attempts[i]), "snr_db": snr_db,
                          "crc_ok": bool(ok), "decoded": " ".join(words),
                          "bleu1": round(b1[i], 6)})
        return ok

    if spec["kind"] == "single":
        rx = np.stack([rx_full_frame(i, 1) for i in range(n)])
        attempts[:] = 1
        bits_sent[:] = l * full
        _, pred = model.decode_frames(rx, snr_db)
        for i in range(n):
            score(i, pred[i])
    elif spec["kind"] == "fixed-n":
        n_tx = spec["n"]
        frames = [np.stack([rx_full_frame(i, a) for i in range(n)])
                  for a in range(1, n_tx + 1)]
        attempts[:] = n_tx
        bits_sent[:] = n_tx * l * full
        _, pred = decode_ik(model, spec["decoder"], frames, snr_db)
        for i in range(n):
            score(i, pred[i])
    else:
        _session_cell(bundle, spec, snr_db, toks, lens, symbols, seeds,
                      b1, b4, bits_sent, attempts, success, traces,
                      rung_counts, score, rx_full_frame)

    return CellResult(scheme, snr_db, b1, b4, bits_sent, attempts, success,
                      rung_counts, traces)


def _session_cell(bundle, spec, snr_db, toks, lens, symbols, seeds,
                  b1, b4, bits_sent, attempts, success, traces, rung_counts,
                  score, rx_full_frame):
    """Masked first transmission, optional incremental escalation, optional
    full-frame IK retransmissions on the unified decoder."""
    model = spec["model"]
    decoder = spec["decoder"]
    ladder = bundle.ladder
    vocab = bundle.vocab
    cfg = model.cfg
    n, l = toks.shape
    full = cfg.bits_per_word

    if "policy" in spec and spec.get("policy") is not None:
        s_en = model.encode_batch(toks, snr_db if model.enc_snr_denoise
                                  else None)
        rungs = np.array([spec["policy"].select(s_en[i], snr_db)
                          for i in range(n)], dtype=np.int64)
    else:
        rungs = np.full(n, ladder.rungs.index(spec["width"]), dtype=np.int64)
    for r in rungs:
        w = ladder.rungs[int(r)]
        rung_counts[w] = rung_counts.get(w, 0) + 1

    buffers = np.zeros((n, l, full))
    widths = np.array([ladder.rungs[int(r)] for r in rungs])
    for i in range(n):
        rx = rx_full_frame(i, 1)
        buffers[i, :, : widths[i]] = rx[:, : widths[i]]
    attempts[:] = 1
    bits_sent[:] = l * widths

    def decode_subset(idx, frames_for):
        """frames_for(i) -> list of (l, full) frames for sentence i."""
        groups = {}
        for i in idx:
            groups.setdefault(len(frames_for(i)), []).append(i)
        for count, members in sorted(groups.items()):
            stacked = [np.stack([frames_for(i)[k] for i in members])
                       for k in range(count)]
            _, pred = decode_ik(model, decoder, stacked, snr_db)
            for j, i in enumerate(members):
                score(i, pred[j])

    decode_subset(range(n), lambda i: [buffers[i]])

    if spec.get("it"):
        while True:
            escalate = np.flatnonzero(~success & (widths < full))
            if escalate.size == 0:
                break
            for i in escalate:
                r = int(rungs[i])
                lo, hi = ladder.rungs[r], ladder.rungs[r + 1]
                attempts[i] += 1
                rx = rx_full_frame(i, int(attempts[i]))
                buffers[i, :, lo:hi] = rx[:, lo:hi]
                widths[i] = hi
                rungs[i] = r + 1
                bits_sent[i] += l * (hi - lo)
            decode_subset(escalate, lambda i: [buffers[i]])

    if spec.get("ik"):
        extra = [[] for _ in range(n)]
        n_max = decoder.n_max
        while True:
            active = np.flatnonzero(~success &
                                    (np.array([len(e) for e in extra]) + 1
                                     < n_max) & (widths == full))
            if active.size == 0:
                break
            for i in active:
                attempts[i] += 1
                extra[i].append(rx_full_frame(i, int(attempts[i])))
                bits_sent[i] += l * full
            decode_subset(active, lambda i: [buffers[i]] + extra[i])


def write_traces(path, scheme, snr_db, traces):
    with open(path, "w", encoding="utf-8") as fh:
        for sid, records in enumerate(traces):
            for rec in records:
                fh.write(json.dumps({"scheme": scheme, "snr_db": snr_db,
                                     "session": sid, **rec},
                                    sort_keys=True) + "\n")
