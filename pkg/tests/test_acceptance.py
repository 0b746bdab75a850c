"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Desk-scale trend criteria run against a full pipeline + sweep built once per
session (or reused from SEMLINK_ACCEPT_RUNDIR when it already holds a
completed run, e.g. from `semlink train` + `semlink sweep`).
"""

import hashlib
import math
import os

import numpy as np
import pytest

from semlink import autodiff as ad
from semlink import channel as ch
from semlink import textpipe as tp
from semlink.classical import RS_7_5, bit_accounting_report
from semlink.expcli import (ExperimentConfig, emit_plotdata, run_pipeline,
                            run_sweep, verify_outputs)
from semlink.expcli.sweep import read_result_csv
from semlink.semcoder import CoderConfig, SemanticCoder, bpsk_tensor, masked_ce
from semlink.textpipe import synthetic_corpus


def _report(num, ok, detail):
    print(f"\n[acceptance] criterion {num:>2}: "
          f"{'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"criterion {num}: {detail}"


# ---------------------------------------------------------------------------
# the desk-scale artifacts (trained pipeline + full sweep)
# ---------------------------------------------------------------------------

SNR_GRID = (-4.0, -2.0, 0.0, 2.0, 4.0, 6.0, 8.0)


@pytest.fixture(scope="module")
def desk(tmp_path_factory):
    reuse = os.environ.get("SEMLINK_ACCEPT_RUNDIR")
    if reuse and os.path.exists(os.path.join(reuse, "results", "sweep.csv")):
        out = reuse
    else:
        out = str(tmp_path_factory.mktemp("desk_accept"))
        cfg = ExperimentConfig.from_preset("desk")
        run_pipeline(cfg, out)
        run_sweep(out, log=lambda *a: None)
        emit_plotdata(out, log=lambda *a: None)
    _, _, rows = read_result_csv(os.path.join(out, "results", "sweep.csv"))
    cfg = ExperimentConfig.from_file(os.path.join(out, "config.ini"))
    table = {(r["scheme"], r["snr_db"]): r for r in rows}
    return {"out": out, "cfg": cfg, "rows": rows, "table": table}


def _bleu(desk_art, scheme, snr):
    return desk_art["table"][(scheme, float(snr))]["bleu1"]


# ---------------------------------------------------------------------------
# 1-4: arithmetic / exact
# ---------------------------------------------------------------------------

def test_criterion_01_bit_accounting():
    corpus = synthetic_corpus(400, max_len=16, seed=7).sentences
    rows = {r["scheme"]: r["bits_per_sentence"]
            for r in bit_accounting_report(corpus, 16)}
    ok = True
    details = []
    for source in ("Huffman", "LZW"):
        src = rows[source]
        first = rows[f"{source} + RS"]
        cumulative = rows[f"{source} + RS + HARQ"]
        ok &= abs(first - src * 7 / 5) <= 1.0
        ok &= abs(cumulative - src * 12 / 5) <= 1.0
        ok &= rows[f"{source} + LDPC"] == first
        details.append(f"{source}: {src:.0f}->{first:.0f}/{cumulative:.0f}")
    # the published full-scale rows obey the same arithmetic within 1 bit
    for src, first, cumulative in ((421, 589, 1010), (467, 653, 1121)):
        ok &= abs(round(src * 7 / 5) - first) <= 1
        ok &= abs(round(src * 12 / 5) - cumulative) <= 1
    _report(1, ok, "channel/source rate ratios 7/5 and 12/5 within 1 bit "
            f"({'; '.join(details)}; full-scale rows consistent)")


def test_criterion_02_rs75_single_error_exhaustive():
    rng = np.random.default_rng(42)
    failures = 0
    for _ in range(100):
        data = rng.integers(0, 8, size=5)
        cw = RS_7_5.encode(data)
        for pos in range(7):
            for val in range(1, 8):
                rx = cw.copy()
                rx[pos] ^= val
                try:
                    if not np.array_equal(RS_7_5.decode(rx), data):
                        failures += 1
                except Exception:
                    failures += 1
    _report(2, failures == 0,
            f"RS(7,5) corrected 4900/4900 single-symbol patterns "
            f"({failures} failures)")


def test_criterion_03_crc_single_flip_exhaustive():
    rng = np.random.default_rng(43)
    missed = 0
    total = 0
    for length in (8, 64, 333, 1024):
        payload = rng.integers(0, 2, size=length).astype(np.uint8)
        tag = tp.crc_attach(payload)
        for pos in range(length):
            flipped = payload.copy()
            flipped[pos] ^= 1
            total += 1
            if tp.crc_check(flipped, tag):
                missed += 1
    _report(3, missed == 0,
            f"CRC-16 flagged {total - missed}/{total} single-bit flips "
            f"(payloads up to 1024 bits)")


def test_criterion_04_bleu_unit_oracles():
    rep = tp.compute_bleu("the the the the".split(), "the cat is here".split())
    ok = abs(rep.precisions[0] - 0.25) < 1e-12
    bp = tp.compute_bleu(["a", "b"], ["a", "b", "c", "d"])
    ok &= abs(bp.brevity_penalty - math.exp(-1)) < 1e-12
    _report(4, ok, f"clipped p1={rep.precisions[0]} (=1/4), "
            f"BP={bp.brevity_penalty:.12f} (=e^-1) to 1e-12")


# ---------------------------------------------------------------------------
# 5-7: numerical / property
# ---------------------------------------------------------------------------

def test_criterion_05_gradient_suite():
    cfg = CoderConfig(max_len=6, embed_dim=8, sem_dim=4, bits_per_word=5,
                      vocab_size=12, layers=1, heads=2)
    worst = 0.0
    for seed in range(20):
        rng = np.random.default_rng(1000 + seed)
        model = SemanticCoder(cfg, seed=seed)
        toks = rng.integers(4, cfg.vocab_size, size=(2, cfg.max_len))
        lens = rng.integers(4, cfg.max_len + 1, size=2)
        noise = rng.standard_normal((2 * cfg.max_len, cfg.bits_per_word)) * 0.3

        def loss_value():
            s = model.encode(toks)
            soft = model.quantize(s, hard=False)
            y = ad.add(bpsk_tensor(soft), ad.Tensor(noise))
            logits = model.decode(y, 2, cfg.max_len)
            return masked_ce(logits, toks, lens)

        model.params.zero_grads()
        loss = loss_value()
        loss.backward()
        for name in ("embed.table", "enc.tf.0.attn.wq", "enc.head.w",
                     "quant.w", "dec.dequant.w", "dec.out.b"):
            p = model.params[name]
            flat = p.tensor.data.reshape(-1)
            coords = rng.choice(flat.size, size=min(4, flat.size),
                                replace=False)
            for c in coords:
                eps = 1e-5
                orig = flat[c]
                flat[c] = orig + eps
                up = float(loss_value().data)
                flat[c] = orig - eps
                dn = float(loss_value().data)
                flat[c] = orig
                numeric = (up - dn) / (2 * eps)
                analytic = p.grad.reshape(-1)[c]
                err = abs(analytic - numeric) / max(abs(numeric), 1e-6)
                worst = max(worst, err)
    _report(5, worst < 1e-4,
            f"full-graph analytic vs central differences, max rel err "
            f"{worst:.2e} over 20 seeds")


def test_criterion_06_awgn_calibration():
    y = ch.awgn(np.zeros(10**6), ch.ChannelConfig(0.0, seed=77))
    var_ok = abs(y.var() - 0.5) < 0.005
    rng = np.random.default_rng(78)
    bits = rng.integers(0, 2, size=10**6).astype(np.uint8)
    x = ch.bpsk_map(bits)
    ber_ok = True
    detail = [f"var@0dB={y.var():.4f}"]
    for snr_db in (0.0, 2.0, 4.0, 6.0):
        rx = ch.awgn(x, ch.ChannelConfig(snr_db, seed=int(snr_db) + 100))
        ber = float((ch.bpsk_demap(rx) != bits).mean())
        theory = ch.ber_theory(snr_db)
        ber_ok &= abs(ber - theory) / theory < 0.2
        detail.append(f"{snr_db:g}dB:{ber:.2e}~{theory:.2e}")
    _report(6, var_ok and ber_ok, ", ".join(detail))


def test_criterion_07_probability_rows_normalized(desk):
    rng = np.random.default_rng(55)
    ok = True
    worst = 0.0
    for _ in range(30):
        rows = ad.softmax_rows(
            ad.Tensor(rng.standard_normal((17, 23)) * 8)).data
        worst = max(worst, float(np.abs(rows.sum(axis=-1) - 1).max()))
    model = SemanticCoder.load(os.path.join(desk["out"], "checkpoints",
                                            "base.npz"))
    for trial in range(5):
        frames = rng.standard_normal((8, model.cfg.max_len,
                                      model.cfg.bits_per_word)) * 2
        probs, _ = model.decode_frames(frames)
        worst = max(worst, float(np.abs(probs.sum(axis=-1) - 1).max()))
        ok &= (probs >= 0).all()
    _report(7, ok and worst < 1e-9,
            f"softmax/decoder rows sum to 1 within {worst:.1e}")


# ---------------------------------------------------------------------------
# 8-13: desk-scale trend reproduction
# ---------------------------------------------------------------------------

def test_criterion_08_harq_transmission_count_trends(desk):
    cfg = desk["cfg"]
    ok = True
    notes = []
    for family in ("ik-multi", "ik-unified"):
        for snr in SNR_GRID:
            scores = [_bleu(desk, f"{family}-n{i}", snr)
                      for i in range(1, cfg.n_max + 1)]
            for a, b in zip(scores, scores[1:]):
                if b < a - 0.01:
                    ok = False
                    notes.append(f"{family}@{snr:g}: {a:.3f}->{b:.3f}")
    gaps = []
    for snr in SNR_GRID:
        for i in range(1, cfg.n_max + 1):
            gap = _bleu(desk, f"ik-multi-n{i}", snr) - \
                _bleu(desk, f"ik-unified-n{i}", snr)
            gaps.append(gap)
            if gap < -0.02:
                ok = False
                notes.append(f"multi<single n{i}@{snr:g} by {-gap:.3f}")
    _report(8, ok, "BLEU non-decreasing in N for both schemes; "
            f"multi-single gap min {min(gaps):+.3f} (>= -0.02)"
            + ("; " + "; ".join(notes[:4]) if notes else ""))


def test_criterion_09_rung_ordering(desk):
    rungs = desk["cfg"].ladder
    ok = True
    for snr in SNR_GRID:
        scores = [_bleu(desk, f"rung-{w}", snr) for w in rungs]
        for a, b in zip(scores, scores[1:]):
            ok &= b >= a - 0.01
    gap_low = _bleu(desk, f"rung-{rungs[-1]}", SNR_GRID[0]) - \
        _bleu(desk, f"rung-{rungs[-2]}", SNR_GRID[0])
    gap_high = _bleu(desk, f"rung-{rungs[-1]}", SNR_GRID[-1]) - \
        _bleu(desk, f"rung-{rungs[-2]}", SNR_GRID[-1])
    ok &= gap_high < gap_low
    _report(9, ok, f"rung BLEU ordering holds; top-two gap "
            f"{gap_low:.3f}@{SNR_GRID[0]:g}dB -> {gap_high:.3f}"
            f"@{SNR_GRID[-1]:g}dB")


def test_criterion_10_policy_bits_decreasing(desk):
    cfg = desk["cfg"]
    bits = [desk["table"][("policy", snr)]["bits_mean"] / cfg.max_len
            for snr in SNR_GRID]
    ok = bits[-1] < bits[0]
    for a, b in zip(bits, bits[1:]):
        ok &= b <= a + 1e-9
    _report(10, ok, "policy bits/word " +
            " -> ".join(f"{b:.2f}" for b in bits))


def test_criterion_11_denoiser_ablation(desk):
    lo, hi = SNR_GRID[0], SNR_GRID[-1]
    base_lo = _bleu(desk, "sc-base", lo)
    base_hi = _bleu(desk, "sc-base", hi)
    gains_lo = {}
    gains_hi = {}
    for variant in ("sc-snr-denoise", "sc-self-denoise", "sc-both-denoise"):
        gains_lo[variant] = _bleu(desk, variant, lo) - base_lo
        gains_hi[variant] = _bleu(desk, variant, hi) - base_hi
    ok = gains_lo["sc-snr-denoise"] > 0 and gains_lo["sc-self-denoise"] > 0
    ok &= _bleu(desk, "sc-both-denoise", lo) >= \
        max(_bleu(desk, "sc-snr-denoise", lo),
            _bleu(desk, "sc-self-denoise", lo)) - 0.01
    for variant in gains_lo:
        ok &= gains_hi[variant] < gains_lo[variant]
    _report(11, ok,
            f"gains@{lo:g}dB snr={gains_lo['sc-snr-denoise']:+.3f} "
            f"self={gains_lo['sc-self-denoise']:+.3f} "
            f"both={gains_lo['sc-both-denoise']:+.3f}; "
            f"gains@{hi:g}dB snr={gains_hi['sc-snr-denoise']:+.3f} "
            f"self={gains_hi['sc-self-denoise']:+.3f} "
            f"both={gains_hi['sc-both-denoise']:+.3f}")


def test_criterion_12_scheme_buildup_ordering(desk):
    chain = ["basic-sc", "policy", "policy-it", "policy-it-ik",
             "policy-it-ik-denoise"]
    ok = True
    worst = ""
    for snr in SNR_GRID:
        scores = [_bleu(desk, s, snr) for s in chain]
        for (na, a), (nb, b) in zip(zip(chain, scores),
                                    zip(chain[1:], scores[1:])):
            if b < a - 0.01:
                ok = False
                worst = f"{nb}<{na}@{snr:g}dB ({b:.3f}<{a:.3f})"
    mid = ", ".join(f"{_bleu(desk, s, 0.0):.3f}" for s in chain)
    _report(12, ok, f"ordering at 0 dB: {mid}" +
            (f"; violation {worst}" if worst else ""))


def test_criterion_13_semantic_vs_classical(desk):
    ok = True
    notes = []
    for snr in (-4.0, -2.0, 0.0):
        sem = _bleu(desk, "sc-base", snr)
        cls = _bleu(desk, "huffman-ldpc", snr)
        ok &= sem > cls
        notes.append(f"{snr:g}dB sem {sem:.3f} vs cls {cls:.3f}")
    top = _bleu(desk, "huffman-ldpc", SNR_GRID[-1])
    ok &= top >= 0.99
    _report(13, ok, "; ".join(notes) +
            f"; classical@{SNR_GRID[-1]:g}dB={top:.4f} (>=0.99)")


# ---------------------------------------------------------------------------
# 14: reproducibility
# ---------------------------------------------------------------------------

def test_criterion_14_byte_identical_rerun(tmp_path):
    cfg = ExperimentConfig.from_preset(
        "desk", sentences=200, eval_sentences=40, relabel_sentences=16,
        stage1_steps=25, stage2_steps=25, stage3_steps=30, bank_steps=10,
        unified_steps=10, integrated_steps=12, denoise_steps=10,
        ablation_steps=8, policy_steps=25, n_max=2, relabel_trials=2,
        relabel_snrs=(2.0,), snr_grid=(0.0, 4.0), trials=10)

    def run_once(out):
        run_pipeline(cfg, out, log=lambda *a: None)
        run_sweep(out, log=lambda *a: None)
        emit_plotdata(out, log=lambda *a: None)
        digests = {}
        for root, _, files in os.walk(os.path.join(out, "results")):
            for name in sorted(files):
                if name.endswith(".csv"):
                    with open(os.path.join(root, name), "rb") as fh:
                        digests[name] = hashlib.sha256(fh.read()).hexdigest()
        with open(os.path.join(out, "checkpoints", "base.npz"), "rb") as fh:
            digests["base.npz"] = hashlib.sha256(fh.read()).hexdigest()
        return digests

    first = run_once(str(tmp_path / "run_a"))
    second = run_once(str(tmp_path / "run_b"))
    ok = first == second
    _report(14, ok, f"{len(first)} result files byte-identical across "
            "train+sweep reruns" if ok else
            f"mismatch in {[k for k in first if first[k] != second.get(k)]}")


def test_verify_op_on_desk_artifacts(desk):
    assert verify_outputs(desk["out"], log=lambda *a: None)
