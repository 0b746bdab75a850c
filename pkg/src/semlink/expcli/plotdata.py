"""Per-figure CSV bundles derived from the sweep results.

One CSV per reproduced figure (fig10..fig16) plus a README describing the
columns.  Output is a pure function of the sweep CSVs: identical inputs give
byte-identical bundles.
"""

from __future__ import annotations

import os

from .config import ExperimentConfig
from .sweep import read_result_csv, write_result_csv

_BUNDLE_README = """Figure data bundles
===================

Each CSV carries a `# config_hash=...,seed=...` header line, then a column
header row.  All BLEU values are means over the sweep's eval sentences.

fig10.csv  scheme, snr_db, bleu1       base coder, IK-HARQ at N=1/2 (both
                                       decoder schemes) and the classical
                                       chains, with and without HARQ.
fig11.csv  scheme, snr_db, bleu1       IK-HARQ BLEU for N = 1..n_max,
                                       multi-decoder vs unified decoder.
fig12.csv  scheme, snr_db, bleu1       fixed ladder rungs vs the policy.
fig13.csv  snr_db, rung_bits, fraction distribution of the policy's chosen
                                       bit length per SNR.
fig14.csv  variant, snr_db, bits_per_word
                                       mean transmitted bits per word under
                                       the policy, with/without denoising.
fig15.csv  scheme, snr_db, bleu1       denoiser ablation (base vs SNR-cond.
                                       vs self-attention vs both).
fig16.csv  scheme, snr_db, bleu1       integrated system build-up ordering.
"""


def _pick(rows, schemes):
    keep = [r for r in rows if r["scheme"] in schemes]
    order = {s: i for i, s in enumerate(schemes)}
    keep.sort(key=lambda r: (order[r["scheme"]], r["snr_db"]))
    return keep


def emit_plotdata(out_dir, log=print):
    cfg = ExperimentConfig.from_file(os.path.join(out_dir, "config.ini"))
    res_dir = os.path.join(out_dir, "results")
    _, _, rows = read_result_csv(os.path.join(res_dir, "sweep.csv"))
    plot_dir = os.path.join(res_dir, "plotdata")
    os.makedirs(plot_dir, exist_ok=True)
    have = {r["scheme"] for r in rows}
    ladder = cfg.rate_ladder()

    def bleu_bundle(name, schemes):
        schemes = [s for s in schemes if s in have]
        data = [{"scheme": r["scheme"], "snr_db": r["snr_db"],
                 "bleu1": r["bleu1"]} for r in _pick(rows, schemes)]
        write_result_csv(os.path.join(plot_dir, name),
                         ["scheme", "snr_db", "bleu1"], data, cfg)
        log(f"[plotdata] {name}: {len(data)} rows")

    bleu_bundle("fig10.csv",
                ["sc-base", "ik-multi-n1", "ik-multi-n2", "ik-unified-n1",
                 "ik-unified-n2", "huffman-rs", "huffman-ldpc", "lzw-rs",
                 "lzw-ldpc", "huffman-rs-harq", "huffman-ldpc-harq",
                 "lzw-rs-harq", "lzw-ldpc-harq"])
    bleu_bundle("fig11.csv",
                [f"ik-multi-n{i}" for i in range(1, cfg.n_max + 1)] +
                [f"ik-unified-n{i}" for i in range(1, cfg.n_max + 1)])
    bleu_bundle("fig12.csv",
                [f"rung-{w}" for w in ladder.rungs] + ["policy"])
    bleu_bundle("fig15.csv",
                ["sc-base", "sc-snr-denoise", "sc-self-denoise",
                 "sc-both-denoise"])
    bleu_bundle("fig16.csv",
                ["basic-sc", "policy", "policy-it", "policy-it-ik",
                 "policy-it-ik-denoise"])

    # fig13: the policy's rung-selection histogram per SNR
    rungs_path = os.path.join(res_dir, "rungs.csv")
    fig13 = []
    if os.path.exists(rungs_path):
        _, _, rung_rows = read_result_csv(rungs_path)
        policy_rows = [r for r in rung_rows if r["scheme"] == "policy"]
        by_snr = {}
        for r in policy_rows:
            by_snr.setdefault(r["snr_db"], 0)
            by_snr[r["snr_db"]] += r["count"]
        for r in policy_rows:
            fig13.append({"snr_db": r["snr_db"], "rung_bits": r["rung_bits"],
                          "fraction": r["count"] / by_snr[r["snr_db"]]})
        fig13.sort(key=lambda r: (r["snr_db"], r["rung_bits"]))
    write_result_csv(os.path.join(plot_dir, "fig13.csv"),
                     ["snr_db", "rung_bits", "fraction"], fig13, cfg)
    log(f"[plotdata] fig13.csv: {len(fig13)} rows")

    # fig14: mean bits per word under the policy, by denoising variant
    fig14 = []
    for variant, scheme in (("no-denoising", "policy"),
                            ("denoising", "policy-denoise")):
        for r in _pick(rows, [scheme]):
            fig14.append({"variant": variant, "snr_db": r["snr_db"],
                          "bits_per_word": r["bits_mean"] / cfg.max_len})
    write_result_csv(os.path.join(plot_dir, "fig14.csv"),
                     ["variant", "snr_db", "bits_per_word"], fig14, cfg)
    log(f"[plotdata] fig14.csv: {len(fig14)} rows")

    with open(os.path.join(plot_dir, "README.md"), "w",
              encoding="utf-8") as fh:
        fh.write(_BUNDLE_README)
    return plot_dir
