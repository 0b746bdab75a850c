"""Command-line entry point: train, sweep, relabel, account, plotdata, verify."""

from __future__ import annotations

import argparse
import os
import sys

from ..classical import bit_accounting_report
from ..ratecontrol import relabel
from .config import ExperimentConfig
from .pipeline import CHECKPOINTS, build_data, run_pipeline
from .plotdata import emit_plotdata
from .sweep import run_sweep, verify_outputs, write_result_csv


def _load_config(args):
    if args.config:
        return ExperimentConfig.from_file(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    return ExperimentConfig.from_preset(args.preset, **overrides)


def _config_from_outdir(args):
    path = os.path.join(args.out, "config.ini")
    if os.path.exists(path):
        return ExperimentConfig.from_file(path)
    return _load_config(args)


def cmd_train(args):
    cfg = _load_config(args)
    os.makedirs(args.out, exist_ok=True)
    run_pipeline(cfg, args.out)
    return 0


def cmd_sweep(args):
    rows = run_sweep(args.out, schemes=args.schemes, jobs=args.jobs,
                     trials=args.trials)
    print(f"[sweep] wrote {len(rows)} rows to "
          f"{os.path.join(args.out, 'results', 'sweep.csv')}")
    return 0


def cmd_relabel(args):
    from ..harq import UnifiedHarqDecoder
    from ..semcoder import SemanticCoder

    cfg = _config_from_outdir(args)
    ck = os.path.join(args.out, "checkpoints")
    model = SemanticCoder.load(os.path.join(ck,
                                            CHECKPOINTS["integrated_model"]))
    unified = UnifiedHarqDecoder.load(
        os.path.join(ck, CHECKPOINTS["integrated_unified"]), model)
    _, vocab, split = build_data(cfg)
    toks, lens = split["train"]
    toks, lens = toks[: cfg.relabel_sentences], lens[: cfg.relabel_sentences]
    dataset = relabel(model, unified, toks, lens, vocab, cfg.rate_ladder(),
                      cfg.relabel_snrs, trials=cfg.relabel_trials,
                      success_threshold=cfg.relabel_threshold, seed=cfg.seed)
    out = os.path.join(args.out, "results", "labels_plain.txt")
    os.makedirs(os.path.dirname(out), exist_ok=True)
    dataset.save(out)
    print(f"[relabel] wrote {dataset.labels.size} labels to {out} "
          f"(all-rungs-failed: {dataset.all_rungs_failed})")
    return 0


def cmd_account(args):
    cfg = _config_from_outdir(args)
    from .pipeline import corpus_sentences

    sentences = corpus_sentences(cfg)
    rows = bit_accounting_report(sentences, cfg.bits_per_word)
    out_rows = [{"scheme": r["scheme"], "B": r["B"], "rate": r["rate"],
                 "bits_per_sentence": r["bits_per_sentence"]} for r in rows]
    res_dir = os.path.join(args.out, "results")
    os.makedirs(res_dir, exist_ok=True)
    path = os.path.join(res_dir, "accounting.csv")
    write_result_csv(path, ["scheme", "B", "rate", "bits_per_sentence"],
                     out_rows, cfg)
    for r in out_rows:
        print(f"{r['scheme']:24s} {str(r['B']):>4s} {r['rate']:>5s} "
              f"{r['bits_per_sentence']:>9s}"
              if isinstance(r['bits_per_sentence'], str) else
              f"{r['scheme']:24s} {str(r['B']):>4s} {r['rate']:>5s} "
              f"{r['bits_per_sentence']:>9.1f}")
    print(f"[account] wrote {path}")
    return 0


def cmd_plotdata(args):
    plot_dir = emit_plotdata(args.out)
    print(f"[plotdata] bundles in {plot_dir}")
    return 0


def cmd_verify(args):
    ok = verify_outputs(args.out)
    print("[verify] PASS" if ok else "[verify] FAIL")
    return 0 if ok else 1


def build_parser():
    parser = argparse.ArgumentParser(
        prog="semlink",
        description="Link-level semantic communication experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_out=True):
        p.add_argument("--config", help="experiment config (ini)")
        p.add_argument("--preset", choices=("desk", "paper"), default="desk")
        p.add_argument("--seed", type=int, default=None)
        if needs_out:
            p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("train", help="run the full training pipeline")
    common(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("sweep", help="run SNR sweeps over trained checkpoints")
    common(p)
    p.add_argument("--schemes", default=None,
                   help="comma-separated scheme list (default: config)")
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--trials", type=int, default=None)
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("relabel", help="rebuild the rate-label dataset")
    common(p)
    p.set_defaults(fn=cmd_relabel)

    p = sub.add_parser("account", help="bits-per-sentence accounting table")
    common(p)
    p.set_defaults(fn=cmd_account)

    p = sub.add_parser("plotdata", help="emit per-figure CSV bundles")
    common(p)
    p.set_defaults(fn=cmd_plotdata)

    p = sub.add_parser("verify", help="re-hash result files and confirm")
    common(p)
    p.set_defaults(fn=cmd_verify)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
