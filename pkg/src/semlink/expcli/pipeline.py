"""The integrated training pipeline: base coder, HARQ decoders, the
integrated multi-rate system, denoiser variants, relabeling and the rate
policies.  Emits one checkpoint per stage plus a manifest."""

from __future__ import annotations

import json
import os
import time

import numpy as np

from .. import denoisers
from ..channel import derive_seed
from ..harq import DecoderBank, UnifiedHarqDecoder, train_multi_decoder, train_unified
from ..ratecontrol import (PolicyNetwork, relabel, train_integrated,
                           train_policy)
from ..semcoder import (SemanticCoder, tokens_from_corpus, train_stage1,
                        train_stage2, train_end_to_end)
from ..textpipe import build_vocab, load_corpus, synthetic_corpus
from .config import ExperimentConfig

CHECKPOINTS = {
    "base": "base.npz",
    "bank": "ik_bank.npz",
    "unified": "ik_unified.npz",
    "integrated_model": "integrated_model.npz",
    "integrated_unified": "integrated_unified.npz",
    "denoised_model": "denoised_model.npz",
    "denoised_unified": "denoised_unified.npz",
    "ablation_snr": "ablation_snr.npz",
    "ablation_self": "ablation_self.npz",
    "ablation_both": "ablation_both.npz",
    "policy_plain": "policy_plain.npz",
    "policy_denoised": "policy_denoised.npz",
}


def corpus_sentences(cfg: ExperimentConfig):
    if cfg.corpus_source == "synthetic":
        return synthetic_corpus(cfg.sentences, max_len=cfg.max_len,
                                seed=cfg.corpus_seed,
                                vocab_words=min(cfg.vocab_size, 1000)).sentences
    kept, rejects = load_corpus(cfg.corpus_path, cfg.max_len)
    if len(kept) < cfg.sentences:
        raise ValueError(f"corpus {cfg.corpus_path} has only {len(kept)} "
                         f"usable sentences (rejects: {dict(rejects)})")
    return kept[: cfg.sentences]


def build_data(cfg: ExperimentConfig):
    sentences = corpus_sentences(cfg)
    vocab = build_vocab(sentences, cfg.vocab_size)
    tokens, lengths = tokens_from_corpus(sentences, vocab, cfg.max_len)
    n_eval = cfg.eval_sentences
    split = {
        "train": (tokens[:-n_eval], lengths[:-n_eval]),
        "eval": (tokens[-n_eval:], lengths[-n_eval:]),
    }
    return sentences, vocab, split


def _copy_model(model, out_dir, name):
    path = os.path.join(out_dir, name)
    model.save(path)
    return SemanticCoder.load(path)


def run_pipeline(cfg: ExperimentConfig, out_dir, log=print):
    """Execute every training stage; returns the manifest dict."""
    os.makedirs(os.path.join(out_dir, "checkpoints"), exist_ok=True)
    ck_dir = os.path.join(out_dir, "checkpoints")
    cfg.save(os.path.join(out_dir, "config.ini"))
    t_start = time.time()
    stages = []

    def record(name, history, t0):
        losses = history.get("loss", [])
        stages.append({"stage": name,
                       "steps": len(losses),
                       "seconds": round(time.time() - t0, 1),
                       "final_loss": round(float(np.mean(losses[-20:])), 6)
                       if losses else None})
        log(f"[pipeline] {name}: {stages[-1]}")

    sentences, vocab, split = build_data(cfg)
    tr_t, tr_l = split["train"]
    seed = cfg.seed
    ladder = cfg.rate_ladder()

    # -- base coder (three-stage schedule) ---------------------------------
    model = SemanticCoder(cfg.model_config(), seed=seed)
    t0 = time.time()
    h = train_stage1(model, tr_t, tr_l, steps=cfg.stage1_steps,
                     batch_size=cfg.batch_size, lr=cfg.stage12_lr,
                     seed=derive_seed(seed, "stage1"))
    record("stage1", h, t0)
    t0 = time.time()
    h = train_stage2(model, tr_t, tr_l, steps=cfg.stage2_steps,
                     batch_size=cfg.batch_size, lr=cfg.stage12_lr,
                     seed=derive_seed(seed, "stage2"))
    record("stage2", h, t0)
    t0 = time.time()
    h = train_end_to_end(model, tr_t, tr_l, steps=cfg.stage3_steps,
                         batch_size=cfg.batch_size, lr=cfg.lr,
                         seed=derive_seed(seed, "stage3"), decay=True)
    record("stage3", h, t0)
    model.save(os.path.join(ck_dir, CHECKPOINTS["base"]))

    # -- IK-HARQ decoders on the frozen base --------------------------------
    bank = DecoderBank.build(model, cfg.n_max, seed=derive_seed(seed, "bank"))
    for i in range(2, cfg.n_max + 1):
        t0 = time.time()
        h = train_multi_decoder(model, bank, i, tr_t, tr_l,
                                steps=cfg.bank_steps,
                                batch_size=cfg.batch_size, lr=cfg.lr,
                                seed=derive_seed(seed, "bank", i))
        record(f"ik-decoder-{i}", h, t0)
    bank.save(os.path.join(ck_dir, CHECKPOINTS["bank"]))

    unified = UnifiedHarqDecoder.build(model, cfg.n_max,
                                       seed=derive_seed(seed, "unified"))
    t0 = time.time()
    h = train_unified(model, unified, tr_t, tr_l, steps=cfg.unified_steps,
                      batch_size=cfg.batch_size, lr=cfg.lr,
                      seed=derive_seed(seed, "unified"))
    record("ik-unified", h, t0)
    unified.save(os.path.join(ck_dir, CHECKPOINTS["unified"]))

    # -- integrated multi-rate system ----------------------------------------
    int_model = _copy_model(model, ck_dir, CHECKPOINTS["integrated_model"])
    int_unified = UnifiedHarqDecoder.build(
        int_model, cfg.n_max, seed=derive_seed(seed, "int-unified"))
    t0 = time.time()
    h = train_integrated(int_model, int_unified, tr_t, tr_l, ladder,
                         steps=cfg.integrated_steps,
                         batch_size=cfg.batch_size, lr=cfg.lr,
                         seed=derive_seed(seed, "integrated"))
    record("integrated", h, t0)
    int_model.save(os.path.join(ck_dir, CHECKPOINTS["integrated_model"]))
    int_unified.save(os.path.join(ck_dir, CHECKPOINTS["integrated_unified"]))

    # -- denoiser work ---------------------------------------------------------
    if cfg.denoisers:
        for which, name in ((("snr",), "ablation_snr"),
                            (("self",), "ablation_self"),
                            (("snr", "self"), "ablation_both")):
            abl = SemanticCoder.load(os.path.join(ck_dir, CHECKPOINTS["base"]))
            t0 = time.time()
            h = denoisers.retrain_with_denoisers(
                abl, tr_t, tr_l, which, steps=cfg.ablation_steps,
                batch_size=cfg.batch_size, lr=cfg.lr,
                seed=derive_seed(seed, "ablation", *which))
            record(f"ablation-{'-'.join(which)}", h, t0)
            abl.save(os.path.join(ck_dir, CHECKPOINTS[name]))

        dn_model = SemanticCoder.load(
            os.path.join(ck_dir, CHECKPOINTS["integrated_model"]))
        dn_unified = UnifiedHarqDecoder.load(
            os.path.join(ck_dir, CHECKPOINTS["integrated_unified"]), dn_model)
        rng = np.random.default_rng(np.random.PCG64(derive_seed(seed, "dn")))
        dn_model.enable_denoisers(snr=True, rng=rng)  # encoder-side precode
        dn_unified.stack.enable_denoisers(snr=True, self_attn=True, rng=rng)
        t0 = time.time()
        h = train_integrated(dn_model, dn_unified, tr_t, tr_l, ladder,
                             steps=cfg.denoise_steps,
                             batch_size=cfg.batch_size, lr=cfg.lr,
                             seed=derive_seed(seed, "denoised"))
        record("integrated-denoised", h, t0)
        dn_model.save(os.path.join(ck_dir, CHECKPOINTS["denoised_model"]))
        dn_unified.save(os.path.join(ck_dir, CHECKPOINTS["denoised_unified"]))

    # -- relabel + policies -----------------------------------------------------
    rl_t = tr_t[: cfg.relabel_sentences]
    rl_l = tr_l[: cfg.relabel_sentences]
    variants = [("plain", int_model, int_unified, "policy_plain",
                 "labels_plain.txt")]
    if cfg.denoisers:
        variants.append(("denoised", dn_model, dn_unified, "policy_denoised",
                         "labels_denoised.txt"))
    os.makedirs(os.path.join(out_dir, "results"), exist_ok=True)
    for tag, m, u, pol_name, label_file in variants:
        t0 = time.time()
        dataset = relabel(m, u, rl_t, rl_l, vocab, ladder, cfg.relabel_snrs,
                          trials=cfg.relabel_trials,
                          success_threshold=cfg.relabel_threshold,
                          seed=derive_seed(seed, "relabel", tag))
        dataset.save(os.path.join(out_dir, "results", label_file))
        stages.append({"stage": f"relabel-{tag}",
                       "steps": int(dataset.labels.size),
                       "seconds": round(time.time() - t0, 1),
                       "final_loss": float(dataset.labels.mean()),
                       "all_rungs_failed": int(dataset.all_rungs_failed)})
        log(f"[pipeline] relabel-{tag}: {stages[-1]}")
        policy = PolicyNetwork(m.cfg, len(ladder),
                               seed=derive_seed(seed, "policy-init", tag))
        t0 = time.time()
        h = train_policy(policy, m, rl_t, dataset, steps=cfg.policy_steps,
                         seed=derive_seed(seed, "policy", tag))
        record(f"policy-{tag}", h, t0)
        stages[-1]["holdout_accuracy"] = round(h["holdout_accuracy"], 4)
        policy.save(os.path.join(ck_dir, CHECKPOINTS[pol_name]))

    manifest = {
        "config_hash": cfg.config_hash(),
        "seed": seed,
        "denoisers": cfg.denoisers,
        "stages": stages,
        "checkpoints": {k: v for k, v in CHECKPOINTS.items()
                        if cfg.denoisers or not (
                            k.startswith("ablation") or "denoised" in k)},
        "total_seconds": round(time.time() - t_start, 1),
    }
    with open(os.path.join(out_dir, "manifest.json"), "w",
              encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    log(f"[pipeline] done in {manifest['total_seconds']:.0f}s")
    return manifest
