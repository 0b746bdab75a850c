"""Sweep orchestration and CSV emission.

Cells are embarrassingly parallel; per-cell seeds derive from the master
seed and the cell identity, so any worker count gives byte-identical CSVs.
All files carry a `# config_hash=...,seed=...` first line that `verify`
re-checks.
"""

from __future__ import annotations

import csv
import io
import multiprocessing
import os

from .config import ExperimentConfig
from .schemes import ModelBundle, run_cell, scheme_names, write_traces

SWEEP_COLUMNS = ["scheme", "snr_db", "bleu1", "bleu4", "bits_mean",
                 "attempts_mean", "success_rate", "ci"]
TRACE_SCHEMES = ("policy-it", "policy-it-ik", "policy-it-ik-denoise")

_worker_bundle = None


def _init_worker(out_dir):
    global _worker_bundle
    _worker_bundle = ModelBundle(out_dir)


def _run_cell_task(args):
    scheme, snr_db, trials, master_seed = args
    return run_cell(_worker_bundle, scheme, snr_db, trials, master_seed)


def resolve_schemes(cfg: ExperimentConfig, requested=None):
    known = scheme_names(cfg)
    if requested is None:
        requested = cfg.schemes
    if requested == "all":
        return known
    picked = []
    for name in (requested.split(",") if isinstance(requested, str)
                 else requested):
        name = name.strip()
        if not name:
            continue
        if name not in known:
            raise ValueError(f"unknown scheme {name!r}; known: {known}")
        picked.append(name)
    return picked


def run_sweep(out_dir, schemes=None, jobs=None, trials=None, log=print):
    """Run every (scheme, snr) cell and write results/sweep.csv (+rungs.csv,
    traces for the session schemes).  Returns the list of row dicts."""
    bundle = ModelBundle(out_dir)
    cfg = bundle.cfg
    picked = resolve_schemes(cfg, schemes)
    trials = trials or cfg.trials
    jobs = jobs or cfg.jobs
    tasks = [(scheme, float(snr), trials, cfg.seed)
             for scheme in picked for snr in cfg.snr_grid]

    if jobs > 1 and len(tasks) > 1:
        with multiprocessing.get_context("spawn").Pool(
                jobs, initializer=_init_worker, initargs=(out_dir,)) as pool:
            cells = pool.map(_run_cell_task, tasks)
    else:
        cells = []
        for scheme, snr, tr, seed in tasks:
            cells.append(run_cell(bundle, scheme, snr, tr, seed))
            log(f"[sweep] {scheme} @ {snr:+.1f} dB: "
                f"bleu1={cells[-1].row()['bleu1']:.4f}")

    res_dir = os.path.join(out_dir, "results")
    os.makedirs(res_dir, exist_ok=True)
    rows = [cell.row() for cell in cells]
    order = {name: i for i, name in enumerate(picked)}
    rows.sort(key=lambda r: (order[r["scheme"]], r["snr_db"]))
    write_result_csv(os.path.join(res_dir, "sweep.csv"), SWEEP_COLUMNS, rows,
                     cfg)

    rung_rows = []
    for cell in cells:
        for width, count in sorted(cell.rung_counts.items()):
            rung_rows.append({"scheme": cell.scheme, "snr_db": cell.snr_db,
                              "rung_bits": width, "count": count})
    rung_rows.sort(key=lambda r: (order[r["scheme"]], r["snr_db"],
                                  r["rung_bits"]))
    write_result_csv(os.path.join(res_dir, "rungs.csv"),
                     ["scheme", "snr_db", "rung_bits", "count"], rung_rows,
                     cfg)

    trace_dir = os.path.join(res_dir, "traces")
    os.makedirs(trace_dir, exist_ok=True)
    for cell in cells:
        if cell.scheme in TRACE_SCHEMES and cell.traces:
            name = f"{cell.scheme}_snr{cell.snr_db:+.0f}.jsonl"
            write_traces(os.path.join(trace_dir, name), cell.scheme,
                         cell.snr_db, cell.traces)
    return rows


def format_value(value):
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def write_result_csv(path, columns, rows, cfg: ExperimentConfig):
    """Deterministic CSV: UTF-8, LF, fixed float formatting, hash header."""
    buf = io.StringIO()
    buf.write(f"# config_hash={cfg.config_hash()},seed={cfg.seed}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([format_value(row[c]) for c in columns])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


def read_result_csv(path):
    """Returns (header_meta dict, column names, row dicts)."""
    with open(path, encoding="utf-8", newline="") as fh:
        first = fh.readline().strip()
        meta = {}
        if first.startswith("#"):
            for part in first[1:].strip().split(","):
                key, _, val = part.partition("=")
                meta[key.strip()] = val.strip()
            reader = csv.reader(fh)
        else:
            fh.seek(0)
            reader = csv.reader(fh)
        columns = next(reader)
        rows = []
        for raw in reader:
            row = {}
            for col, val in zip(columns, raw):
                try:
                    row[col] = float(val) if "." in val or "e" in val.lower() \
                        else int(val)
                except ValueError:
                    row[col] = val
            rows.append(row)
    return meta, columns, rows


def verify_outputs(out_dir, log=print):
    """Re-hash the persisted config and confirm every result CSV embeds it."""
    cfg = ExperimentConfig.from_file(os.path.join(out_dir, "config.ini"))
    expected = cfg.config_hash()
    res_dir = os.path.join(out_dir, "results")
    problems = []
    checked = 0
    for root, _, files in os.walk(res_dir):
        for name in sorted(files):
            if not name.endswith(".csv"):
                continue
            path = os.path.join(root, name)
            meta, _, _ = read_result_csv(path)
            checked += 1
            if meta.get("config_hash") != expected:
                problems.append(f"{path}: hash "
                                f"{meta.get('config_hash')} != {expected}")
            elif meta.get("seed") != str(cfg.seed):
                problems.append(f"{path}: seed {meta.get('seed')} != "
                                f"{cfg.seed}")
            else:
                log(f"[verify] OK {os.path.relpath(path, out_dir)}")
    if problems:
        for p in problems:
            log(f"[verify] FAIL {p}")
    elif checked == 0:
        log("[verify] no result CSVs found")
    return not problems and checked > 0
