"""Experiment configuration: flat INI-style sections, strictly validated.

Unknown keys are hard errors (silent typos are the main reproducibility
killer).  The canonical text form is persisted verbatim next to results and
its hash is embedded in every result file.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields
import hashlib
import io

from ..ratecontrol import RateLadder
from ..semcoder import CoderConfig


class ConfigError(ValueError):
    pass


_MODEL_PRESETS = {"desk": CoderConfig.desk, "paper": CoderConfig.paper}
_LADDER_PRESETS = {"desk": (8, 12, 16), "paper": (30, 45, 60)}


@dataclass
class ExperimentConfig:
    # [model]
    preset: str = "desk"
    max_len: int = 16
    embed_dim: int = 64
    sem_dim: int = 8
    bits_per_word: int = 16
    vocab_size: int = 1000
    layers: int = 3
    heads: int = 4
    # [corpus]
    corpus_source: str = "synthetic"
    corpus_path: str = ""
    sentences: int = 2000
    corpus_seed: int = 7
    eval_sentences: int = 500
    relabel_sentences: int = 160
    # [train]
    seed: int = 1
    batch_size: int = 32
    lr: float = 1e-3
    stage12_lr: float = 2e-3
    stage1_steps: int = 400
    stage2_steps: int = 500
    stage3_steps: int = 2600
    bank_steps: int = 450
    unified_steps: int = 600
    integrated_steps: int = 2000
    denoise_steps: int = 900
    ablation_steps: int = 400
    policy_steps: int = 700
    n_max: int = 4
    denoisers: bool = True
    # [rate]
    ladder: tuple = (8, 12, 16)
    relabel_trials: int = 10
    relabel_threshold: float = 0.6
    relabel_snrs: tuple = (-4.0, -2.0, 0.0, 2.0, 4.0, 6.0, 8.0)
    # [sweep]
    snr_grid: tuple = (-4.0, -2.0, 0.0, 2.0, 4.0, 6.0, 8.0)
    trials: int = 500
    schemes: str = "all"
    jobs: int = 1

    _SECTIONS = {
        "model": ("preset", "max_len", "embed_dim", "sem_dim",
                  "bits_per_word", "vocab_size", "layers", "heads"),
        "corpus": ("corpus_source", "corpus_path", "sentences", "corpus_seed",
                   "eval_sentences", "relabel_sentences"),
        "train": ("seed", "batch_size", "lr", "stage12_lr", "stage1_steps",
                  "stage2_steps", "stage3_steps", "bank_steps",
                  "unified_steps", "integrated_steps", "denoise_steps",
                  "ablation_steps", "policy_steps", "n_max", "denoisers"),
        "rate": ("ladder", "relabel_trials", "relabel_threshold",
                 "relabel_snrs"),
        "sweep": ("snr_grid", "trials", "schemes", "jobs"),
    }

    # -- construction --------------------------------------------------------

    @classmethod
    def from_preset(cls, preset="desk", **overrides):
        if preset not in _MODEL_PRESETS:
            raise ConfigError(f"unknown preset {preset!r}")
        model = _MODEL_PRESETS[preset]()
        cfg = cls(preset=preset, max_len=model.max_len,
                  embed_dim=model.embed_dim, sem_dim=model.sem_dim,
                  bits_per_word=model.bits_per_word,
                  vocab_size=model.vocab_size, layers=model.layers,
                  heads=model.heads, ladder=_LADDER_PRESETS[preset])
        for key, value in overrides.items():
            if not hasattr(cfg, key):
                raise ConfigError(f"unknown config key {key!r}")
            setattr(cfg, key, value)
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path):
        parser = configparser.ConfigParser()
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
        preset = parser.get("model", "preset", fallback="desk")
        cfg = cls.from_preset(preset)
        types = {f.name: f.type for f in fields(cls)}
        for section in parser.sections():
            if section not in cls._SECTIONS:
                raise ConfigError(f"unknown config section [{section}]")
            for key, raw in parser.items(section):
                if key not in cls._SECTIONS[section]:
                    raise ConfigError(
                        f"unknown key {key!r} in section [{section}]")
                setattr(cfg, key, _parse(key, raw, getattr(cfg, key)))
        cfg.validate()
        return cfg

    def validate(self):
        if self.corpus_source not in ("synthetic", "file"):
            raise ConfigError(f"corpus_source must be synthetic|file, got "
                              f"{self.corpus_source!r}")
        if self.corpus_source == "file" and not self.corpus_path:
            raise ConfigError("corpus_source=file needs corpus_path")
        if self.eval_sentences >= self.sentences:
            raise ConfigError("eval_sentences must leave a training split")
        try:
            RateLadder(self.ladder)
        except Exception as exc:
            raise ConfigError(str(exc)) from exc
        if self.n_max < 1:
            raise ConfigError("n_max must be >= 1")
        if self.embed_dim % self.heads:
            raise ConfigError("embed_dim must divide evenly into heads")

    # -- derived views --------------------------------------------------------

    def model_config(self):
        return CoderConfig(max_len=self.max_len, embed_dim=self.embed_dim,
                           sem_dim=self.sem_dim,
                           bits_per_word=self.bits_per_word,
                           vocab_size=self.vocab_size, layers=self.layers,
                           heads=self.heads)

    def rate_ladder(self):
        return RateLadder(self.ladder)

    # -- canonical text -------------------------------------------------------

    def to_text(self):
        out = io.StringIO()
        for section, keys in self._SECTIONS.items():
            out.write(f"[{section}]\n")
            for key in keys:
                out.write(f"{key} = {_fmt(getattr(self, key))}\n")
            out.write("\n")
        return out.getvalue()

    def config_hash(self):
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()[:16]

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_text())


def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (tuple, list)):
        return ",".join(_fmt(v) for v in value)
    if isinstance(value, float):
        return f"{value:g}"
    return str(value)


def _parse(key, raw, current):
    raw = raw.strip()
    if isinstance(current, bool):
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"{key}: expected boolean, got {raw!r}")
    if isinstance(current, int):
        return int(raw)
    if isinstance(current, float):
        return float(raw)
    if isinstance(current, tuple):
        parts = [p for p in raw.split(",") if p.strip()]
        elem = current[0] if current else 0.0
        cast = int if isinstance(elem, int) else float
        return tuple(cast(p) for p in parts)
    return raw
