"""Experiment configuration: one declarative TOML document per run.

Every stage derives its randomness from the single required `seed` via
purpose-keyed streams, so a config file plus a corpus fully determines every
artifact. CLI flags override individual fields one-to-one.
"""

from __future__ import annotations

import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .features import MelConfig
from .optim import SAMConfig, TrainConfig
from .rvq_codec import PRESETS, CodecPreset

__all__ = ["ExperimentConfig", "ConfigError", "load_config"]

WORKERS_ENV = "WORKBENCH_WORKERS"


class ConfigError(ValueError):
    """Invalid or incomplete experiment configuration."""


@dataclass
class ExperimentConfig:
    seed: int
    corpus_dir: Path
    work_dir: Path
    mel: MelConfig = field(default_factory=MelConfig)
    presets: list[str] = field(default_factory=lambda: ["F01", "F03"])
    holdout: list[str] = field(default_factory=list)
    corpus_domain: str = "codec"
    clip_seconds: float = 4.0
    codebook_max_frames: int = 50000
    strategy: str = "erm"
    train: TrainConfig = field(default_factory=TrainConfig)
    domains: dict[str, str] = field(default_factory=lambda: {"codec": "codec"})
    workers: int = 1

    def __post_init__(self):
        unknown = [n for n in self.presets if n not in PRESETS]
        if unknown:
            raise ConfigError(f"unknown presets {unknown}; available: {sorted(PRESETS)}")
        bad_holdout = [n for n in self.holdout if n not in self.presets]
        if bad_holdout:
            raise ConfigError(f"holdout presets not in the preset list: {bad_holdout}")
        for tag, group in self.domains.items():
            if group not in ("codec", "external"):
                raise ConfigError(f"domain {tag!r} has unknown group {group!r}")
        if self.clip_seconds <= 0:
            raise ConfigError("clip_seconds must be positive")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    def preset_objects(self) -> list[CodecPreset]:
        return [PRESETS[n] for n in self.presets]

    def effective_workers(self) -> int:
        env = os.environ.get(WORKERS_ENV)
        if env:
            try:
                n = int(env)
            except ValueError as e:
                raise ConfigError(f"{WORKERS_ENV} must be an integer, got {env!r}") from e
            if n < 1:
                raise ConfigError(f"{WORKERS_ENV} must be >= 1")
            return n
        return self.workers


def _section(doc: dict, name: str) -> dict:
    section = doc.get(name, {})
    if not isinstance(section, dict):
        raise ConfigError(f"[{name}] must be a table")
    return section


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    """Parse a TOML experiment config; `overrides` patches top-level fields
    (strategy, rho, ...) after parsing."""
    path = Path(path)
    try:
        with open(path, "rb") as f:
            doc = tomllib.load(f)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: {e}")

    if "seed" not in doc:
        raise ConfigError(f"{path}: 'seed' is required (no wall-clock defaults)")
    seed = int(doc["seed"])

    paths = _section(doc, "paths")
    if "corpus_dir" not in paths or "work_dir" not in paths:
        raise ConfigError(f"{path}: [paths] needs corpus_dir and work_dir")
    base = path.resolve().parent

    def respath(p: str) -> Path:
        q = Path(p)
        return q if q.is_absolute() else base / q

    mel_kwargs = _section(doc, "mel")
    codec = _section(doc, "codec")
    tr = _section(doc, "train")
    runtime = _section(doc, "runtime")

    try:
        mel = MelConfig(**mel_kwargs)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{path}: [mel] {e}")

    sam = SAMConfig(
        rho=float(tr.get("rho", 0.05)),
        variant="none",
        asam_eta=float(tr.get("asam_eta", 0.01)),
    )
    try:
        train_cfg = TrainConfig(
            base_lr=float(tr.get("base_lr", 5e-4)),
            epochs=int(tr.get("epochs", 10)),
            halve_every=int(tr.get("halve_every", 2)),
            batch_size=int(tr.get("batch_size", 32)),
            class_weights=(
                float(tr.get("class_weight_real", 10.0)),
                float(tr.get("class_weight_fake", 1.0)),
            ),
            seed=seed,
            sam=sam,
            selection_metric=str(tr.get("selection_metric", "dev_loss")),
        )
    except ValueError as e:
        raise ConfigError(f"{path}: [train] {e}")

    try:
        cfg = ExperimentConfig(
            seed=seed,
            corpus_dir=respath(str(paths["corpus_dir"])),
            work_dir=respath(str(paths["work_dir"])),
            mel=mel,
            presets=[str(x) for x in codec.get("presets", ["F01", "F03"])],
            holdout=[str(x) for x in codec.get("holdout", [])],
            corpus_domain=str(codec.get("domain", "codec")),
            clip_seconds=float(codec.get("clip_seconds", 4.0)),
            codebook_max_frames=int(codec.get("codebook_max_frames", 50000)),
            strategy=str(tr.get("strategy", "erm")),
            train=train_cfg,
            domains={str(k): str(v) for k, v in _section(doc, "domains").items()}
            or {"codec": "codec"},
            workers=int(runtime.get("workers", 1)),
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{path}: {e}")

    if overrides:
        cfg = apply_overrides(cfg, overrides)
    return cfg


def apply_overrides(cfg: ExperimentConfig, overrides: dict) -> ExperimentConfig:
    from dataclasses import replace

    out = cfg
    if overrides.get("strategy") is not None:
        out = replace(out, strategy=str(overrides["strategy"]))
    if overrides.get("rho") is not None:
        sam = SAMConfig(
            rho=float(overrides["rho"]),
            variant=out.train.sam.variant,
            asam_eta=out.train.sam.asam_eta,
        )
        out = replace(out, train=replace(out.train, sam=sam))
    return out
