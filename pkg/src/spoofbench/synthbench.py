"""Synthetic two-domain benchmark: a large domain with a label-correlated
shortcut direction and a small domain where that direction is pure noise.

Makes the erm / sam / csam comparison runnable in seconds without any audio:
a detector that leans on the large domain's shortcut direction v scores
poorly on the small-domain eval set, which is only separable along the
shared signal direction u. Directions are fixed: u = e0, v = e1.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from .corpus import Manifest, UttRecord
from .detector import score_features
from .metrics import ScoreSet, compute_eer
from .optim import SAMConfig, TrainConfig, train
from .seeds import rng_for

__all__ = ["SynthSpec", "SynthData", "make_synthetic", "run_comparison", "COMPARISON_STRATEGIES"]

COMPARISON_STRATEGIES = ("erm", "sam", "csam")

LARGE, SMALL = "large", "small"


@dataclass(frozen=True)
class SynthSpec:
    dim: int = 20
    n_large: int = 2000
    n_small: int = 200
    shortcut_strength: float = 3.0
    signal_strength: float = 1.0
    noise_sigma: float = 1.0
    seed: int = 0
    n_eval: int = 2000  # small-domain eval rows (balanced)

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError("dim must be >= 2 (u and v are e0 and e1)")
        if not (self.n_large >= self.n_small >= 4):
            raise ValueError("need n_large >= n_small >= 4")
        if self.shortcut_strength < 0 or self.signal_strength < 0:
            raise ValueError("strengths must be >= 0")
        if self.noise_sigma <= 0:
            raise ValueError("noise_sigma must be positive")


@dataclass
class SynthData:
    train: Manifest
    dev: Manifest
    eval: Manifest  # drawn from the small domain only
    features: dict[str, np.ndarray]


def _draw(spec: SynthSpec, rng, n: int, domain: str, subset: str, prefix: str):
    """Balanced rows for one domain; bonafide carries sign +1, spoof -1."""
    n_bona = n // 2
    signs = np.concatenate([np.ones(n_bona), -np.ones(n - n_bona)])
    x = spec.noise_sigma * rng.standard_normal((n, spec.dim))
    x[:, 0] += spec.signal_strength * signs
    if domain == LARGE:
        x[:, 1] += spec.shortcut_strength * signs
    else:
        # same-magnitude shortcut coordinate, sign independent of the label
        x[:, 1] += spec.shortcut_strength * rng.choice([-1.0, 1.0], size=n)
    records, feats = [], {}
    for i in range(n):
        bona = signs[i] > 0
        utt = f"{prefix}{i:05d}"
        records.append(
            UttRecord(
                utt_id=utt,
                path="",
                label="bonafide" if bona else "spoof",
                domain=domain,
                method="real" if bona else "synth",
                subset=subset,
            )
        )
        feats[utt] = x[i]
    return records, feats


def make_synthetic(spec: SynthSpec) -> SynthData:
    """Train/dev tables over both domains plus a small-domain-only eval
    table; deterministic under spec.seed."""
    rng = rng_for(spec.seed, "synth")
    n_dev_large = max(2, spec.n_large // 10)
    n_dev_small = max(2, spec.n_small // 10)
    parts = [
        _draw(spec, rng, spec.n_large, LARGE, "train", "L"),
        _draw(spec, rng, spec.n_small, SMALL, "train", "S"),
        _draw(spec, rng, n_dev_large, LARGE, "dev", "DL"),
        _draw(spec, rng, n_dev_small, SMALL, "dev", "DS"),
        _draw(spec, rng, spec.n_eval, SMALL, "eval", "E"),
    ]
    features: dict[str, np.ndarray] = {}
    for _, feats in parts:
        features.update(feats)
    return SynthData(
        train=Manifest(parts[0][0] + parts[1][0]),
        dev=Manifest(parts[2][0] + parts[3][0]),
        eval=Manifest(parts[4][0]),
        features=features,
    )


# Comparison training config. Batch 4 is deliberate: uniform batching then
# misses the small domain in ~2/3 of batches (its proportional floor is 0),
# while the proportional sampler's minimum-one clamp keeps it in every batch.
def comparison_config(seed: int, rho: float = 0.05) -> TrainConfig:
    return TrainConfig(
        base_lr=1e-3,
        epochs=10,
        halve_every=5,
        batch_size=4,
        class_weights=(1.0, 1.0),
        seed=seed,
        sam=SAMConfig(rho=rho, variant="sam"),
        selection_metric="dev_loss",
    )


@dataclass
class ComparisonResult:
    spec: SynthSpec
    eers: dict[str, list[float]]  # strategy -> per-seed eval EER

    def medians(self) -> dict[str, float]:
        return {s: float(np.median(v)) for s, v in self.eers.items()}


def evaluate_eer(params, records: Sequence[UttRecord], features: Mapping[str, np.ndarray]) -> float:
    x = np.stack([features[r.utt_id] for r in records])
    y = np.array([0 if r.label == "bonafide" else 1 for r in records])
    scores = score_features(params, x)
    eer, _ = compute_eer(ScoreSet(scores[y == 0], scores[y == 1]))
    return eer


def run_comparison(
    spec: SynthSpec,
    strategies: Sequence[str] = COMPARISON_STRATEGIES,
    n_seeds: int = 5,
    rho: float = 0.05,
    arch: tuple[int, ...] | None = None,
) -> ComparisonResult:
    """Train every strategy on n_seeds fresh draws, score the small-domain
    eval EER, and collect per-seed results."""
    if arch is None:
        arch = (spec.dim, 32, 16, 2)
    eers: dict[str, list[float]] = {s: [] for s in strategies}
    for k in range(n_seeds):
        data = make_synthetic(replace(spec, seed=spec.seed + k))
        for strategy in strategies:
            cfg = comparison_config(seed=spec.seed + k, rho=rho)
            params, _ = train(
                strategy, data.train.records, data.dev.records, cfg, data.features, arch=arch
            )
            eers[strategy].append(evaluate_eer(params, data.eval.records, data.features))
    return ComparisonResult(spec, eers)
