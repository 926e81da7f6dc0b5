"""Training strategies: Adam with a stepwise-halved LR, and the erm / sam /
asam / csam loss regimes.

The sharpness-aware step is two-pass: gradients at theta give the ascent
vector eps = rho * g / ||g|| (asam rescales elementwise by |theta| + eta
first); gradients are then re-evaluated at theta + eps and applied by Adam
to the ORIGINAL theta. eps is never persisted into the parameters. csam is
the same step applied to domain-proportional batches from the sampler.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from . import sampler
from .detector import Grads, ModelParams, init_params, loss_and_grad, score_features
from .metrics import ScoreSet, compute_eer
from .seeds import mix_seed, rng_for

__all__ = [
    "AdamState",
    "SAMConfig",
    "TrainConfig",
    "EpochStats",
    "lr_at",
    "adam_init",
    "adam_step",
    "sam_perturbation",
    "train_step",
    "train",
    "write_history_csv",
]

STRATEGIES = ("erm", "sam", "asam", "csam")


@dataclass
class AdamState:
    """First/second moment accumulators and step counter."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass(frozen=True)
class SAMConfig:
    rho: float = 0.05
    variant: str = "none"  # none | sam | asam | csam
    asam_eta: float = 0.01

    def __post_init__(self):
        if self.variant not in ("none", "sam", "asam", "csam"):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.variant != "none" and self.rho <= 0:
            raise ValueError("rho must be positive for sharpness-aware variants")
        if self.asam_eta < 0:
            raise ValueError("asam_eta must be >= 0")


@dataclass(frozen=True)
class TrainConfig:
    base_lr: float = 5e-4
    epochs: int = 10
    halve_every: int = 2
    batch_size: int = 32
    class_weights: tuple[float, float] = (10.0, 1.0)  # (real, fake)
    seed: int = 0
    sam: SAMConfig = field(default_factory=SAMConfig)
    selection_metric: str = "dev_loss"  # dev_loss | dev_eer

    def __post_init__(self):
        if self.epochs < 1 or self.halve_every < 1:
            raise ValueError("epochs and halve_every must be >= 1")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if self.selection_metric not in ("dev_loss", "dev_eer"):
            raise ValueError(f"unknown selection_metric {self.selection_metric!r}")


def lr_at(epoch: int, cfg: TrainConfig) -> float:
    """base_lr * 0.5 ** floor(epoch / halve_every)."""
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    return cfg.base_lr * 0.5 ** (epoch // cfg.halve_every)


def adam_init(params: ModelParams) -> AdamState:
    shapes = [np.zeros_like(a) for a in params.arrays()]
    return AdamState(m=shapes, v=[np.zeros_like(a) for a in params.arrays()])


def adam_step(
    state: AdamState, params: ModelParams, grads: Grads, lr: float
) -> tuple[ModelParams, AdamState]:
    """One bias-corrected Adam update; inputs are left untouched."""
    t = state.t + 1
    new_m, new_v, flat_updates = [], [], []
    for m, v, g in zip(state.m, state.v, grads.arrays()):
        m2 = state.beta1 * m + (1.0 - state.beta1) * g
        v2 = state.beta2 * v + (1.0 - state.beta2) * g * g
        mhat = m2 / (1.0 - state.beta1**t)
        vhat = v2 / (1.0 - state.beta2**t)
        new_m.append(m2)
        new_v.append(v2)
        flat_updates.append(lr * mhat / (np.sqrt(vhat) + state.eps))
    arrays = params.arrays()
    updated = [a - u for a, u in zip(arrays, flat_updates)]
    weights = updated[0::2]
    biases = updated[1::2]
    return (
        ModelParams(weights, biases, params.arch, params.seed),
        AdamState(new_m, new_v, t, state.beta1, state.beta2, state.eps),
    )


def _flat(arrays: Sequence[np.ndarray]) -> np.ndarray:
    return np.concatenate([a.ravel() for a in arrays])


def _like(vec: np.ndarray, arrays: Sequence[np.ndarray]) -> list[np.ndarray]:
    out, at = [], 0
    for a in arrays:
        out.append(vec[at : at + a.size].reshape(a.shape))
        at += a.size
    return out


def sam_perturbation(params: ModelParams, grads: Grads, cfg: SAMConfig) -> Grads:
    """Ascent vector over the flattened parameter vector.

    sam:  eps = rho * g / ||g||_2
    asam: eps = rho * T^2 g / ||T g||_2 with T = |theta| + asam_eta

    A zero gradient yields a zero perturbation (caller flags the skip).
    """
    g = _flat(grads.arrays())
    if cfg.variant in ("sam", "csam", "none"):
        norm = np.linalg.norm(g)
        eps = cfg.rho * g / norm if norm > 0 else np.zeros_like(g)
    elif cfg.variant == "asam":
        t = np.abs(_flat(params.arrays())) + cfg.asam_eta
        tg = t * g
        norm = np.linalg.norm(tg)
        eps = cfg.rho * t * tg / norm if norm > 0 else np.zeros_like(g)
    else:  # pragma: no cover - guarded by SAMConfig
        raise ValueError(cfg.variant)
    parts = _like(eps, grads.arrays())
    return Grads(parts[0::2], parts[1::2])


def _shifted(params: ModelParams, eps: Grads) -> ModelParams:
    return ModelParams(
        [w + e for w, e in zip(params.weights, eps.weights)],
        [b + e for b, e in zip(params.biases, eps.biases)],
        params.arch,
        params.seed,
    )


def train_step(
    strategy: str,
    params: ModelParams,
    state: AdamState,
    batch: np.ndarray,
    labels: np.ndarray,
    cfg: TrainConfig,
    lr: float,
) -> tuple[ModelParams, AdamState, float, bool]:
    """One update. Returns (params', state', reported_loss, ascent_skipped).

    erm: single loss/grad pass. sam/asam/csam: pass 1 at theta gives eps;
    pass 2 at theta + eps gives the gradients Adam applies to theta. The
    reported loss is the perturbed (pass-2) loss for the two-pass variants.
    A zero pass-1 gradient degrades the step to erm and is flagged.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    if strategy == "erm":
        loss, grads = loss_and_grad(params, batch, labels, cfg.class_weights)
        new_params, new_state = adam_step(state, params, grads, lr)
        return new_params, new_state, loss, False

    variant = "asam" if strategy == "asam" else "sam"
    sam_cfg = replace(cfg.sam, variant=variant)
    _, grads1 = loss_and_grad(params, batch, labels, cfg.class_weights)
    eps = sam_perturbation(params, grads1, sam_cfg)
    skipped = not any(np.any(a) for a in eps.arrays())
    if skipped:
        loss2, grads2 = loss_and_grad(params, batch, labels, cfg.class_weights)
    else:
        loss2, grads2 = loss_and_grad(_shifted(params, eps), batch, labels, cfg.class_weights)
    new_params, new_state = adam_step(state, params, grads2, lr)
    return new_params, new_state, loss2, skipped


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    lr: float
    train_loss: float
    dev_loss: float
    dev_eer: float
    ascent_skips: int = 0


def write_history_csv(history: Sequence[EpochStats], path) -> None:
    with open(path, "w", newline="") as f:
        out = csv.writer(f)
        out.writerow(["epoch", "lr", "train_loss", "dev_loss", "dev_eer"])
        for h in history:
            out.writerow([h.epoch, repr(h.lr), repr(h.train_loss), repr(h.dev_loss), repr(h.dev_eer)])


def _gather(records, features: Mapping[str, np.ndarray]):
    ids = [r.utt_id for r in records]
    missing = [u for u in ids if u not in features]
    if missing:
        raise KeyError(f"features missing for {len(missing)} records, e.g. {missing[:3]}")
    x = np.stack([np.asarray(features[u], dtype=np.float64) for u in ids])
    y = np.array([0 if r.label == "bonafide" else 1 for r in records], dtype=np.int64)
    domains = [r.domain for r in records]
    return x, y, domains


def _dev_metrics(params, x, y, class_weights):
    loss, _ = loss_and_grad(params, x, y, class_weights)
    scores = score_features(params, x)
    if (y == 0).any() and (y == 1).any():
        eer, _ = compute_eer(ScoreSet(scores[y == 0], scores[y == 1]))
    else:
        eer = float("nan")
    return loss, eer


def train(
    strategy: str,
    train_records,
    dev_records,
    cfg: TrainConfig,
    features: Mapping[str, np.ndarray],
    arch: tuple[int, ...] | None = None,
) -> tuple[ModelParams, list[EpochStats]]:
    """Full training run; returns (best params by selection metric, history).

    train_records / dev_records are sequences of manifest records (utt_id,
    label, domain); features maps utt_id to the input vector. csam builds
    domain-proportional batches; the other strategies shuffle uniformly.
    Ties on the selection metric go to the earlier epoch.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    train_records = list(train_records)
    dev_records = list(dev_records)
    if not dev_records:
        raise ValueError("empty dev set")
    x_train, y_train, domains = _gather(train_records, features)
    x_dev, y_dev, _ = _gather(dev_records, features)
    if not ((y_train == 0).any() and (y_train == 1).any()):
        raise ValueError("training data must contain both classes")

    if arch is None:
        arch = (x_train.shape[1], 128, 64, 2)
    params = init_params(mix_seed(cfg.seed, "init") % 2**32, arch)
    state = adam_init(params)

    plan = None
    if strategy == "csam":
        sizes: dict[str, int] = {}
        for d in domains:
            sizes[d] = sizes.get(d, 0) + 1
        plan = sampler.batch_counts(sizes, cfg.batch_size)

    history: list[EpochStats] = []
    best: tuple[float, int, ModelParams] | None = None
    for epoch in range(cfg.epochs):
        lr = lr_at(epoch, cfg)
        if plan is not None:
            batches = sampler.make_batches(domains, plan, cfg.seed, epoch)
        else:
            order = rng_for(cfg.seed, f"batch/{epoch}").permutation(len(train_records))
            batches = [
                order[i : i + cfg.batch_size].tolist()
                for i in range(0, len(order), cfg.batch_size)
            ]
        losses = []
        skips = 0
        for idx in batches:
            params, state, loss, skipped = train_step(
                strategy, params, state, x_train[idx], y_train[idx], cfg, lr
            )
            losses.append(loss)
            skips += int(skipped)
        dev_loss, dev_eer = _dev_metrics(params, x_dev, y_dev, cfg.class_weights)
        history.append(
            EpochStats(epoch, lr, float(np.mean(losses)), dev_loss, dev_eer, skips)
        )
        metric = dev_loss if cfg.selection_metric == "dev_loss" else dev_eer
        if np.isnan(metric):
            raise ValueError(
                f"selection metric {cfg.selection_metric} is NaN at epoch {epoch} "
                "(dev set needs both classes for dev_eer)"
            )
        if best is None or metric < best[0]:
            best = (metric, epoch, params.copy())
    assert best is not None
    return best[2], history
