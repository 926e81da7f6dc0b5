"""Compact two-class spoofing classifier: pooled log-mel stats -> MLP -> logits.

Index 0 = bonafide/real, index 1 = spoof/fake. No dropout or normalization
layers, so the loss is a deterministic function of (params, batch) and the
two-pass training strategies stay exact. All math in float64; gradients are
exact reverse-mode derivatives.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .features import MelSpectrogram, pool_stats

__all__ = [
    "ModelParams",
    "Grads",
    "init_params",
    "forward",
    "loss_and_grad",
    "score",
    "score_features",
    "save_checkpoint",
    "load_checkpoint",
]

DEFAULT_ARCH = (160, 128, 64, 2)
CKPT_MAGIC = "SBCKPT"
CKPT_VERSION = 1


@dataclass
class ModelParams:
    """Weight matrices [fan_in, fan_out] and bias vectors per layer."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    arch: tuple[int, ...]
    seed: int

    def arrays(self) -> list[np.ndarray]:
        """Interleaved [W0, b0, W1, b1, ...] view of the parameters."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out

    def copy(self) -> "ModelParams":
        return ModelParams(
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.arch,
            self.seed,
        )


@dataclass
class Grads:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out


def init_params(seed: int, arch: tuple[int, ...] = DEFAULT_ARCH) -> ModelParams:
    """Glorot-uniform weights, zero biases, from a seeded PRNG."""
    if len(arch) < 2 or arch[-1] != 2:
        raise ValueError(f"arch must end with 2 output logits, got {arch}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(arch[:-1], arch[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return ModelParams(weights, biases, tuple(arch), seed)


def forward(p: ModelParams, batch: np.ndarray) -> np.ndarray:
    """Logits [batch, 2] for feature rows [batch, arch[0]]."""
    x = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    if x.shape[1] != p.arch[0]:
        raise ValueError(f"feature dim {x.shape[1]} != arch input {p.arch[0]}")
    h = x
    last = len(p.weights) - 1
    for i, (w, b) in enumerate(zip(p.weights, p.biases)):
        h = h @ w + b
        if i < last:
            h = np.maximum(h, 0.0)
    return h


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def loss_and_grad(
    p: ModelParams,
    batch: np.ndarray,
    labels: np.ndarray,
    class_weights: tuple[float, float] = (10.0, 1.0),
) -> tuple[float, Grads]:
    """Weighted cross-entropy and its exact gradients.

    labels: int array, 0 = bonafide, 1 = spoof. class_weights = (w_real,
    w_fake). Loss = mean_i w(y_i) * (-log softmax(logits_i)[y_i]).
    """
    x = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    y = np.asarray(labels, dtype=np.int64).ravel()
    if x.shape[0] == 0:
        raise ValueError("empty batch")
    if x.shape[0] != y.size:
        raise ValueError(f"batch rows {x.shape[0]} != labels {y.size}")
    if np.any((y != 0) & (y != 1)):
        raise ValueError("labels must be 0 (bonafide) or 1 (spoof)")
    n = x.shape[0]
    w = np.where(y == 0, class_weights[0], class_weights[1]).astype(np.float64)

    # forward, keeping activations for the backward pass
    acts = [x]
    h = x
    last = len(p.weights) - 1
    for i, (wt, b) in enumerate(zip(p.weights, p.biases)):
        h = h @ wt + b
        if i < last:
            h = np.maximum(h, 0.0)
        acts.append(h)
    logits = acts[-1]
    probs = _softmax(logits)
    picked = probs[np.arange(n), y]
    loss = float(np.mean(w * -np.log(picked)))

    delta = probs.copy()
    delta[np.arange(n), y] -= 1.0
    delta *= (w / n)[:, None]
    gw = [np.empty(0)] * len(p.weights)
    gb = [np.empty(0)] * len(p.biases)
    for i in range(last, -1, -1):
        gw[i] = acts[i].T @ delta
        gb[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ p.weights[i].T) * (acts[i] > 0.0)
    return loss, Grads(gw, gb)


def score_features(p: ModelParams, features: np.ndarray) -> np.ndarray:
    """Bonafide probability (softmax class 0) per feature row."""
    return _softmax(forward(p, features))[:, 0]


def score(p: ModelParams, m: MelSpectrogram) -> float:
    """Bonafide probability in [0, 1] for one spectrogram (higher = bonafide)."""
    return float(score_features(p, pool_stats(m)[None, :])[0])


def save_checkpoint(p: ModelParams, adam_state, path, *, epoch: int = 0, dev_metric: float = float("nan")) -> None:
    """Versioned checkpoint: text header, then little-endian float32 weight
    blocks; Adam moments (if any) follow as float64 blocks."""
    has_adam = adam_state is not None
    header = io.StringIO()
    header.write(f"{CKPT_MAGIC} v{CKPT_VERSION}\n")
    header.write("arch=" + ",".join(str(n) for n in p.arch) + "\n")
    header.write(f"seed={p.seed}\n")
    header.write(f"epoch={epoch}\n")
    header.write(f"dev_metric={dev_metric!r}\n")
    header.write(f"optimizer={'adam' if has_adam else 'none'}\n")
    if has_adam:
        header.write(f"adam_t={adam_state.t}\n")
    header.write("end\n")
    with open(path, "wb") as f:
        f.write(header.getvalue().encode("utf-8"))
        for arr in p.arrays():
            f.write(arr.astype("<f4").tobytes())
        if has_adam:
            for arr in adam_state.m + adam_state.v:
                f.write(arr.astype("<f8").tobytes())


def load_checkpoint(path):
    """Load (params, adam_state_or_None, meta). Rejects unknown versions."""
    from .optim import AdamState  # deferred: optim imports detector

    path = Path(path)
    blob = path.read_bytes()
    nl = blob.index(b"\n")
    first = blob[:nl].decode("utf-8", errors="replace")
    if first != f"{CKPT_MAGIC} v{CKPT_VERSION}":
        raise ValueError(f"{path}: unsupported checkpoint header {first!r} "
                         f"(reader supports {CKPT_MAGIC} v{CKPT_VERSION})")
    meta: dict[str, str] = {}
    pos = nl + 1
    while True:
        nl = blob.index(b"\n", pos)
        line = blob[pos:nl].decode("utf-8")
        pos = nl + 1
        if line == "end":
            break
        key, _, value = line.partition("=")
        meta[key] = value
    arch = tuple(int(n) for n in meta["arch"].split(","))
    seed = int(meta["seed"])

    def take(shape, dtype):
        nonlocal pos
        count = int(np.prod(shape))
        arr = np.frombuffer(blob, dtype=dtype, count=count, offset=pos)
        pos += arr.nbytes
        return arr.astype(np.float64).reshape(shape)

    weights, biases = [], []
    for fan_in, fan_out in zip(arch[:-1], arch[1:]):
        weights.append(take((fan_in, fan_out), "<f4"))
        biases.append(take((fan_out,), "<f4"))
    params = ModelParams(weights, biases, arch, seed)
    state = None
    if meta.get("optimizer") == "adam":
        shapes = [a.shape for a in params.arrays()]
        m = [take(s, "<f8") for s in shapes]
        v = [take(s, "<f8") for s in shapes]
        state = AdamState(m=m, v=v, t=int(meta["adam_t"]))
    if pos != len(blob):
        raise ValueError(f"{path}: trailing bytes in checkpoint (corrupt file)")
    return params, state, meta
