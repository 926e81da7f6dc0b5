"""Toy transcoder: windowed-DCT analysis, residual vector quantization with
k-means codebooks, overlap-add synthesis.

Passing real audio through encode/quantize/decode stamps it with codec
artifacts; those transcoded copies are the spoof class of the workbench.
Analysis/synthesis use 50%-overlapped sine-windowed frames with an
orthonormal DCT-II, a perfect-reconstruction pair on interior samples when
quantization is skipped. Quantization math runs in float32, matching the
on-disk codebook format.
"""

from __future__ import annotations

import hashlib
import struct
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.fft import dct, idct

from .audio import Waveform, resample
from .seeds import rng_for

__all__ = [
    "CodecPreset",
    "CodebookSet",
    "PRESETS",
    "analyze",
    "synthesize",
    "train_codebooks",
    "rvq_encode",
    "rvq_decode",
    "transcode",
    "achieved_bps",
    "save_codebooks",
    "load_codebooks",
]

KMEANS_ITERS = 20
MAX_BITS = 14
CODEBOOK_MAGIC = "SBRVQ"
CODEBOOK_VERSION = 1


@dataclass(frozen=True)
class CodecPreset:
    """Transcoder parameterization; frame = 2 * hop (50% overlap)."""

    name: str
    sample_rate: int
    hop: int
    num_quantizers: int
    codebook_bits: int
    target_bps: float

    def __post_init__(self):
        if self.hop < 1:
            raise ValueError("hop must be >= 1")
        if self.num_quantizers < 1:
            raise ValueError("num_quantizers must be >= 1")
        if not 1 <= self.codebook_bits <= MAX_BITS:
            raise ValueError(f"codebook_bits must be in [1, {MAX_BITS}]")

    @property
    def frame(self) -> int:
        return 2 * self.hop

    @property
    def codebook_size(self) -> int:
        return 2**self.codebook_bits


def achieved_bps(p: CodecPreset) -> float:
    """num_quantizers * codebook_bits * sample_rate / hop."""
    return p.num_quantizers * p.codebook_bits * p.sample_rate / p.hop


def _analog(name: str, sr: int, hop: int, nq: int, target_bps: float) -> CodecPreset:
    ideal = target_bps * hop / (sr * nq)
    bits = min(MAX_BITS, max(1, round(ideal)))
    return CodecPreset(name, sr, hop, nq, bits, target_bps)


# Analog preset table: frame rate ~50 Hz everywhere (hop 320 @ 16k, 480 @ 24k,
# 882 @ 44.1k). Where the target bps implies more than MAX_BITS bits/stage
# the bits are clamped and achieved_bps(p) falls short of target_bps.
PRESETS: dict[str, CodecPreset] = {
    p.name: p
    for p in [
        _analog("F01", 16000, 320, 8, 4000),
        _analog("F02", 16000, 320, 8, 4000),
        _analog("F03", 16000, 320, 32, 16000),
        _analog("F04", 24000, 480, 8, 6000),
        _analog("F05", 24000, 480, 8, 6400),
        _analog("F06", 24000, 480, 4, 3000),
        _analog("F07", 44100, 882, 9, 8000),
        _analog("C3-1", 16000, 320, 12, 3000),
        _analog("C3-2", 16000, 320, 24, 6000),
        _analog("C3-3", 16000, 320, 32, 12000),
        _analog("C3-4", 16000, 320, 32, 24000),
        _analog("C4-1", 24000, 480, 4, 3000),
        _analog("C4-2", 24000, 480, 16, 12000),
        _analog("C4-3", 24000, 480, 32, 24000),
    ]
}


@dataclass
class CodebookSet:
    """Per-stage centroid matrices [codebook_size, frame] for one preset."""

    preset: CodecPreset
    stages: list[np.ndarray]
    trained_on: str = ""
    stage_energies: tuple[float, ...] = field(default=(), compare=False)

    def __post_init__(self):
        if len(self.stages) != self.preset.num_quantizers:
            raise ValueError("stage count must equal preset.num_quantizers")
        for s in self.stages:
            if s.shape != (self.preset.codebook_size, self.preset.frame):
                raise ValueError(
                    f"stage shape {s.shape} != "
                    f"({self.preset.codebook_size}, {self.preset.frame})"
                )
            if not np.all(np.isfinite(s)):
                raise ValueError("non-finite centroid")


def _sine_window(frame: int) -> np.ndarray:
    return np.sin(np.pi * (np.arange(frame) + 0.5) / frame)


def analyze(w: Waveform, p: CodecPreset) -> np.ndarray:
    """Coefficient frames [n_frames, frame]: 50%-overlapped sine-windowed
    segments through an orthonormal DCT-II."""
    if w.sample_rate != p.sample_rate:
        raise ValueError(f"waveform rate {w.sample_rate} != preset rate {p.sample_rate}")
    if len(w) < p.frame:
        raise ValueError(f"signal shorter than one frame ({len(w)} < {p.frame})")
    n_frames = (len(w) - p.frame) // p.hop + 1
    idx = np.arange(p.frame)[None, :] + p.hop * np.arange(n_frames)[:, None]
    segments = w.samples[idx] * _sine_window(p.frame)
    return dct(segments, type=2, norm="ortho", axis=1)


def synthesize(frames: np.ndarray, p: CodecPreset) -> Waveform:
    """Inverse DCT, sine window again, 50% overlap-add.

    Output length = (n_frames - 1) * hop + frame. Interior samples (beyond
    the first/last hop) reconstruct analyze() input exactly up to rounding.
    """
    frames = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    if frames.shape[1] != p.frame:
        raise ValueError(f"frame width {frames.shape[1]} != preset frame {p.frame}")
    n_frames = frames.shape[0]
    segments = idct(frames, type=2, norm="ortho", axis=1) * _sine_window(p.frame)
    out = np.zeros((n_frames - 1) * p.hop + p.frame)
    for i in range(n_frames):
        out[i * p.hop : i * p.hop + p.frame] += segments[i]
    return Waveform(out, p.sample_rate)


def _nearest(residual: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # argmin over ||r - c||^2 via the centroid-norm expansion; ties resolve
    # to the lowest index (np.argmin takes the first minimum)
    scores = np.sum(centroids * centroids, axis=1)[None, :] - 2.0 * (residual @ centroids.T)
    return np.argmin(scores, axis=1)


def _kmeans(data: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding then a fixed number of Lloyd iterations (float32).
    Empty clusters keep their previous centroid."""
    n = data.shape[0]
    centroids = np.empty((k, data.shape[1]), dtype=np.float32)
    centroids[0] = data[rng.integers(n)]
    d2 = np.sum((data - centroids[0]) ** 2, axis=1).astype(np.float64)
    for j in range(1, k):
        total = d2.sum()
        if total > 0:
            pick = int(rng.choice(n, p=d2 / total))
        else:
            pick = int(rng.integers(n))
        centroids[j] = data[pick]
        cand = np.sum((data - centroids[j]) ** 2, axis=1)
        d2 = np.minimum(d2, cand)

    for _ in range(KMEANS_ITERS):
        assign = _nearest(data, centroids)
        order = np.argsort(assign, kind="stable")
        sorted_assign = assign[order]
        boundaries = np.flatnonzero(np.diff(sorted_assign)) + 1
        starts = np.concatenate([[0], boundaries])
        present = sorted_assign[starts]
        sums = np.add.reduceat(data[order], starts, axis=0)
        counts = np.diff(np.concatenate([starts, [n]]))
        centroids[present] = (sums / counts[:, None]).astype(np.float32)
    return centroids


def train_codebooks(frames: np.ndarray, p: CodecPreset, seed: int) -> CodebookSet:
    """Stage-wise k-means codebooks fit on the running residuals.

    Stage s is fit on what stages 1..s-1 left unexplained. Every stage after
    the first reserves index 0 as the exact zero vector (the remaining
    centroids are k-means): a residual the earlier stages already nailed can
    be passed through unchanged, which is what makes prefix-decode error
    non-increasing in the stage count, exactly, for any input. Deterministic
    given (frames, preset, seed).
    """
    frames = np.atleast_2d(np.asarray(frames))
    if frames.shape[1] != p.frame:
        raise ValueError(f"frame width {frames.shape[1]} != preset frame {p.frame}")
    if frames.shape[0] < p.codebook_size:
        raise ValueError(
            f"need >= {p.codebook_size} training frames, got {frames.shape[0]}"
        )
    if np.all(frames == frames[0]):
        warnings.warn(
            "all training frames identical; codebooks will be dominated by a "
            "single centroid",
            RuntimeWarning,
        )
    digest = hashlib.sha256(np.ascontiguousarray(frames, dtype="<f4").tobytes())
    fingerprint = f"{frames.shape[0]}:{digest.hexdigest()[:16]}"
    residual = frames.astype(np.float32)
    stages = []
    energies = []
    for s in range(p.num_quantizers):
        rng = rng_for(seed, f"rvq-stage/{s}")
        if s == 0:
            centroids = _kmeans(residual, p.codebook_size, rng)
        else:
            learned = _kmeans(residual, p.codebook_size - 1, rng)
            centroids = np.vstack(
                [np.zeros((1, p.frame), dtype=np.float32), learned]
            )
        stages.append(centroids)
        assign = _nearest(residual, centroids)
        residual = residual - centroids[assign]
        energies.append(float(np.mean(np.sum(residual.astype(np.float64) ** 2, axis=1))))
    return CodebookSet(p, stages, fingerprint, tuple(energies))


def rvq_encode(frames: np.ndarray, cb: CodebookSet) -> np.ndarray:
    """Stage indices [n_frames, num_quantizers]; deterministic given cb."""
    frames = np.atleast_2d(np.asarray(frames))
    if frames.shape[1] != cb.preset.frame:
        raise ValueError(
            f"frame width {frames.shape[1]} != preset frame {cb.preset.frame}"
        )
    residual = frames.astype(np.float32)
    out = np.empty((frames.shape[0], cb.preset.num_quantizers), dtype=np.int32)
    for s, centroids in enumerate(cb.stages):
        idx = _nearest(residual, centroids)
        out[:, s] = idx
        residual = residual - centroids[idx]
    return out


def rvq_decode(indices: np.ndarray, cb: CodebookSet) -> np.ndarray:
    """Sum of the selected centroids per frame; accepts a stage prefix."""
    indices = np.atleast_2d(np.asarray(indices, dtype=np.int64))
    n_stages = indices.shape[1]
    if n_stages > cb.preset.num_quantizers:
        raise ValueError("more index columns than quantizer stages")
    if indices.size and (indices.min() < 0 or indices.max() >= cb.preset.codebook_size):
        raise ValueError("code index out of range")
    acc = np.zeros((indices.shape[0], cb.preset.frame), dtype=np.float32)
    for s in range(n_stages):
        acc += cb.stages[s][indices[:, s]]
    return acc.astype(np.float64)


def transcode(w: Waveform, cb: CodebookSet) -> Waveform:
    """Re-encode/decode a waveform through the quantizer; same length and
    rate as the input, differing only by codec artifacts."""
    p = cb.preset
    orig_len, orig_sr = len(w), w.sample_rate
    x = resample(w, p.sample_rate)
    # pad so every input sample lies in the perfectly-reconstructed interior
    lead = p.hop
    total = len(x) + lead
    full = p.hop * -(-total // p.hop) + p.hop
    padded = np.zeros(full)
    padded[lead : lead + len(x)] = x.samples
    frames = analyze(Waveform(padded, p.sample_rate), p)
    decoded = rvq_decode(rvq_encode(frames, cb), cb)
    y = synthesize(decoded, p).samples[lead : lead + len(x)]
    back = resample(Waveform(y, p.sample_rate) if y.size else x, orig_sr)
    out = back.samples
    if out.size < orig_len:
        out = np.concatenate([out, np.zeros(orig_len - out.size)])
    return Waveform(out[:orig_len], orig_sr)


def save_codebooks(cb: CodebookSet, path) -> None:
    """Versioned container: text header + per-stage float32 LE centroids."""
    p = cb.preset
    header = (
        f"{CODEBOOK_MAGIC} v{CODEBOOK_VERSION}\n"
        f"name={p.name}\n"
        f"sample_rate={p.sample_rate}\n"
        f"hop={p.hop}\n"
        f"num_quantizers={p.num_quantizers}\n"
        f"codebook_bits={p.codebook_bits}\n"
        f"target_bps={p.target_bps!r}\n"
        f"trained_on={cb.trained_on}\n"
        "end\n"
    )
    with open(path, "wb") as f:
        f.write(header.encode("utf-8"))
        for stage in cb.stages:
            f.write(np.ascontiguousarray(stage, dtype="<f4").tobytes())


def load_codebooks(path) -> CodebookSet:
    with open(path, "rb") as f:
        blob = f.read()
    nl = blob.index(b"\n")
    first = blob[:nl].decode("utf-8", errors="replace")
    if first != f"{CODEBOOK_MAGIC} v{CODEBOOK_VERSION}":
        raise ValueError(
            f"{path}: unsupported codebook header {first!r} "
            f"(reader supports {CODEBOOK_MAGIC} v{CODEBOOK_VERSION})"
        )
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
    preset = CodecPreset(
        name=meta["name"],
        sample_rate=int(meta["sample_rate"]),
        hop=int(meta["hop"]),
        num_quantizers=int(meta["num_quantizers"]),
        codebook_bits=int(meta["codebook_bits"]),
        target_bps=float(meta["target_bps"]),
    )
    stages = []
    per_stage = preset.codebook_size * preset.frame
    for _ in range(preset.num_quantizers):
        arr = np.frombuffer(blob, dtype="<f4", count=per_stage, offset=pos)
        if arr.size != per_stage:
            raise ValueError(f"{path}: truncated codebook data")
        pos += arr.nbytes
        stages.append(arr.reshape(preset.codebook_size, preset.frame).copy())
    if pos != len(blob):
        raise ValueError(f"{path}: trailing bytes in codebook file")
    return CodebookSet(preset, stages, meta.get("trained_on", ""))
