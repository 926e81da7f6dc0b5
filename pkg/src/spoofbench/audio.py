"""WAV I/O, sample-rate conversion, fixed-duration normalization.

All functions are pure and operate on mono float64 waveforms with a nominal
[-1, 1] range. Accepted on read: 16-bit PCM and 32-bit IEEE float RIFF/WAVE,
mono or multi-channel (averaged to mono). Written: 16-bit PCM mono.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import firwin, resample_poly

__all__ = ["Waveform", "WavFormatError", "read_wav", "write_wav", "resample", "fix_duration"]

KAISER_BETA = 8.6
TAPS_PER_PHASE = 64


class WavFormatError(ValueError):
    """Unreadable or unsupported WAV file (message carries the path)."""


@dataclass(frozen=True)
class Waveform:
    """Mono sample sequence plus its sample rate in Hz."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim != 1:
            raise ValueError(f"waveform must be 1-D, got shape {s.shape}")
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if s.size and not np.all(np.isfinite(s)):
            raise ValueError("waveform contains NaN/Inf samples")
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


def _read_exact(f, n: int, path, what: str) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise WavFormatError(f"{path}: truncated WAV ({what})")
    return data


def read_wav(path) -> Waveform:
    """Read a PCM-16 or float-32 WAV as a mono waveform scaled to [-1, 1].

    Multi-channel input is averaged to mono; 16-bit samples are scaled by
    1/32768. Raises FileNotFoundError or WavFormatError with the path.
    """
    path = Path(path)
    with open(path, "rb") as f:
        riff = f.read(12)
        if len(riff) < 12 or riff[:4] != b"RIFF" or riff[8:12] != b"WAVE":
            raise WavFormatError(f"{path}: not a RIFF/WAVE file")
        fmt = None
        data = None
        while True:
            header = f.read(8)
            if len(header) == 0:
                break
            if len(header) < 8:
                raise WavFormatError(f"{path}: truncated chunk header")
            chunk_id, size = struct.unpack("<4sI", header)
            if chunk_id == b"fmt ":
                body = _read_exact(f, size, path, "fmt chunk")
                if size < 16:
                    raise WavFormatError(f"{path}: fmt chunk too small")
                fmt = struct.unpack("<HHIIHH", body[:16])
            elif chunk_id == b"data":
                data = _read_exact(f, size, path, "data chunk")
            else:
                f.seek(size, 1)
            if size % 2:  # chunks are word-aligned
                f.seek(1, 1)
        if fmt is None:
            raise WavFormatError(f"{path}: missing fmt chunk")
        if data is None:
            raise WavFormatError(f"{path}: missing data chunk")

    audio_format, channels, sample_rate, _, block_align, bits = fmt
    if channels < 1 or sample_rate <= 0:
        raise WavFormatError(f"{path}: invalid fmt fields")
    if audio_format == 1 and bits == 16:
        raw = np.frombuffer(data[: len(data) - len(data) % (2 * channels)], dtype="<i2")
        if raw.size == 0:
            raise WavFormatError(f"{path}: empty data chunk")
        x = raw.astype(np.float64) / 32768.0
    elif audio_format == 3 and bits == 32:
        raw = np.frombuffer(data[: len(data) - len(data) % (4 * channels)], dtype="<f4")
        if raw.size == 0:
            raise WavFormatError(f"{path}: empty data chunk")
        x = raw.astype(np.float64)
    else:
        raise WavFormatError(
            f"{path}: unsupported encoding (format={audio_format}, bits={bits}); "
            "only 16-bit PCM and 32-bit float are accepted"
        )
    if raw.size % channels:
        raise WavFormatError(f"{path}: data chunk not a whole number of frames")
    if channels > 1:
        x = x.reshape(-1, channels).mean(axis=1)
    if not np.all(np.isfinite(x)):
        raise WavFormatError(f"{path}: non-finite samples")
    return Waveform(x, sample_rate)


def write_wav(path, w: Waveform) -> None:
    """Write a mono 16-bit PCM WAV.

    Samples are clamped to [-1, 1] and quantized at the same 1/32768 step
    the reader uses (positive full scale saturates at 32767), which keeps
    the write->read round-trip error within one quantization step.
    """
    pcm = np.clip(np.rint(np.clip(w.samples, -1.0, 1.0) * 32768.0), -32768, 32767).astype("<i2")
    data = pcm.tobytes()
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF", 36 + len(data), b"WAVE",
        b"fmt ", 16, 1, 1, w.sample_rate, w.sample_rate * 2, 2, 16,
        b"data", len(data),
    )
    with open(path, "wb") as f:
        f.write(header)
        f.write(data)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def resample(w: Waveform, target_sr: int) -> Waveform:
    """Windowed-sinc rate conversion (Kaiser beta=8.6, 64 taps per phase,
    cutoff at min(sr, target)/2). Output length = round(n * target / sr)."""
    if target_sr <= 0:
        raise ValueError(f"target_sr must be positive, got {target_sr}")
    if target_sr == w.sample_rate:
        return Waveform(w.samples.copy(), target_sr)
    g = math.gcd(w.sample_rate, target_sr)
    up, down = target_sr // g, w.sample_rate // g
    max_rate = max(up, down)
    half = (TAPS_PER_PHASE // 2) * max_rate
    h = firwin(2 * half + 1, 1.0 / max_rate, window=("kaiser", KAISER_BETA))
    y = resample_poly(w.samples, up, down, window=h)
    out_len = _round_half_up(len(w) * target_sr / w.sample_rate)
    if len(y) < out_len:
        y = np.concatenate([y, np.zeros(out_len - len(y))])
    return Waveform(y[:out_len], target_sr)


def fix_duration(w: Waveform, seconds: float) -> Waveform:
    """Force an exact duration: truncate keeping the head, or tile the whole
    waveform until round(seconds * sr) samples are reached."""
    if seconds <= 0:
        raise ValueError(f"seconds must be positive, got {seconds}")
    if len(w) == 0:
        raise ValueError("cannot fix duration of an empty waveform")
    target = _round_half_up(seconds * w.sample_rate)
    if len(w) >= target:
        return Waveform(w.samples[:target].copy(), w.sample_rate)
    reps = -(-target // len(w))
    return Waveform(np.tile(w.samples, reps)[:target], w.sample_rate)
