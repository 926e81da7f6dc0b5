"""STFT, log-mel spectrograms, and temporal statistics pooling.

The detector consumes a fixed-size vector per utterance: the per-band
temporal mean and population standard deviation of an 80-band log-mel
spectrogram (160 values at the default band count).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio import Waveform

__all__ = ["MelConfig", "MelSpectrogram", "power_stft", "mel_filterbank", "log_mel", "pool_stats"]

LOG_FLOOR = 1e-10


@dataclass(frozen=True)
class MelConfig:
    """STFT + mel filterbank parameters (defaults: 16 kHz speech front-end,
    25 ms window / 10 ms hop, 80 bands over 0-8 kHz)."""

    sample_rate: int = 16000
    n_fft: int = 512
    win_length: int = 400
    hop: int = 160
    n_mels: int = 80
    f_min: float = 0.0
    f_max: float = 8000.0

    def __post_init__(self):
        if self.win_length > self.n_fft:
            raise ValueError("win_length must be <= n_fft")
        if self.hop <= 0:
            raise ValueError("hop must be positive")
        if not (0 <= self.f_min < self.f_max <= self.sample_rate / 2):
            raise ValueError("need 0 <= f_min < f_max <= sample_rate/2")
        if self.n_mels < 1:
            raise ValueError("n_mels must be >= 1")


@dataclass(frozen=True)
class MelSpectrogram:
    """Natural-log mel power, shape [n_mels, n_frames]."""

    values: np.ndarray
    config: MelConfig

    @property
    def n_frames(self) -> int:
        return self.values.shape[1]


def _hann_periodic(n: int) -> np.ndarray:
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def power_stft(w: Waveform, cfg: MelConfig) -> np.ndarray:
    """Power spectrogram, shape [n_fft//2 + 1, n_frames].

    Hann window of win_length zero-padded (centered) to n_fft; the signal is
    reflect-padded by n_fft//2 on both ends, so n_frames = 1 + len//hop.
    """
    if cfg.n_fft < 2 or cfg.n_fft & (cfg.n_fft - 1):
        raise ValueError(f"n_fft must be a power of two, got {cfg.n_fft}")
    if len(w) < 1:
        raise ValueError("empty waveform")
    win = _hann_periodic(cfg.win_length)
    lpad = (cfg.n_fft - cfg.win_length) // 2
    window = np.zeros(cfg.n_fft)
    window[lpad : lpad + cfg.win_length] = win

    x = np.pad(w.samples, cfg.n_fft // 2, mode="reflect")
    n_frames = 1 + (len(x) - cfg.n_fft) // cfg.hop
    idx = np.arange(cfg.n_fft)[None, :] + cfg.hop * np.arange(n_frames)[:, None]
    frames = x[idx] * window
    spec = np.fft.rfft(frames, n=cfg.n_fft, axis=1)
    return (spec.real**2 + spec.imag**2).T


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(cfg: MelConfig) -> np.ndarray:
    """Triangular mel filterbank, shape [n_mels, n_fft//2 + 1].

    Center frequencies are equally spaced on the mel scale
    (2595*log10(1 + f/700)) between f_min and f_max; triangles peak at 1.
    """
    n_bins = cfg.n_fft // 2 + 1
    bin_hz = np.arange(n_bins) * cfg.sample_rate / cfg.n_fft
    mel_pts = np.linspace(_hz_to_mel(cfg.f_min), _hz_to_mel(cfg.f_max), cfg.n_mels + 2)
    hz_pts = _mel_to_hz(mel_pts)
    fb = np.zeros((cfg.n_mels, n_bins))
    for m in range(cfg.n_mels):
        lo, ctr, hi = hz_pts[m], hz_pts[m + 1], hz_pts[m + 2]
        rising = (bin_hz - lo) / (ctr - lo)
        falling = (hi - bin_hz) / (hi - ctr)
        fb[m] = np.maximum(0.0, np.minimum(rising, falling))
    return fb


def log_mel(w: Waveform, cfg: MelConfig) -> MelSpectrogram:
    """Natural-log mel spectrogram: ln(filterbank @ power + 1e-10)."""
    if w.sample_rate != cfg.sample_rate:
        raise ValueError(
            f"waveform rate {w.sample_rate} != config rate {cfg.sample_rate}"
        )
    power = power_stft(w, cfg)
    return MelSpectrogram(np.log(mel_filterbank(cfg) @ power + LOG_FLOOR), cfg)


def pool_stats(m: MelSpectrogram) -> np.ndarray:
    """Per-band temporal mean followed by per-band population std
    (length 2*n_mels). Requires at least 2 frames."""
    if m.n_frames < 2:
        raise ValueError(f"need >= 2 frames to pool, got {m.n_frames}")
    return np.concatenate([m.values.mean(axis=1), m.values.std(axis=1)])
