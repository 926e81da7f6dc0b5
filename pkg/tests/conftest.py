import numpy as np
import pytest

from spoofbench.audio import Waveform, write_wav
from spoofbench.rvq_codec import CodecPreset, analyze, train_codebooks

SR = 16000


def tone(freq, seconds=1.0, sr=SR, amp=0.5, phase=0.0):
    t = np.arange(round(seconds * sr)) / sr
    return Waveform(amp * np.sin(2 * np.pi * freq * t + phase), sr)


def noise(seed, seconds=1.0, sr=SR, amp=0.3):
    rng = np.random.default_rng(seed)
    return Waveform(np.clip(amp * rng.standard_normal(round(seconds * sr)), -1, 1), sr)


@pytest.fixture(scope="session")
def tiny_preset():
    return CodecPreset("tiny", SR, hop=32, num_quantizers=4, codebook_bits=4, target_bps=0.0)


@pytest.fixture(scope="session")
def tiny_codebooks(tiny_preset):
    """Codebooks over a small tone+noise+silence corpus; shared read-only."""
    waves = [tone(200 + 130 * i, 0.5) for i in range(6)]
    waves += [noise(i, 0.5) for i in range(4)]
    waves.append(Waveform(np.zeros(SR // 2), SR))
    frames = np.vstack([analyze(w, tiny_preset) for w in waves])
    return train_codebooks(frames, tiny_preset, seed=11)


@pytest.fixture
def wav_dir(tmp_path):
    """Directory of 12 short, distinct WAV files."""
    root = tmp_path / "corpus"
    root.mkdir()
    for i in range(10):
        write_wav(root / f"utt{i:02d}.wav", tone(150 + 80 * i, 0.3, amp=0.4))
    write_wav(root / "quiet.wav", noise(1, 0.3, amp=0.05))
    write_wav(root / "hiss.wav", noise(2, 0.3, amp=0.2))
    return root
