import numpy as np
import pytest

from spoofbench.audio import Waveform
from spoofbench.rvq_codec import (
    PRESETS,
    CodecPreset,
    CodebookSet,
    achieved_bps,
    analyze,
    load_codebooks,
    rvq_decode,
    rvq_encode,
    save_codebooks,
    synthesize,
    train_codebooks,
    transcode,
)

from conftest import SR, noise, tone


class TestPresets:
    def test_table_bitrates(self):
        assert achieved_bps(PRESETS["F01"]) == 4000  # 16k SR, 8 quantizers
        assert achieved_bps(PRESETS["F03"]) == 16000  # 16k SR, 32 quantizers
        assert PRESETS["F04"].sample_rate == 24000
        assert PRESETS["F07"].sample_rate == 44100

    def test_formula(self):
        p = CodecPreset("x", 16000, 320, 1, 1, 50)
        assert achieved_bps(p) == 50

    def test_frame_is_twice_hop(self):
        for p in PRESETS.values():
            assert p.frame == 2 * p.hop

    def test_bits_cap(self):
        for p in PRESETS.values():
            assert 1 <= p.codebook_bits <= 14
        with pytest.raises(ValueError):
            CodecPreset("bad", 16000, 320, 8, 15, 0)


class TestAnalysisSynthesis:
    def test_zero_signal(self, tiny_preset):
        fr = analyze(Waveform(np.zeros(SR), SR), tiny_preset)
        assert not fr.any()
        out = synthesize(np.zeros((5, tiny_preset.frame)), tiny_preset)
        assert not out.samples.any()

    def test_frame_count(self):
        p = PRESETS["F01"]
        fr = analyze(tone(440, 4.0), p)
        assert fr.shape == ((64000 - 640) // 320 + 1, 640)
        assert fr.shape[0] == 199

    def test_perfect_reconstruction_interior(self, tiny_preset):
        rng = np.random.default_rng(0)
        for trial in range(5):
            x = Waveform(rng.uniform(-1, 1, 4000), SR)
            y = synthesize(analyze(x, tiny_preset), tiny_preset)
            hop = tiny_preset.hop
            n = min(len(y), len(x))
            err = np.abs(y.samples[hop : n - hop] - x.samples[hop : n - hop]).max()
            assert err <= 1e-6

    def test_output_length(self, tiny_preset):
        frames = np.zeros((7, tiny_preset.frame))
        out = synthesize(frames, tiny_preset)
        assert len(out) == 6 * tiny_preset.hop + tiny_preset.frame

    def test_too_short_signal(self, tiny_preset):
        with pytest.raises(ValueError, match="short"):
            analyze(Waveform(np.zeros(tiny_preset.frame - 1), SR), tiny_preset)

    def test_rate_mismatch(self, tiny_preset):
        with pytest.raises(ValueError, match="rate"):
            analyze(tone(100, 0.5, sr=8000), tiny_preset)


class TestTrainCodebooks:
    def test_two_cluster_exact(self):
        p = CodecPreset("two", SR, 4, 2, 1, 0)
        v = np.array([1.0, -0.5, 0.25, 2.0, -1.0, 0.5, 0.0, 1.5])
        frames = np.vstack([v] * 10 + [-v] * 10)
        cb = train_codebooks(frames, p, seed=0)
        got = {tuple(np.round(c, 6)) for c in cb.stages[0]}
        assert got == {tuple(np.round(v, 6)), tuple(np.round(-v, 6))}
        # stage-1 residuals are exactly zero -> energy 0 recorded
        assert cb.stage_energies[0] == 0.0

    def test_later_stages_carry_zero_centroid(self, tiny_codebooks):
        for stage in tiny_codebooks.stages[1:]:
            assert not stage[0].any()

    def test_determinism(self, tiny_preset):
        frames = analyze(noise(5, 1.0), tiny_preset)
        a = train_codebooks(frames, tiny_preset, seed=21)
        b = train_codebooks(frames, tiny_preset, seed=21)
        for x, y in zip(a.stages, b.stages):
            np.testing.assert_array_equal(x, y)
        assert a.trained_on == b.trained_on

    def test_residual_energy_monotone(self, tiny_codebooks):
        e = tiny_codebooks.stage_energies
        assert all(e[i + 1] <= e[i] + 1e-12 for i in range(len(e) - 1))

    def test_insufficient_frames(self, tiny_preset):
        with pytest.raises(ValueError, match="training frames"):
            train_codebooks(np.zeros((3, tiny_preset.frame)), tiny_preset, seed=0)

    def test_degenerate_corpus_warns(self, tiny_preset):
        frames = np.ones((40, tiny_preset.frame))
        with pytest.warns(RuntimeWarning, match="identical"):
            train_codebooks(frames, tiny_preset, seed=0)


class TestEncodeDecode:
    def test_exact_match_routes_to_zero(self):
        # frame equal to a stage-1 centroid; later codebooks contain a zero
        # vector, so the residual keeps selecting it
        p = CodecPreset("ez", SR, 2, 3, 2, 0)
        rng = np.random.default_rng(1)
        stage1 = rng.normal(size=(4, 4)).astype(np.float32)
        zero_first = np.zeros((4, 4), dtype=np.float32)
        zero_first[1:] = rng.normal(size=(3, 4)) + 5.0
        cb = CodebookSet(p, [stage1, zero_first.copy(), zero_first.copy()])
        idx = rvq_encode(stage1[2][None, :], cb)
        assert idx[0, 0] == 2
        assert idx[0, 1] == 0 and idx[0, 2] == 0
        np.testing.assert_allclose(rvq_decode(idx, cb)[0], stage1[2])

    def test_encode_deterministic(self, tiny_codebooks, tiny_preset):
        frames = analyze(noise(9, 0.5), tiny_preset)
        np.testing.assert_array_equal(
            rvq_encode(frames, tiny_codebooks), rvq_encode(frames, tiny_codebooks)
        )

    def test_prefix_refinement(self, tiny_codebooks, tiny_preset):
        frames = analyze(noise(12, 0.5), tiny_preset)
        idx = rvq_encode(frames, tiny_codebooks)
        mses = [
            np.mean((frames - rvq_decode(idx[:, :s], tiny_codebooks)) ** 2)
            for s in range(1, tiny_preset.num_quantizers + 1)
        ]
        assert all(mses[i + 1] <= mses[i] for i in range(len(mses) - 1))
        assert mses[-1] <= mses[0]

    def test_single_stage_decodes_centroid_verbatim(self, tiny_codebooks):
        one = rvq_decode(np.array([[5]]), tiny_codebooks)
        np.testing.assert_allclose(one[0], tiny_codebooks.stages[0][5])

    def test_out_of_range_index(self, tiny_codebooks):
        with pytest.raises(ValueError, match="range"):
            rvq_decode(np.array([[999]]), tiny_codebooks)

    def test_width_mismatch(self, tiny_codebooks):
        with pytest.raises(ValueError, match="width"):
            rvq_encode(np.zeros((2, 5)), tiny_codebooks)


class TestTranscode:
    def test_length_preserved(self, tiny_codebooks):
        rng = np.random.default_rng(8)
        for n, sr in ((12345, 22050), (8000, SR), (501, 8000)):
            w = Waveform(0.2 * rng.standard_normal(n), sr)
            out = transcode(w, tiny_codebooks)
            assert len(out) == n
            assert out.sample_rate == sr

    def test_silence_passes_through_dark(self):
        # corpus with explicit digital silence: the zero frames form their own
        # stage-1 cluster, so silence transcodes to (near) digital silence
        p = CodecPreset("sil", SR, 320, 4, 6, 0)
        waves = [tone(150 + 130 * i, 1.0) for i in range(10)]
        waves += [Waveform(np.zeros(SR), SR), Waveform(np.zeros(SR), SR)]
        frames = np.vstack([analyze(w, p) for w in waves])
        cb = train_codebooks(frames, p, seed=5)
        out = transcode(Waveform(np.zeros(4 * SR), SR), cb)
        assert np.sum(out.samples**2) <= 1e-8

    def test_more_stages_reduce_error(self, tiny_codebooks, tiny_preset):
        w = noise(33, 0.5)
        full = transcode(w, tiny_codebooks)
        one_stage = CodebookSet(
            CodecPreset("one", SR, tiny_preset.hop, 1,
                        tiny_preset.codebook_bits, 0),
            [tiny_codebooks.stages[0]],
        )
        partial = transcode(w, one_stage)
        mse_full = np.mean((full.samples - w.samples) ** 2)
        mse_one = np.mean((partial.samples - w.samples) ** 2)
        assert mse_full < mse_one


class TestCodebookFiles:
    def test_round_trip(self, tiny_codebooks, tmp_path):
        path = tmp_path / "cb.rvqcb"
        save_codebooks(tiny_codebooks, path)
        back = load_codebooks(path)
        assert back.preset == tiny_codebooks.preset
        assert back.trained_on == tiny_codebooks.trained_on
        for a, b in zip(back.stages, tiny_codebooks.stages):
            np.testing.assert_array_equal(a, b)

    def test_version_gate(self, tmp_path):
        p = tmp_path / "old.rvqcb"
        p.write_bytes(b"SBRVQ v99\nend\n")
        with pytest.raises(ValueError, match="v99"):
            load_codebooks(p)

    def test_truncation_detected(self, tiny_codebooks, tmp_path):
        path = tmp_path / "cb.rvqcb"
        save_codebooks(tiny_codebooks, path)
        blob = path.read_bytes()
        path.write_bytes(blob[: len(blob) - 7])
        with pytest.raises(ValueError, match="truncated"):
            load_codebooks(path)
