import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spoofbench.metrics import (
    ConditionResult,
    ConfusionCounts,
    EvalReport,
    ScoreSet,
    aggregate,
    compute_eer,
    confusion_matrix,
)


def eer_oracle(bonafide, spoof):
    """Exhaustive sweep over all 2n+1 threshold positions (below the lowest
    score, at every distinct score, in every gap, above the highest),
    first minimal |FRR - FAR| wins. Independent of compute_eer."""
    bonafide = np.asarray(bonafide, float)
    spoof = np.asarray(spoof, float)
    distinct = np.unique(np.concatenate([bonafide, spoof]))
    cands = [distinct[0] - 1.0]
    for i, s in enumerate(distinct):
        cands.append(s)
        nxt = distinct[i + 1] if i + 1 < distinct.size else s + 2.0
        cands.append((s + nxt) / 2.0)
    cands = np.array(cands)
    frr = (bonafide[:, None] < cands[None, :]).mean(axis=0)
    far = (spoof[:, None] >= cands[None, :]).mean(axis=0)
    i = int(np.argmin(np.abs(frr - far)))
    return (frr[i] + far[i]) / 2.0


class TestComputeEer:
    def test_perfect_separation(self):
        eer, _ = compute_eer(ScoreSet([0.9, 0.8, 0.7], [0.1, 0.2, 0.3]))
        assert eer == 0.0

    def test_one_third_with_threshold_window(self):
        eer, thr = compute_eer(ScoreSet([0.9, 0.8, 0.3], [0.7, 0.2, 0.1]))
        assert eer == pytest.approx(1 / 3)
        assert 0.3 < thr <= 0.7

    def test_one_inversion_at_two_per_side(self):
        eer, _ = compute_eer(ScoreSet([0.8, 0.4], [0.6, 0.2]))
        assert eer == pytest.approx(0.5)

    def test_empty_side_rejected(self):
        with pytest.raises(ValueError):
            compute_eer(ScoreSet([], [0.1]))

    def test_oracle_agreement_with_ties(self):
        rng = np.random.default_rng(77)
        for _ in range(300):
            nb, ns = rng.integers(1, 60, 2)
            pool = rng.choice(np.round(rng.normal(size=30), 2), nb + ns)
            bona, spoof = pool[:nb], pool[nb:] + rng.normal(0, 0.5)
            got, _ = compute_eer(ScoreSet(bona, spoof))
            assert got == pytest.approx(eer_oracle(bona, spoof), abs=1e-9)

    def test_eer_zero_iff_separated(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            bona = rng.normal(1, 1, rng.integers(1, 20))
            spoof = rng.normal(-1, 1, rng.integers(1, 20))
            eer, _ = compute_eer(ScoreSet(bona, spoof))
            assert (eer == 0.0) == (bona.min() > spoof.max())

    @given(
        st.lists(st.integers(-50, 50), min_size=1, max_size=40),
        st.lists(st.integers(-50, 50), min_size=1, max_size=40),
    )
    @settings(max_examples=200, deadline=None)
    def test_monotone_transform_invariance(self, bona, spoof):
        bona = np.array(bona, float)
        spoof = np.array(spoof, float)
        base, _ = compute_eer(ScoreSet(bona, spoof))
        warped, _ = compute_eer(ScoreSet(np.exp(bona / 25), np.exp(spoof / 25)))
        assert warped == pytest.approx(base, abs=1e-12)
        assert 0.0 <= base <= 1.0


class TestConfusion:
    def test_clean_case(self):
        c = confusion_matrix([0.9, 0.1], [True, False])
        assert (c.tp, c.tn, c.fp, c.fn) == (1, 1, 0, 0)

    def test_boundary_is_bonafide(self):
        c = confusion_matrix([0.5], [False])
        assert c.fp == 1  # score >= threshold predicts bonafide

    def test_partition(self):
        rng = np.random.default_rng(0)
        s = rng.uniform(size=37)
        y = rng.uniform(size=37) > 0.5
        c = confusion_matrix(s, y, threshold=0.4)
        assert c.total == 37


class TestAggregate:
    def test_singleton(self):
        cavg, avg = aggregate({"F01": 0.05}, ["F01"])
        assert cavg == avg == 0.05

    def test_single_nonzero_over_seven(self):
        eers = {f"F0{i}": 0.0 for i in range(1, 7)}
        eers["F07"] = 0.00884
        cavg, avg = aggregate(eers, list(eers))
        assert cavg == pytest.approx(0.00884 / 7)
        assert round(cavg * 100, 3) == 0.126

    def test_published_row_arithmetic(self):
        # codec-trained W2V2-AASIST row: CAVG 0.177, AVG 1.628 (percent)
        row = {
            "19LA": 3.806, "ITW": 9.606,
            "C1": 0.167, "C2": 0.008, "C3": 0.023, "C4": 0.015,
            "C5": 0.038, "C6": 0.106, "C7": 0.884,
        }
        eers = {k: v / 100 for k, v in row.items()}
        cavg, avg = aggregate(eers, [f"C{i}" for i in range(1, 8)])
        assert round(cavg * 100, 3) == 0.177
        assert round(avg * 100, 3) == 1.628

    def test_missing_codec_condition(self):
        with pytest.raises(KeyError):
            aggregate({"F01": 0.1}, ["F01", "F02"])


class TestEvalReport:
    def _report(self):
        return EvalReport(
            seed=7,
            checkpoint="erm.abc.ckpt",
            conditions=[
                ConditionResult("F01", "F01", 0.0123456, 0.41,
                                ConfusionCounts(9, 1, 2, 8), 10, 10),
                ConditionResult("X", "voc", 0.2, 0.5,
                                ConfusionCounts(4, 1, 1, 4), 5, 5),
            ],
            codec_conditions=["F01"],
        )

    def test_round_trip(self):
        r = self._report()
        back = EvalReport.from_json(r.to_json())
        assert back.eers == r.eers
        assert back.codec_conditions == ["F01"]
        assert back.conditions[0].confusion == ConfusionCounts(9, 1, 2, 8)

    def test_three_decimal_serialization(self):
        doc = json.loads(self._report().to_json())
        assert doc["conditions"][0]["eer_percent"] == "1.235"
        assert doc["conditions"][0]["eer"] == pytest.approx(0.0123456)

    def test_version_gate(self):
        doc = json.loads(self._report().to_json())
        doc["report_version"] = 0
        with pytest.raises(ValueError, match="report_version"):
            EvalReport.from_json(json.dumps(doc))
