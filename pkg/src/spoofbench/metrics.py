"""EER scoring, fixed-threshold confusion counts, condition aggregation.

Score convention everywhere: higher = more bonafide; bonafide is the
positive class. EER follows piecewise-constant ROC semantics: candidate
thresholds are the observed scores themselves (no midpoint interpolation).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

__all__ = [
    "ScoreSet",
    "ConfusionCounts",
    "ConditionResult",
    "EvalReport",
    "compute_eer",
    "confusion_matrix",
    "aggregate",
]

REPORT_VERSION = 1


@dataclass(frozen=True)
class ScoreSet:
    """Detector scores split by ground truth."""

    bonafide: np.ndarray
    spoof: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.bonafide, dtype=np.float64)
        s = np.asarray(self.spoof, dtype=np.float64)
        if not (np.all(np.isfinite(b)) and np.all(np.isfinite(s))):
            raise ValueError("scores must be finite")
        object.__setattr__(self, "bonafide", b)
        object.__setattr__(self, "spoof", s)


def compute_eer(scores: ScoreSet) -> tuple[float, float]:
    """Equal error rate and its threshold.

    Sweeps the sorted union of all observed scores; at threshold t,
    FRR = fraction of bonafide < t and FAR = fraction of spoof >= t
    (predict bonafide iff score >= t). Returns the (FRR+FAR)/2 at the
    candidate minimizing |FRR - FAR| (first such candidate on ties).
    """
    if scores.bonafide.size == 0 or scores.spoof.size == 0:
        raise ValueError("both bonafide and spoof scores are required for EER")
    bona = np.sort(scores.bonafide)
    spoof = np.sort(scores.spoof)
    cand = np.unique(np.concatenate([bona, spoof]))
    frr = np.searchsorted(bona, cand, side="left") / bona.size
    far = (spoof.size - np.searchsorted(spoof, cand, side="left")) / spoof.size
    i = int(np.argmin(np.abs(frr - far)))
    return float((frr[i] + far[i]) / 2.0), float(cand[i])


@dataclass(frozen=True)
class ConfusionCounts:
    """Counts with bonafide as the positive class."""

    tp: int
    fn: int
    fp: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fn + self.fp + self.tn


def confusion_matrix(scores, is_bonafide, threshold: float = 0.5) -> ConfusionCounts:
    """Counts at a fixed threshold; predicted bonafide iff score >= threshold."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(is_bonafide, dtype=bool)
    if s.size == 0:
        raise ValueError("empty score set")
    pred = s >= threshold
    return ConfusionCounts(
        tp=int(np.sum(pred & y)),
        fn=int(np.sum(~pred & y)),
        fp=int(np.sum(pred & ~y)),
        tn=int(np.sum(~pred & ~y)),
    )


def aggregate(eers: Mapping[str, float], codec_conditions: Iterable[str]) -> tuple[float, float]:
    """(cavg, avg): mean EER over the codec conditions, and over all
    conditions in the report. Every codec condition must be present."""
    codec = list(codec_conditions)
    missing = [c for c in codec if c not in eers]
    if missing:
        raise KeyError(f"codec conditions missing from report: {missing}")
    if not eers:
        raise ValueError("no conditions to aggregate")
    cavg = float(np.mean([eers[c] for c in codec])) if codec else float("nan")
    avg = float(np.mean(list(eers.values())))
    return cavg, avg


def _pct3(eer: float) -> str:
    return f"{eer * 100.0:.3f}"


@dataclass(frozen=True)
class ConditionResult:
    condition: str
    method: str
    eer: float
    threshold: float
    confusion: ConfusionCounts
    n_bonafide: int
    n_spoof: int


@dataclass
class EvalReport:
    """Per-condition EERs plus CAVG/AVG aggregates, serializable to JSON.

    EER percentages are rounded to exactly 3 decimals at serialization only;
    the numeric fields keep full precision.
    """

    seed: int
    checkpoint: str
    conditions: list[ConditionResult] = field(default_factory=list)
    codec_conditions: list[str] = field(default_factory=list)

    @property
    def eers(self) -> dict[str, float]:
        return {c.condition: c.eer for c in self.conditions}

    def aggregates(self) -> tuple[float, float]:
        return aggregate(self.eers, self.codec_conditions)

    def to_json(self) -> str:
        cavg, avg = self.aggregates()
        doc = {
            "report_version": REPORT_VERSION,
            "seed": self.seed,
            "checkpoint": self.checkpoint,
            "score_convention": "higher = bonafide; bonafide is the positive class",
            "conditions": [
                {
                    "condition": c.condition,
                    "method": c.method,
                    "eer_percent": _pct3(c.eer),
                    "eer": c.eer,
                    "threshold": c.threshold,
                    "n_bonafide": c.n_bonafide,
                    "n_spoof": c.n_spoof,
                    "confusion": {
                        "tp": c.confusion.tp,
                        "fn": c.confusion.fn,
                        "fp": c.confusion.fp,
                        "tn": c.confusion.tn,
                    },
                }
                for c in self.conditions
            ],
            "codec_conditions": list(self.codec_conditions),
            "aggregates": {
                "cavg_percent": _pct3(cavg),
                "cavg": cavg,
                "avg_percent": _pct3(avg),
                "avg": avg,
            },
        }
        return json.dumps(doc, indent=2, sort_keys=False) + "\n"

    @staticmethod
    def from_json(text: str) -> "EvalReport":
        doc = json.loads(text)
        version = doc.get("report_version")
        if version != REPORT_VERSION:
            raise ValueError(
                f"unsupported report_version {version!r} (reader supports {REPORT_VERSION})"
            )
        conditions = [
            ConditionResult(
                condition=e["condition"],
                method=e["method"],
                eer=float(e["eer"]),
                threshold=float(e["threshold"]),
                confusion=ConfusionCounts(**e["confusion"]),
                n_bonafide=int(e["n_bonafide"]),
                n_spoof=int(e["n_spoof"]),
            )
            for e in doc["conditions"]
        ]
        return EvalReport(
            seed=int(doc["seed"]),
            checkpoint=str(doc["checkpoint"]),
            conditions=conditions,
            codec_conditions=list(doc["codec_conditions"]),
        )
