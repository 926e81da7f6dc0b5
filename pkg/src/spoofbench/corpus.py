"""Manifest management: corpus scanning, deterministic splits, fake
generation orchestration, and per-condition filtering.

A manifest is a list of utterance records (utt_id, path, label, domain,
method, subset) persisted as CSV with `#` provenance comments and paths
relative to the manifest's directory. Fakes inherit their source
utterance's subset so the same source never straddles train/eval, except
held-out methods whose records are all forced to eval.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from . import audio, rvq_codec
from .seeds import rng_for

__all__ = [
    "UttRecord",
    "Manifest",
    "scan_real",
    "split_manifest",
    "generate_fakes",
    "condition_filter",
    "save_manifest",
    "load_manifest",
]

LABELS = ("bonafide", "spoof")
SUBSETS = ("train", "dev", "eval")


@dataclass(frozen=True)
class UttRecord:
    utt_id: str
    path: str
    label: str
    domain: str
    method: str
    subset: str = ""  # unset until split_manifest assigns one

    def __post_init__(self):
        if self.label not in LABELS:
            raise ValueError(f"label must be one of {LABELS}, got {self.label!r}")
        if (self.label == "bonafide") != (self.method == "real"):
            raise ValueError(
                f"{self.utt_id}: label {self.label!r} inconsistent with method "
                f"{self.method!r} (bonafide iff method == 'real')"
            )
        if self.subset and self.subset not in SUBSETS:
            raise ValueError(f"subset must be one of {SUBSETS} or empty")


@dataclass
class Manifest:
    records: list[UttRecord] = field(default_factory=list)
    provenance: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        seen = set()
        for r in self.records:
            if r.utt_id in seen:
                raise ValueError(f"duplicate utt_id {r.utt_id!r}")
            seen.add(r.utt_id)

    def __len__(self) -> int:
        return len(self.records)

    def subset(self, name: str) -> list[UttRecord]:
        return [r for r in self.records if r.subset == name]

    def methods(self) -> list[str]:
        seen: dict[str, None] = {}
        for r in self.records:
            seen.setdefault(r.method)
        return list(seen)


def scan_real(directory, domain: str = "codec") -> Manifest:
    """One bonafide record per readable .wav under `directory` (recursive),
    in lexicographic order of relative path. Unreadable files are skipped
    with a warning."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"corpus directory not found: {directory}")
    paths = sorted(directory.rglob("*.wav"), key=lambda p: p.relative_to(directory).as_posix())
    records = []
    skipped = []
    for p in paths:
        rel = p.relative_to(directory)
        if not p.is_file():
            continue
        try:
            with open(p, "rb") as f:
                if len(f.read(12)) < 12:
                    raise audio.WavFormatError(f"{p}: too short to be a WAV")
        except OSError as e:
            skipped.append(f"{rel}: {e}")
            continue
        except audio.WavFormatError as e:
            skipped.append(str(e))
            continue
        utt_id = rel.as_posix()[: -len(rel.suffix)]
        records.append(
            UttRecord(utt_id, str(p), "bonafide", domain, "real")
        )
    if skipped:
        warnings.warn(f"skipped {len(skipped)} unreadable file(s): {skipped[:5]}", RuntimeWarning)
    if not records:
        raise ValueError(f"no readable WAV files under {directory}")
    return Manifest(records)


def split_manifest(m: Manifest, seed: int) -> Manifest:
    """Assign subsets by seeded shuffle: dev and eval each get ceil(n/10)
    records, train the remainder."""
    n = len(m.records)
    if n < 10:
        raise ValueError(f"need >= 10 records to split, got {n}")
    n_dev = -(-n // 10)
    n_eval = n_dev
    order = rng_for(seed, "split").permutation(n)
    assignment = {}
    for pos, rec_idx in enumerate(order):
        if pos < n - n_dev - n_eval:
            assignment[rec_idx] = "train"
        elif pos < n - n_eval:
            assignment[rec_idx] = "dev"
        else:
            assignment[rec_idx] = "eval"
    records = [replace(r, subset=assignment[i]) for i, r in enumerate(m.records)]
    return Manifest(records, dict(m.provenance, split_seed=str(seed)))


def _fake_utt_id(source_id: str, preset_name: str) -> str:
    return f"{source_id}__{preset_name}"


def generate_fakes(
    m: Manifest,
    presets: Sequence[rvq_codec.CodecPreset],
    codebooks: Mapping[str, rvq_codec.CodebookSet],
    holdout: Iterable[str],
    out_dir,
    workers: int = 1,
) -> tuple[Manifest, list[str]]:
    """Transcode every real record through every preset and write spoof WAVs.

    Spoof records inherit the source subset; presets named in `holdout` have
    all their records forced to subset='eval'. Returns the merged manifest
    (reals + fakes) and a list of per-file failure messages (generation
    continues past individual I/O failures). Transcoding may fan out over
    `workers` threads; manifest assembly stays in deterministic order.
    """
    holdout = set(holdout)
    out_dir = Path(out_dir)
    for r in m.records:
        if r.label != "bonafide":
            raise ValueError("generate_fakes expects a bonafide-only manifest")
        if not r.subset:
            raise ValueError("records must have subsets assigned before generation")
    missing = [p.name for p in presets if p.name not in codebooks]
    if missing:
        raise ValueError(f"no codebooks for presets: {missing}")

    def make_one(job):
        preset, rec = job
        fake_id = _fake_utt_id(rec.utt_id, preset.name)
        fake_path = out_dir / preset.name / (rec.utt_id.replace("/", "__") + ".wav")
        try:
            w = audio.read_wav(rec.path)
            audio.write_wav(fake_path, rvq_codec.transcode(w, codebooks[preset.name]))
        except (OSError, ValueError) as e:
            return None, f"{fake_id}: {e}"
        return (
            UttRecord(
                utt_id=fake_id,
                path=str(fake_path),
                label="spoof",
                domain=rec.domain,
                method=preset.name,
                subset="eval" if preset.name in holdout else rec.subset,
            ),
            None,
        )

    jobs = []
    for preset in presets:
        (out_dir / preset.name).mkdir(parents=True, exist_ok=True)
        jobs.extend((preset, rec) for rec in m.records)
    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(make_one, jobs))
    else:
        results = [make_one(j) for j in jobs]

    merged = list(m.records)
    failures: list[str] = []
    for rec, failure in results:
        if failure is not None:
            failures.append(failure)
        else:
            merged.append(rec)
    return Manifest(merged, dict(m.provenance)), failures


def condition_filter(m: Manifest, condition: str) -> Manifest:
    """Eval-subset bonafide records plus the named method's eval-subset spoof
    records. Held-out methods had every record forced to eval, so their
    whole output is included."""
    methods = {r.method for r in m.records if r.label == "spoof"}
    if condition not in methods:
        raise KeyError(f"unknown condition {condition!r}; spoof methods present: {sorted(methods)}")
    records = [
        r
        for r in m.records
        if r.subset == "eval" and (r.label == "bonafide" or r.method == condition)
    ]
    return Manifest(records, dict(m.provenance, condition=condition))


def save_manifest(m: Manifest, path) -> None:
    """CSV with `#` provenance comments; paths stored relative to the
    manifest's directory."""
    path = Path(path)
    base = path.resolve().parent
    with open(path, "w", newline="") as f:
        for key, value in m.provenance.items():
            f.write(f"# {key}={value}\n")
        out = csv.writer(f)
        out.writerow(["utt_id", "path", "label", "domain", "method", "subset"])
        for r in m.records:
            rel = _relpath(r.path, base) if r.path else ""
            out.writerow([r.utt_id, rel, r.label, r.domain, r.method, r.subset])


def _relpath(p: str, base: Path) -> str:
    try:
        return Path(p).resolve().relative_to(base).as_posix()
    except ValueError:
        import os

        return Path(os.path.relpath(Path(p).resolve(), base)).as_posix()


def load_manifest(path) -> Manifest:
    """Load a manifest CSV; paths are resolved against the manifest's
    directory. Label/method consistency and utt_id uniqueness are enforced
    by construction."""
    path = Path(path)
    base = path.resolve().parent
    provenance: dict[str, str] = {}
    records: list[UttRecord] = []
    with open(path, newline="") as f:
        rows = []
        for line in f:
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                provenance[key.strip()] = value
            else:
                rows.append(line)
    reader = csv.reader(rows)
    header = next(reader, None)
    if header != ["utt_id", "path", "label", "domain", "method", "subset"]:
        raise ValueError(f"{path}: unexpected manifest header {header}")
    for row in reader:
        if not row:
            continue
        utt_id, rel, label, domain, method, subset = row
        full = str((base / rel)) if rel else ""
        records.append(UttRecord(utt_id, full, label, domain, method, subset))
    return Manifest(records, provenance)


def summarize_counts(m: Manifest) -> dict[tuple[str, str], int]:
    """(method, subset) -> record count, for human-readable summaries."""
    counts: dict[tuple[str, str], int] = {}
    for r in m.records:
        key = (r.method, r.subset or "-")
        counts[key] = counts.get(key, 0) + 1
    return counts
