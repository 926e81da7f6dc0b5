"""Command-line pipeline: codebooks -> generate -> train -> eval -> report,
plus the self-contained synthetic strategy comparison.

Every artifact (codebooks, manifests, checkpoints, reports) lands under the
configured work dir with a content-hash-stamped filename; a LATEST-* pointer
file next to it names the most recent artifact so later stages can find it.
Exit codes: 0 success, 1 runtime failure, 2 usage/config error.
"""

from __future__ import annotations

import argparse
import hashlib
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, audio, corpus, detector, features, metrics, optim, rvq_codec, sampler, synthbench
from .config import ConfigError, ExperimentConfig, load_config
from .seeds import mix_seed

CONDITION_ALIASES = {f"C{i}": f"F0{i}" for i in range(1, 8)}


class UsageError(ValueError):
    """User/config error (exit code 2)."""


def _stamp(path: Path) -> Path:
    """Rename an artifact to <stem>.<hash12><ext> and update LATEST-<stem>."""
    digest = hashlib.sha256(path.read_bytes()).hexdigest()[:12]
    stem, ext = path.stem, path.suffix
    final = path.with_name(f"{stem}.{digest}{ext}")
    path.replace(final)
    (path.parent / f"LATEST-{stem}").write_text(final.name + "\n")
    return final


def _latest(directory: Path, stem: str, what: str) -> Path:
    pointer = directory / f"LATEST-{stem}"
    if not pointer.is_file():
        raise UsageError(f"no {what} found (expected pointer {pointer}); run the earlier stage first")
    target = directory / pointer.read_text().strip()
    if not target.is_file():
        raise UsageError(f"{what} pointer {pointer} names a missing file {target}")
    return target


def _utt_features(rec: corpus.UttRecord, cfg: ExperimentConfig) -> np.ndarray:
    w = audio.read_wav(rec.path)
    w = audio.resample(w, cfg.mel.sample_rate)
    w = audio.fix_duration(w, cfg.clip_seconds)
    return features.pool_stats(features.log_mel(w, cfg.mel))


def extract_features(records, cfg: ExperimentConfig) -> dict[str, np.ndarray]:
    workers = cfg.effective_workers()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            vecs = list(pool.map(lambda r: _utt_features(r, cfg), records))
    else:
        vecs = [_utt_features(r, cfg) for r in records]
    return {r.utt_id: v for r, v in zip(records, vecs)}


def _scan_and_split(cfg: ExperimentConfig) -> corpus.Manifest:
    m = corpus.scan_real(cfg.corpus_dir, cfg.corpus_domain)
    return corpus.split_manifest(m, cfg.seed)


def cmd_codebooks(cfg: ExperimentConfig, preset_names: list[str] | None) -> int:
    names = preset_names or cfg.presets
    unknown = [n for n in names if n not in cfg.presets]
    if unknown:
        raise UsageError(f"presets not in config: {unknown} (configured: {cfg.presets})")
    manifest = _scan_and_split(cfg)
    train_records = manifest.subset("train")
    out_dir = cfg.work_dir / "codebooks"
    out_dir.mkdir(parents=True, exist_ok=True)
    for name in names:
        preset = rvq_codec.PRESETS[name]
        chunks = []
        for rec in train_records:
            w = audio.resample(audio.read_wav(rec.path), preset.sample_rate)
            if len(w) < preset.frame:
                continue
            chunks.append(rvq_codec.analyze(w, preset))
        if not chunks:
            raise UsageError(f"{name}: no training audio of at least one frame")
        frames = np.vstack(chunks)
        if frames.shape[0] > cfg.codebook_max_frames:
            # evenly strided deterministic subsample
            keep = np.linspace(0, frames.shape[0] - 1, cfg.codebook_max_frames)
            frames = frames[keep.round().astype(int)]
        if frames.shape[0] < preset.codebook_size:
            raise UsageError(
                f"{name}: {frames.shape[0]} training frames < codebook size "
                f"{preset.codebook_size}; corpus too small for this preset"
            )
        cb = rvq_codec.train_codebooks(frames, preset, mix_seed(cfg.seed, f"codebooks/{name}"))
        tmp = out_dir / f"{name}.rvqcb"
        rvq_codec.save_codebooks(cb, tmp)
        final = _stamp(tmp)
        print(f"{name}: wrote {final.name} ({frames.shape[0]} frames, "
              f"target {preset.target_bps:g} bps, achieved {rvq_codec.achieved_bps(preset):g} bps)")
        print("  stage   mean residual energy")
        for s, e in enumerate(cb.stage_energies, start=1):
            print(f"  {s:5d}   {e:.6e}")
    return 0


def _load_codebooks(cfg: ExperimentConfig) -> dict[str, rvq_codec.CodebookSet]:
    cb_dir = cfg.work_dir / "codebooks"
    out = {}
    for name in cfg.presets:
        out[name] = rvq_codec.load_codebooks(_latest(cb_dir, name, f"codebook for {name}"))
    return out


def cmd_generate(cfg: ExperimentConfig) -> int:
    manifest = _scan_and_split(cfg)
    codebooks = _load_codebooks(cfg)
    merged, failures = corpus.generate_fakes(
        manifest,
        cfg.preset_objects(),
        codebooks,
        cfg.holdout,
        cfg.work_dir / "fakes",
        workers=cfg.effective_workers(),
    )
    merged.provenance.update(seed=str(cfg.seed), tool=f"spoofbench {__version__}")
    man_dir = cfg.work_dir / "manifests"
    man_dir.mkdir(parents=True, exist_ok=True)
    tmp = man_dir / "manifest.csv"
    corpus.save_manifest(merged, tmp)
    final = _stamp(tmp)

    counts = corpus.summarize_counts(merged)
    methods = merged.methods()
    print(f"wrote {final.name} ({len(merged)} records)")
    print(f"{'method':>10} {'train':>7} {'dev':>7} {'eval':>7}")
    for meth in methods:
        row = [counts.get((meth, s), 0) for s in ("train", "dev", "eval")]
        print(f"{meth:>10} {row[0]:>7} {row[1]:>7} {row[2]:>7}")
    if failures:
        print(f"{len(failures)} file(s) failed:", file=sys.stderr)
        for f in failures[:10]:
            print(f"  {f}", file=sys.stderr)
        return 1
    return 0


def _manifest_for(cfg: ExperimentConfig, explicit: str | None) -> corpus.Manifest:
    if explicit:
        return corpus.load_manifest(explicit)
    return corpus.load_manifest(_latest(cfg.work_dir / "manifests", "manifest", "manifest"))


def cmd_train(cfg: ExperimentConfig, manifest_path: str | None, rho_given: bool) -> int:
    strategy = cfg.strategy
    if strategy not in optim.STRATEGIES:
        raise UsageError(f"unknown strategy {strategy!r}; choose from {optim.STRATEGIES}")
    if strategy == "erm" and rho_given:
        print("warning: --rho is ignored for strategy erm", file=sys.stderr)
    manifest = _manifest_for(cfg, manifest_path)
    train_records = manifest.subset("train")
    dev_records = manifest.subset("dev")
    if not train_records:
        raise UsageError("manifest has no train subset")
    if not dev_records:
        raise UsageError("manifest has no dev subset")
    domains = sorted({r.domain for r in train_records})
    if strategy == "csam" and len(domains) < 2:
        raise UsageError(
            f"csam needs >= 2 domain tags in the train subset, found {domains}"
        )

    variant = "none" if strategy == "erm" else ("asam" if strategy == "asam" else "sam")
    train_cfg = replace(cfg.train, sam=replace(cfg.train.sam, variant=variant))
    if strategy == "csam":
        sizes: dict[str, int] = {}
        for r in train_records:
            sizes[r.domain] = sizes.get(r.domain, 0) + 1
        plan = sampler.batch_counts(sizes, train_cfg.batch_size)
        plan_str = " ".join(f"{d}={c}" for d, c in sorted(plan.counts.items()))
        print(f"batch plan: {plan_str} (batch {train_cfg.batch_size})")

    feats = extract_features(train_records + dev_records, cfg)
    params, history = optim.train(strategy, train_records, dev_records, train_cfg, feats)

    metric_col = 3 if train_cfg.selection_metric == "dev_loss" else 4
    values = [
        (h.dev_loss if metric_col == 3 else h.dev_eer, h.epoch) for h in history
    ]
    best_metric, best_epoch = min(values, key=lambda t: (t[0], t[1]))

    ckpt_dir = cfg.work_dir / "checkpoints"
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    tmp = ckpt_dir / f"{strategy}.ckpt"
    detector.save_checkpoint(params, None, tmp, epoch=best_epoch, dev_metric=best_metric)
    final = _stamp(tmp)
    hist_path = ckpt_dir / f"history-{strategy}.csv"
    optim.write_history_csv(history, hist_path)
    hist_final = _stamp(hist_path)
    print(f"wrote {final.name} and {hist_final.name}")
    print(f"selected epoch {best_epoch} with {train_cfg.selection_metric}="
          f"{best_metric:.6f}")
    return 0


def _resolve_conditions(requested: list[str] | None, manifest: corpus.Manifest) -> list[tuple[str, str]]:
    """[(condition label, method)] in deterministic order."""
    spoof_methods = [m for m in manifest.methods() if m != "real"]
    if requested:
        out = []
        for tag in requested:
            method = CONDITION_ALIASES.get(tag, tag)
            if method not in spoof_methods:
                raise UsageError(
                    f"condition {tag!r} (method {method!r}) not in manifest; "
                    f"present: {spoof_methods}"
                )
            out.append((tag, method))
        return out
    return [(m, m) for m in spoof_methods]


def cmd_eval(cfg: ExperimentConfig, checkpoint: str, conditions: list[str] | None,
             manifest_path: str | None) -> int:
    params, _, meta = detector.load_checkpoint(checkpoint)
    manifest = _manifest_for(cfg, manifest_path)
    pairs = _resolve_conditions(conditions, manifest)

    results = []
    for label, method in pairs:
        sub = corpus.condition_filter(manifest, method)
        feats = extract_features(sub.records, cfg)
        x = np.stack([feats[r.utt_id] for r in sub.records])
        y = np.array([r.label == "bonafide" for r in sub.records])
        scores = detector.score_features(params, x)
        if not y.any() or y.all():
            raise UsageError(f"condition {label}: needs both bonafide and spoof eval records")
        eer, thr = metrics.compute_eer(metrics.ScoreSet(scores[y], scores[~y]))
        results.append(
            metrics.ConditionResult(
                condition=label,
                method=method,
                eer=eer,
                threshold=thr,
                confusion=metrics.confusion_matrix(scores, y),
                n_bonafide=int(y.sum()),
                n_spoof=int((~y).sum()),
            )
        )

    codec_conditions = [r.condition for r in results if r.method in rvq_codec.PRESETS]
    report = metrics.EvalReport(
        seed=cfg.seed,
        checkpoint=Path(checkpoint).name,
        conditions=results,
        codec_conditions=codec_conditions,
    )
    rep_dir = cfg.work_dir / "reports"
    rep_dir.mkdir(parents=True, exist_ok=True)
    tmp = rep_dir / "report.json"
    tmp.write_text(report.to_json())
    final = _stamp(tmp)
    cavg, avg = report.aggregates()
    print(f"wrote {final.name}")
    for r in results:
        print(f"{r.condition:>8}  EER {r.eer * 100:7.3f}%  thr {r.threshold:.4f}  "
              f"(bona {r.n_bonafide}, spoof {r.n_spoof})")
    print(f"{'CAVG':>8}  EER {cavg * 100:7.3f}%")
    print(f"{'AVG':>8}  EER {avg * 100:7.3f}%")
    return 0


def _report_rows(paths: list[str]):
    """Rows (label, {condition: percent-string}, cavg, avg) from report JSON
    or previously emitted comparison CSV."""
    rows = []
    for p in paths:
        path = Path(p)
        if path.suffix == ".csv":
            import csv as _csv

            with open(path, newline="") as f:
                reader = _csv.reader(f)
                header = next(reader)
                if not header or header[0] != "model" or header[-2:] != ["CAVG", "AVG"]:
                    raise UsageError(f"{path}: not a comparison CSV")
                conds = header[1:-2]
                for row in reader:
                    rows.append((row[0], dict(zip(conds, row[1 : 1 + len(conds)])),
                                 row[-2], row[-1]))
        else:
            report = metrics.EvalReport.from_json(path.read_text())
            cavg, avg = report.aggregates()
            rows.append(
                (
                    report.checkpoint,
                    {c.condition: f"{c.eer * 100:.3f}" for c in report.conditions},
                    f"{cavg * 100:.3f}",
                    f"{avg * 100:.3f}",
                )
            )
    return rows


def cmd_report(inputs: list[str], fmt: str) -> int:
    rows = _report_rows(inputs)
    conditions: list[str] = []
    for _, conds, _, _ in rows:
        for c in conds:
            if c not in conditions:
                conditions.append(c)
    header = ["model"] + conditions + ["CAVG", "AVG"]
    table = [header]
    for label, conds, cavg, avg in rows:
        table.append([label] + [conds.get(c, "-") for c in conditions] + [cavg, avg])
    if fmt == "csv":
        import csv as _csv

        out = _csv.writer(sys.stdout)
        out.writerows(table)
    else:
        widths = [max(len(r[i]) for r in table) for i in range(len(header))]
        for r in table:
            print("  ".join(cell.rjust(w) for cell, w in zip(r, widths)))
    return 0


def cmd_synth(args) -> int:
    spec = synthbench.SynthSpec(
        dim=args.dim,
        n_large=args.n_large,
        n_small=args.n_small,
        shortcut_strength=args.shortcut,
        signal_strength=args.signal,
        noise_sigma=args.noise,
        seed=args.seed,
    )
    result = synthbench.run_comparison(spec, n_seeds=args.seeds, rho=args.rho)
    medians = result.medians()
    print(f"{'strategy':>9} {'median EER%':>12}   per-seed EER%")
    for strategy, eers in result.eers.items():
        per_seed = " ".join(f"{e * 100:6.2f}" for e in eers)
        print(f"{strategy:>9} {medians[strategy] * 100:>12.3f}   {per_seed}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spoofbench",
        description="codec-artifact fake generation, detector training, EER evaluation",
    )
    parser.add_argument("--version", action="version", version=f"spoofbench {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config(p):
        p.add_argument("--config", required=True, help="experiment TOML")

    p = sub.add_parser("codebooks", help="train RVQ codebooks from the real train subset")
    add_config(p)
    p.add_argument("--preset", action="append", help="preset name (repeatable); default: all configured")

    p = sub.add_parser("generate", help="scan, split, and transcode fakes; write the manifest")
    add_config(p)

    p = sub.add_parser("train", help="train the detector")
    add_config(p)
    p.add_argument("--strategy", choices=optim.STRATEGIES)
    p.add_argument("--rho", type=float)
    p.add_argument("--manifest", help="manifest CSV (default: latest generated)")

    p = sub.add_parser("eval", help="score conditions and write a report")
    add_config(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--conditions", help="comma-separated (C1..C7 alias F01..F07)")
    p.add_argument("--manifest")

    p = sub.add_parser("report", help="tabulate one or more reports")
    p.add_argument("--inputs", nargs="+", required=True)
    p.add_argument("--format", choices=("table", "csv"), default="table")

    p = sub.add_parser("synth", help="run the synthetic two-domain strategy comparison")
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--rho", type=float, default=0.05)
    p.add_argument("--dim", type=int, default=20)
    p.add_argument("--n-large", type=int, default=2000)
    p.add_argument("--n-small", type=int, default=200)
    p.add_argument("--shortcut", type=float, default=3.0)
    p.add_argument("--signal", type=float, default=1.0)
    p.add_argument("--noise", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "synth":
            return cmd_synth(args)
        if args.command == "report":
            return cmd_report(args.inputs, args.format)
        overrides = {
            "strategy": getattr(args, "strategy", None),
            "rho": getattr(args, "rho", None),
        }
        cfg = load_config(args.config, overrides)
        if args.command == "codebooks":
            return cmd_codebooks(cfg, args.preset)
        if args.command == "generate":
            return cmd_generate(cfg)
        if args.command == "train":
            return cmd_train(cfg, args.manifest, rho_given=args.rho is not None)
        if args.command == "eval":
            conditions = args.conditions.split(",") if args.conditions else None
            return cmd_eval(cfg, args.checkpoint, conditions, args.manifest)
        raise UsageError(f"unknown command {args.command!r}")
    except (ConfigError, UsageError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # runtime failure
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
