"""Command-line interface.

Subcommands: features (extract + cache), train (multi-run experiment),
eval (score a checkpoint on a manifest), gradcheck (finite-difference
suite), synth (generate the synthetic dataset).

Settings come from three layers, later layers winning: dataclass defaults,
a flat key=value config file (--config), then command-line flags. Config
keys are section-prefixed dataclass field names (mfcc.hop, model.fusion_mode,
train.epochs) plus the run-level keys dataset, split, runs, seed.
"""

import argparse
import json
import sys
from collections import Counter
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import cache
from .audio import FeatureStats, MfccConfig, normalize_features, segment_frames
from .autodiff import Tensor
from .errors import ConfigError, FormatError, GlamError, GlamIOError
from .experiment import run_experiment, segments_for
from .gradcheck import default_suite, full_model_case, run_suite
from .manifest import CLASSES, DATASETS, filter_records, parse_manifest
from .metrics import METRIC_KEYS, confusion_table
from .model import (FUSION_MODES, ModelConfig, export_embeddings,
                    load_checkpoint, save_checkpoint)
from .report import save_confusion_figure, save_history_figure
from .synth import generate_synth_dataset
from .tensorio import atomic_write_text, write_tensor
from .train import TrainConfig, evaluate_utterances

SPLIT_MODES = ("holdout", "ratio811")

_RUN_KEY_TYPES = {"dataset": str, "split": str, "runs": int, "seed": int}


@dataclass
class RunSettings:
    mfcc: MfccConfig
    model: ModelConfig
    train: TrainConfig
    dataset: str
    split: str
    runs: int
    seed: int


def _scalar_fields(cls, exclude=()):
    """Config-file-settable fields of a dataclass: scalar defaults only."""
    out = {}
    for f in fields(cls):
        if f.name in exclude:
            continue
        if type(f.default) in (bool, int, float, str):
            out[f.name] = type(f.default)
    return out


def _coerce(key, raw, kind):
    if kind is bool:
        low = raw.lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise ConfigError(f"config key {key!r} expects a boolean, got {raw!r}")
    if kind in (int, float):
        try:
            return kind(raw)
        except ValueError:
            raise ConfigError(
                f"config key {key!r} expects {kind.__name__}, got {raw!r}"
            ) from None
    return raw


def read_config_file(path):
    """Flat key=value lines; # comments and blank lines are skipped."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise GlamIOError(f"cannot read config file {path}: {exc}") from exc
    overrides = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{line_no}: expected key=value, got {stripped!r}")
        key, _, value = stripped.partition("=")
        key = key.strip()
        if key in overrides:
            raise ConfigError(f"{path}:{line_no}: duplicate key {key!r}")
        overrides[key] = value.strip()
    return overrides


def resolve_settings(args):
    """Merge defaults, config file, and flags into one settings bundle."""
    overrides = read_config_file(args.config) if args.config else {}
    sections = {
        "mfcc": _scalar_fields(MfccConfig),
        # in_frames / in_coeffs always follow the frontend configuration
        "model": _scalar_fields(ModelConfig, exclude=("in_frames", "in_coeffs")),
        "train": _scalar_fields(TrainConfig, exclude=("seed",)),
    }
    kwargs = {"mfcc": {}, "model": {}, "train": {}}
    run_kw = {}
    for key, raw in overrides.items():
        section, _, name = key.partition(".")
        if section in sections and name in sections[section]:
            kwargs[section][name] = _coerce(key, raw, sections[section][name])
        elif key in _RUN_KEY_TYPES:
            run_kw[key] = _coerce(key, raw, _RUN_KEY_TYPES[key])
        else:
            raise ConfigError(f"unknown config key {key!r}")

    # flags override the file
    if getattr(args, "fusion", None) is not None:
        kwargs["model"]["fusion_mode"] = args.fusion
    if getattr(args, "alpha", None) is not None:
        kwargs["train"]["alpha"] = args.alpha
    for key in _RUN_KEY_TYPES:
        value = getattr(args, key, None)
        if value is not None:
            run_kw[key] = value

    dataset = run_kw.get("dataset", "full")
    split = run_kw.get("split", "holdout")
    runs = run_kw.get("runs", 1)
    seed = run_kw.get("seed", 0)
    if dataset not in DATASETS:
        raise ConfigError(f"unknown dataset {dataset!r}")
    if split not in SPLIT_MODES:
        raise ConfigError(f"unknown split mode {split!r}")
    mfcc = MfccConfig(**kwargs["mfcc"])
    model = ModelConfig(in_frames=segment_frames(mfcc), in_coeffs=mfcc.n_mfcc,
                        **kwargs["model"])
    train = TrainConfig(seed=seed, **kwargs["train"])
    return RunSettings(mfcc, model, train, dataset, split, runs, seed)


def _require(args, name):
    value = getattr(args, name, None)
    if value is None:
        raise ConfigError(f"--{name} is required for this command")
    return value


def _json_text(obj):
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _load_cached(records, manifest_path, mfcc_cfg):
    try:
        return cache.load_features(records, cache.cache_dir_for(manifest_path), mfcc_cfg)
    except GlamIOError as exc:
        raise ConfigError(f"{exc}; run the features command on this manifest first") from exc


# ---------------------------------------------------------------------------
# commands


def cmd_features(args):
    settings = resolve_settings(args)
    manifest_path = Path(_require(args, "manifest"))
    records = filter_records(parse_manifest(manifest_path), settings.dataset)
    cache_dir = cache.cache_dir_for(manifest_path)
    summary = cache.extract_features(records, cache_dir, settings.mfcc,
                                     force=getattr(args, "force", False))
    failed = {uid for uid, _ in summary.failures}
    seg_counts = Counter()
    utt_counts = Counter()
    for rec in records:
        if rec.utterance_id in failed:
            continue
        n_segments = cache.cached_segment_count(cache_dir, rec.utterance_id)
        if n_segments is not None:
            seg_counts[rec.label] += n_segments
            utt_counts[rec.label] += 1
    print(f"cache directory: {cache_dir}")
    print(f"extracted {summary.n_extracted}, skipped {summary.n_skipped} cached, "
          f"failed {len(summary.failures)} of {summary.n_total}")
    for k, name in enumerate(CLASSES):
        print(f"  {name}: {seg_counts[k]} segments from {utt_counts[k]} utterances")
    for uid, message in summary.failures:
        print(f"error: {uid}: {message}", file=sys.stderr)
    return 1 if summary.failures else 0


def cmd_train(args):
    settings = resolve_settings(args)
    manifest_path = Path(_require(args, "manifest"))
    out_dir = Path(_require(args, "out"))
    records = filter_records(parse_manifest(manifest_path), settings.dataset)
    segments_by_utt = _load_cached(records, manifest_path, settings.mfcc)
    out_dir.mkdir(parents=True, exist_ok=True)

    result = run_experiment(records, segments_by_utt, settings.model, settings.train,
                            settings.split, settings.runs, settings.seed, CLASSES)
    tag = settings.model.fusion_mode

    lines = ["run_id,wa,ua,macro_f1,micro_f1"]
    for run in result.runs:
        r = run.report
        lines.append(f"{run.run_id},{r.wa:.6f},{r.ua:.6f},{r.macro_f1:.6f},{r.micro_f1:.6f}")
    atomic_write_text(out_dir / f"runs_{tag}.csv", "\n".join(lines) + "\n")
    atomic_write_text(out_dir / f"summary_{tag}.json", _json_text(result.summary.as_dict()))

    total_confusion = np.zeros_like(result.runs[0].report.confusion)
    for run in result.runs:
        total_confusion = total_confusion + run.report.confusion
    atomic_write_text(out_dir / f"confusion_{tag}.json", _json_text({
        "class_names": list(CLASSES),
        "n_runs": len(result.runs),
        "confusion": total_confusion.tolist(),
    }))
    atomic_write_text(out_dir / f"confusion_{tag}.txt",
                      confusion_table(total_confusion, CLASSES))
    save_confusion_figure(total_confusion, CLASSES, out_dir / f"confusion_{tag}.png")
    save_history_figure([run.history for run in result.runs],
                        out_dir / f"history_{tag}.png")

    for run in result.runs:
        save_checkpoint(
            out_dir / f"run{run.run_id}_{tag}.ckpt",
            settings.model, run.params, step=len(run.history),
            extra={
                "run_id": run.run_id,
                "seed": settings.seed + run.run_id,
                "fusion_mode": tag,
                "dataset": settings.dataset,
                "split": settings.split,
                "test_utterances": list(run.test_ids),
                "metrics": run.report.as_dict(),
            },
            aux_tensors={"norm.mean": run.stats.mean, "norm.std": run.stats.std},
        )
        history_lines = [json.dumps(row, sort_keys=True) for row in run.history]
        atomic_write_text(out_dir / f"run{run.run_id}_{tag}_history.jsonl",
                          "\n".join(history_lines) + "\n")
        atomic_write_text(out_dir / f"run{run.run_id}_{tag}_confusion.json", _json_text({
            "class_names": list(CLASSES),
            "confusion": run.report.confusion.tolist(),
        }))

    print(f"fusion {tag}, dataset {settings.dataset}, split {settings.split}, "
          f"{settings.runs} run(s)")
    for run in result.runs:
        r = run.report
        print(f"  run {run.run_id}: wa {r.wa:.4f}  ua {r.ua:.4f}  "
              f"macro_f1 {r.macro_f1:.4f}  micro_f1 {r.micro_f1:.4f}")
    summary = result.summary
    parts = [f"{k} {summary.mean[k]:.4f} ± {summary.std[k]:.4f}" for k in METRIC_KEYS]
    print("  mean: " + "  ".join(parts))
    print(f"artifacts written to {out_dir}")
    return 0


def cmd_eval(args):
    settings = resolve_settings(args)
    checkpoint_path = _require(args, "checkpoint")
    manifest_path = Path(_require(args, "manifest"))
    out_dir = Path(_require(args, "out"))

    cfg, params, _, _, aux = load_checkpoint(checkpoint_path)
    records = filter_records(parse_manifest(manifest_path), settings.dataset)
    segments_by_utt = _load_cached(records, manifest_path, settings.mfcc)
    segments = segments_for(records, segments_by_utt)
    if "norm.mean" not in aux or "norm.std" not in aux:
        raise FormatError(f"{checkpoint_path}: checkpoint has no normalization statistics")
    stats = FeatureStats(aux["norm.mean"], aux["norm.std"])
    normalized, _ = normalize_features(segments, stats)

    report, utt_ids, preds = evaluate_utterances(
        params, cfg, normalized, CLASSES, settings.train.batch_size)
    out_dir.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out_dir / "eval_metrics.json", _json_text(report.as_dict()))
    atomic_write_text(out_dir / "eval_confusion.json", _json_text({
        "class_names": list(CLASSES),
        "confusion": report.confusion.tolist(),
    }))
    atomic_write_text(out_dir / "eval_confusion.txt",
                      confusion_table(report.confusion, CLASSES))
    save_confusion_figure(report.confusion, CLASSES, out_dir / "eval_confusion.png")
    atomic_write_text(out_dir / "eval_predictions.jsonl", "\n".join(
        json.dumps({"utterance_id": uid, "predicted": CLASSES[pred]}, sort_keys=True)
        for uid, pred in zip(utt_ids, preds)) + "\n")

    if getattr(args, "embeddings", None):
        x = np.stack([s.data for s in normalized])[:, None, :, :]
        chunks = []
        step = settings.train.batch_size
        for start in range(0, x.shape[0], step):
            hidden = export_embeddings(Tensor(x[start:start + step]), params, cfg)
            chunks.append(hidden.data)
        embeddings = np.concatenate(chunks, axis=0).astype(np.float32)
        write_tensor(args.embeddings, embeddings)
        atomic_write_text(str(args.embeddings) + ".json", _json_text({
            "rows": [{"utterance_id": s.utterance_id,
                      "segment_index": s.segment_index,
                      "label": CLASSES[s.label]} for s in normalized],
        }))

    print(f"evaluated {len(utt_ids)} utterances from {manifest_path}")
    print(f"  wa {report.wa:.4f}  ua {report.ua:.4f}  "
          f"macro_f1 {report.macro_f1:.4f}  micro_f1 {report.micro_f1:.4f}")
    print(confusion_table(report.confusion, CLASSES))
    return 0


def cmd_gradcheck(args):
    seed = args.seed if args.seed is not None else 0
    cases = default_suite(seed)
    cases.append(full_model_case(seed))
    results = run_suite(cases, seed=seed)
    n_failed = 0
    for r in results:
        status = "PASS" if r.ok else "FAIL"
        if not r.ok:
            n_failed += 1
        print(f"{status}  {r.name:<22} max rel err {r.max_rel_err:.3e}  tol {r.tol:.0e}")
    if n_failed:
        print(f"{n_failed} of {len(results)} gradient checks failed", file=sys.stderr)
        return 1
    print(f"all {len(results)} gradient checks passed")
    return 0


def cmd_synth(args):
    out_dir = Path(_require(args, "out"))
    seed = args.seed if args.seed is not None else 0
    manifest_path = generate_synth_dataset(out_dir, args.n_per_class, seed)
    n_lines = sum(1 for line in open(manifest_path, encoding="utf-8") if line.strip())
    print(f"wrote {n_lines} utterances under {out_dir}")
    print(f"manifest: {manifest_path}")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser():
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", metavar="PATH", help="flat key=value settings file")
    shared.add_argument("--manifest", metavar="PATH", help="JSON-lines utterance manifest")
    shared.add_argument("--out", metavar="DIR", help="output directory")
    shared.add_argument("--seed", type=int, metavar="N", help="base random seed")
    shared.add_argument("--dataset", choices=DATASETS, help="manifest subset to use")
    shared.add_argument("--fusion", choices=FUSION_MODES, help="fusion mode")
    shared.add_argument("--alpha", type=float, metavar="F",
                        help="mixup concentration; 0 disables mixing")
    shared.add_argument("--runs", type=int, metavar="N", help="number of runs")
    shared.add_argument("--split", choices=SPLIT_MODES, help="split strategy")

    parser = argparse.ArgumentParser(
        prog="glam",
        description="Speech emotion recognition: features, training, evaluation.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("features", parents=[shared],
                       help="extract MFCC segments into the cache")
    p.add_argument("--force", action="store_true", help="re-extract cached entries")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("train", parents=[shared], help="run a training experiment")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[shared],
                       help="evaluate a checkpoint on a manifest")
    p.add_argument("--checkpoint", metavar="PATH", help="checkpoint to evaluate")
    p.add_argument("--embeddings", metavar="PATH",
                   help="also export penultimate-layer features to this file")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", parents=[shared],
                       help="run the finite-difference gradient suite")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("synth", parents=[shared],
                       help="generate the synthetic four-class dataset")
    p.add_argument("--n-per-class", type=int, default=25, metavar="N",
                   help="utterances per class (default 25)")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except GlamError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entrypoint():
    raise SystemExit(main())
