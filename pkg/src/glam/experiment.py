"""Multi-run experiment driver: split, normalize, train, evaluate, summarize."""

from dataclasses import dataclass, replace

from .audio import normalize_features
from .errors import GlamError, ValidationError
from .metrics import MetricsReport, make_splits, summarize_runs
from .train import TrainConfig, evaluate_utterances, train


@dataclass
class RunResult:
    run_id: int
    report: MetricsReport
    history: list
    params: object
    stats: object
    train_ids: tuple
    val_ids: tuple
    test_ids: tuple


@dataclass
class ExperimentResult:
    runs: list
    summary: object


def segments_for(records, segments_by_utt):
    """Flatten cached segments for a list of utterance records, in record order."""
    out = []
    for rec in records:
        segs = segments_by_utt.get(rec.utterance_id)
        if segs is None:
            raise ValidationError(f"no cached features for utterance {rec.utterance_id!r}")
        out.extend(segs)
    return out


def run_experiment(records, segments_by_utt, model_cfg, train_cfg, split_mode,
                   n_runs, seed, class_names=()):
    """Train and evaluate over n_runs random splits.

    Normalization stats are fit on each run's training segments only and
    reused for that run's validation and test segments. Run i trains with
    seed + i so runs differ but the whole experiment is reproducible.
    """
    splits = make_splits(records, split_mode, n_runs, seed)
    runs = []
    for i, split in enumerate(splits):
        train_segs, stats = normalize_features(segments_for(split.train, segments_by_utt))
        val_segs = None
        if split.val:
            val_segs, _ = normalize_features(segments_for(split.val, segments_by_utt), stats)
        test_segs, _ = normalize_features(segments_for(split.test, segments_by_utt), stats)

        run_cfg = replace(train_cfg, seed=seed + i)
        try:
            result = train(model_cfg, train_segs, val_segs, run_cfg)
        except GlamError as exc:
            raise type(exc)(f"run {i}: {exc}") from exc
        report, _, _ = evaluate_utterances(
            result.params, model_cfg, test_segs, class_names, train_cfg.batch_size
        )
        runs.append(RunResult(
            run_id=i,
            report=report,
            history=result.history,
            params=result.params,
            stats=stats,
            train_ids=tuple(r.utterance_id for r in split.train),
            val_ids=tuple(r.utterance_id for r in split.val),
            test_ids=tuple(r.utterance_id for r in split.test),
        ))
    summary = summarize_runs([r.report for r in runs])
    return ExperimentResult(runs=runs, summary=summary)
