"""Evaluation for imbalanced multi-class data, and the split protocol.

WA (overall accuracy) and UA (mean per-class recall) are reported side by
side because the class priors are skewed; macro and micro F1 round out the
picture.  Utterance-level predictions average the softmax vectors of all
segments of the utterance.  Splits are regenerated per repetition from
seed + run_index so repeated experiments are reproducible.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ValidationError


def aggregate_utterance(segment_probs) -> tuple:
    """Mean of the segment probability vectors and its argmax.

    Ties resolve to the lowest class index (numpy argmax order).
    """
    probs = np.asarray(segment_probs, dtype=np.float64)
    if probs.ndim != 2 or probs.shape[0] == 0:
        raise ValidationError(f"need a non-empty (segments, classes) array, got {probs.shape}")
    mean = probs.mean(axis=0)
    return mean, int(np.argmax(mean))


def confusion_from_labels(true_labels, pred_labels, n_classes: int) -> np.ndarray:
    true_labels = np.asarray(true_labels, dtype=np.int64)
    pred_labels = np.asarray(pred_labels, dtype=np.int64)
    if true_labels.shape != pred_labels.shape or true_labels.ndim != 1 or true_labels.size == 0:
        raise ValidationError("label lists must be equal-length, 1-D and non-empty")
    if true_labels.min() < 0 or true_labels.max() >= n_classes:
        raise ValidationError("true label out of range")
    if pred_labels.min() < 0 or pred_labels.max() >= n_classes:
        raise ValidationError("predicted label out of range")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (true_labels, pred_labels), 1)
    return cm


@dataclass
class MetricsReport:
    wa: float
    ua: float
    macro_f1: float
    micro_f1: float
    confusion: np.ndarray
    n: int
    class_names: tuple = ()

    def as_dict(self):
        return {
            "wa": self.wa,
            "ua": self.ua,
            "macro_f1": self.macro_f1,
            "micro_f1": self.micro_f1,
            "n": self.n,
        }


def metrics_from_confusion(cm: np.ndarray, class_names=()) -> MetricsReport:
    """All four metrics from a (true x predicted) count matrix.

    Per-class F1 is 0 when precision + recall is 0.  UA averages recall
    over classes that actually occur; macro F1 averages over classes that
    occur or were predicted.  Micro F1 comes from pooled counts, which for
    single-label data makes it equal to WA.
    """
    cm = np.asarray(cm, dtype=np.int64)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1]:
        raise ValidationError(f"confusion matrix must be square, got {cm.shape}")
    total = int(cm.sum())
    if total == 0:
        raise ValidationError("empty confusion matrix")
    k = cm.shape[0]
    tp = np.diag(cm).astype(np.float64)
    true_counts = cm.sum(axis=1).astype(np.float64)
    pred_counts = cm.sum(axis=0).astype(np.float64)

    wa = float(tp.sum() / total)

    present = true_counts > 0
    recall = np.divide(tp, true_counts, out=np.zeros(k), where=present)
    ua = float(recall[present].mean())

    precision = np.divide(tp, pred_counts, out=np.zeros(k), where=pred_counts > 0)
    pr_sum = precision + recall
    f1 = np.divide(2.0 * precision * recall, pr_sum, out=np.zeros(k), where=pr_sum > 0)
    in_macro = (true_counts > 0) | (pred_counts > 0)
    macro_f1 = float(f1[in_macro].mean())

    micro_p = tp.sum() / pred_counts.sum()
    micro_r = tp.sum() / true_counts.sum()
    micro_f1 = float(2.0 * micro_p * micro_r / (micro_p + micro_r)) if micro_p + micro_r > 0 else 0.0

    return MetricsReport(wa, ua, macro_f1, micro_f1, cm, total, tuple(class_names))


def compute_metrics(true_labels, pred_labels, n_classes: int, class_names=()) -> MetricsReport:
    cm = confusion_from_labels(true_labels, pred_labels, n_classes)
    return metrics_from_confusion(cm, class_names)


def confusion_table(cm: np.ndarray, class_names) -> str:
    """Aligned text rendering of a confusion matrix (rows = true class)."""
    cm = np.asarray(cm)
    names = list(class_names) if class_names else [f"class{i}" for i in range(cm.shape[0])]
    width = max(7, max(len(n) for n in names) + 1, len(str(int(cm.max()))) + 1)
    head = "true\\pred".ljust(12) + "".join(n.rjust(width) for n in names) + "total".rjust(width)
    lines = [head]
    for i, name in enumerate(names):
        row = name.ljust(12) + "".join(str(int(v)).rjust(width) for v in cm[i])
        lines.append(row + str(int(cm[i].sum())).rjust(width))
    lines.append("total".ljust(12) + "".join(str(int(v)).rjust(width) for v in cm.sum(axis=0))
                 + str(int(cm.sum())).rjust(width))
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# splits


@dataclass
class Split:
    train: list
    val: list  # empty for holdout
    test: list


def make_splits(records, mode: str, n_runs: int, seed: int) -> list:
    """n_runs random partitions of ``records``; run i shuffles with seed+i.

    ``holdout`` is 80/20 train/test; ``ratio811`` is 80/10/10 with the
    validation part used for epoch selection.
    """
    records = list(records)
    n = len(records)
    if n_runs < 1:
        raise ConfigError("n_runs must be at least 1")
    if mode not in ("holdout", "ratio811"):
        raise ConfigError(f"unknown split mode {mode!r}")
    splits = []
    for i in range(n_runs):
        order = np.random.default_rng(seed + i).permutation(n)
        shuffled = [records[j] for j in order]
        n_train = int(round(0.8 * n))
        n_val = int(round(0.1 * n)) if mode == "ratio811" else 0
        n_test = n - n_train - n_val
        if n_train < 1 or n_test < 1:
            raise ConfigError(f"cannot split {n} records {mode}: train={n_train}, test={n_test}")
        splits.append(Split(train=shuffled[:n_train],
                            val=shuffled[n_train : n_train + n_val],
                            test=shuffled[n_train + n_val :]))
    return splits


@dataclass
class SplitSummary:
    n_runs: int
    mean: dict = field(default_factory=dict)
    std: dict = field(default_factory=dict)
    degenerate_std: bool = False

    def as_dict(self):
        return {
            "n_runs": self.n_runs,
            "mean": self.mean,
            "std": self.std,
            "degenerate_std": self.degenerate_std,
        }


METRIC_KEYS = ("wa", "ua", "macro_f1", "micro_f1")


def summarize_runs(reports) -> SplitSummary:
    """Mean and sample std (ddof=1) of each metric over repeated runs."""
    reports = list(reports)
    if not reports:
        raise ValidationError("no runs to summarize")
    summary = SplitSummary(n_runs=len(reports), degenerate_std=len(reports) < 2)
    for key in METRIC_KEYS:
        vals = np.array([getattr(r, key) for r in reports], dtype=np.float64)
        summary.mean[key] = float(vals.mean())
        summary.std[key] = float(vals.std(ddof=1)) if len(reports) > 1 else 0.0
    return summary
