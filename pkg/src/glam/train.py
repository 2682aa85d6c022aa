"""Mixup training with Adam, decoupled weight decay and an exponential
learning-rate schedule.

One mixing coefficient is drawn per batch from Beta(alpha, alpha) and the
batch is mixed with a random permutation of itself, labels included.  With
alpha = 0 the mixup machinery is bypassed entirely and no Beta variate is
consumed.  When a validation set is given, the returned parameters are the
snapshot with the best mean of UA and WA (earliest epoch on ties).
"""

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import model as model_mod
from .autodiff import Tensor
from .errors import ConfigError, DivergenceError, StateError, ValidationError
from .metrics import aggregate_utterance, compute_metrics


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 32
    lr0: float = 1e-4
    lr_decay: float = 0.95
    lr_floor: float = 1e-6
    weight_decay: float = 1e-6
    alpha: float = 0.5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be at least 1")
        if self.alpha < 0:
            raise ConfigError(f"alpha must be >= 0, got {self.alpha}")
        if self.batch_size < 2 and self.alpha > 0:
            raise ConfigError("mixup needs batch_size >= 2; set alpha=0 for batch_size 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be positive")
        if self.lr0 <= 0 or self.lr_floor <= 0 or not 0 < self.lr_decay <= 1:
            raise ConfigError("learning-rate settings out of range")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1 and self.eps > 0):
            raise ConfigError("Adam settings out of range")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be >= 0")


def lr_at_epoch(cfg: TrainConfig, epoch: int) -> float:
    return max(cfg.lr0 * cfg.lr_decay**epoch, cfg.lr_floor)


def sample_beta(alpha: float, rng: np.random.Generator) -> float:
    """Beta(alpha, alpha) via the ratio of two Gamma(alpha) draws."""
    if alpha <= 0:
        raise ConfigError(f"Beta sampling needs alpha > 0, got {alpha}")
    g1 = rng.standard_gamma(alpha)
    g2 = rng.standard_gamma(alpha)
    total = g1 + g2
    if total == 0.0:  # only reachable for tiny alpha where both underflow
        return 0.5
    return float(g1 / total)


def mix_with_lambda(x: np.ndarray, y: np.ndarray, perm: np.ndarray, lam: float):
    """Deterministic core of mixup: convex combination with a permutation."""
    xm = (lam * x.astype(np.float64) + (1.0 - lam) * x[perm].astype(np.float64)).astype(x.dtype)
    ym = lam * y.astype(np.float64) + (1.0 - lam) * y[perm].astype(np.float64)
    return xm, ym


def mixup_batch(x: np.ndarray, y: np.ndarray, alpha: float, rng: np.random.Generator):
    """Mix a batch with a shuffled copy of itself; one lambda per batch.

    Returns (mixed_x, mixed_y, lam).  y rows are probability vectors (one-hot
    for plain labels) and stay valid probability vectors after mixing.
    """
    if alpha <= 0:
        raise ConfigError("mixup_batch called with alpha <= 0; bypass mixup instead")
    if x.shape[0] < 2:
        raise ValidationError("mixup needs at least two rows in the batch")
    if y.shape[0] != x.shape[0]:
        raise ValidationError(f"x has {x.shape[0]} rows but y has {y.shape[0]}")
    lam = sample_beta(alpha, rng)
    perm = rng.permutation(x.shape[0])
    xm, ym = mix_with_lambda(x, y, perm, lam)
    return xm, ym, lam


def one_hot(labels, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.min() < 0 or labels.max() >= n_classes:
        raise ValidationError("label out of range")
    return np.eye(n_classes, dtype=np.float64)[labels]


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0

    @classmethod
    def init(cls, params: model_mod.ParameterSet):
        state = cls()
        for name, p in params.params.items():
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        return state


def _decay_exempt(name: str) -> bool:
    # normalization parameters are not decayed
    return ".bn." in name or ".norm." in name


def adam_step(params: model_mod.ParameterSet, state: AdamState, lr: float, cfg: TrainConfig):
    """One bias-corrected Adam step with decoupled (lr-scaled) weight decay.

    Decay is applied to the parameter before the Adam update and never to
    normalization parameters; BN running stats are not optimizer slots at
    all, so they are untouched by construction.
    """
    state.t += 1
    t = state.t
    for name, p in params.params.items():
        if p.grad is None:
            raise StateError(f"parameter {name!r} has no gradient; run backward first")
        g = p.grad
        if cfg.weight_decay > 0 and not _decay_exempt(name):
            p.data -= lr * cfg.weight_decay * p.data
        m = state.m[name]
        v = state.v[name]
        m += (1.0 - cfg.beta1) * (g - m)
        v += (1.0 - cfg.beta2) * (g * g - v)
        m_hat = m / (1.0 - cfg.beta1**t)
        v_hat = v / (1.0 - cfg.beta2**t)
        p.data -= (lr * m_hat / (np.sqrt(v_hat) + cfg.eps)).astype(p.data.dtype, copy=False)


# ---------------------------------------------------------------------------
# training loop


@dataclass
class TrainResult:
    params: model_mod.ParameterSet
    history: list  # one dict per epoch


def _stack_segments(segments):
    if not segments:
        raise ValidationError("no segments to train on")
    x = np.stack([s.data for s in segments]).astype(np.float32)[:, None, :, :]
    y = np.array([s.label for s in segments], dtype=np.int64)
    if y.min() < 0:
        raise ValidationError("segment without a label")
    return x, y


def evaluate_utterances(params, model_cfg, segments, class_names=(), batch_size=32):
    """Utterance-level metrics from per-segment eval-mode probabilities.

    Returns (MetricsReport, utterance_ids, predicted_labels); utterances are
    ordered by id so the output is stable regardless of segment order.
    """
    x, _ = _stack_segments(segments)
    probs = model_mod.predict_probabilities(params, model_cfg, x, batch_size)
    by_utt = {}
    labels = {}
    for seg, p in zip(segments, probs):
        by_utt.setdefault(seg.utterance_id, []).append(p)
        labels[seg.utterance_id] = seg.label
    utt_ids = sorted(by_utt)
    preds = [aggregate_utterance(by_utt[u])[1] for u in utt_ids]
    true = [labels[u] for u in utt_ids]
    report = compute_metrics(true, preds, model_cfg.n_classes, class_names)
    return report, utt_ids, preds


def train(model_cfg: model_mod.ModelConfig, train_segments, val_segments,
          cfg: TrainConfig, params: model_mod.ParameterSet | None = None) -> TrainResult:
    """Run the full schedule over ``train_segments``.

    Bitwise deterministic for fixed configs, data and seed.  Raises
    DivergenceError as soon as a batch loss is not finite.
    """
    if not train_segments:
        raise ConfigError("training set is empty")
    x_all, y_all = _stack_segments(train_segments)
    n = x_all.shape[0]
    if params is None:
        params = model_mod.init_parameters(model_cfg, seed=cfg.seed)
    rng_shuffle = np.random.default_rng([cfg.seed, 11])
    rng_mix = np.random.default_rng([cfg.seed, 23])
    adam = AdamState.init(params)
    history = []
    best_score, best_params = None, None

    for epoch in range(cfg.epochs):
        lr = lr_at_epoch(cfg, epoch)
        order = rng_shuffle.permutation(n)
        losses = []
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            xb = x_all[idx]
            yb = one_hot(y_all[idx], model_cfg.n_classes)
            if cfg.alpha > 0 and idx.size >= 2:
                xb, yb, _ = mixup_batch(xb, yb, cfg.alpha, rng_mix)
            logits = model_mod.glam_forward(Tensor(xb), params, model_cfg, mode="train")
            loss = ad.softmax_cross_entropy(logits, yb.astype(np.float32))
            loss_val = loss.item()
            if not np.isfinite(loss_val):
                raise DivergenceError(f"non-finite loss {loss_val} at epoch {epoch}")
            ad.clear_grads(params.tensors())
            ad.backward(loss)
            adam_step(params, adam, lr, cfg)
            losses.append(loss_val)
        row = {
            "epoch": epoch,
            "loss": float(np.mean(losses)) if losses else 0.0,
            "lr": lr,
            "val_wa": None,
            "val_ua": None,
            "snapshot": False,
        }
        if val_segments:
            report, _, _ = evaluate_utterances(
                params, model_cfg, val_segments, batch_size=cfg.batch_size
            )
            wa, ua = report.wa, report.ua
            row["val_wa"], row["val_ua"] = wa, ua
            score = 0.5 * (ua + wa)
            if best_score is None or score > best_score:  # strict: ties keep earliest
                best_score = score
                best_params = params.copy()
                row["snapshot"] = True
        history.append(row)

    final = best_params if best_params is not None else params
    return TrainResult(params=final, history=history)
