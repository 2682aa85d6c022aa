"""Figure rendering for experiment outputs (headless, PNG files only)."""

import matplotlib

matplotlib.use("Agg")

import os

import matplotlib.pyplot as plt
import numpy as np


def _save(fig, path):
    # same atomic discipline as every other artifact: temp file, then rename
    tmp = f"{path}.part"
    try:
        fig.savefig(tmp, dpi=120, format="png")
        os.replace(tmp, path)
    finally:
        plt.close(fig)
        if os.path.exists(tmp):
            os.unlink(tmp)


def save_confusion_figure(confusion, class_names, path):
    """Heatmap of an utterance-level confusion matrix with counts annotated."""
    cm = np.asarray(confusion)
    n = cm.shape[0]
    names = list(class_names) if class_names else [str(i) for i in range(n)]
    fig, ax = plt.subplots(figsize=(1.2 * n + 2.0, 1.2 * n + 1.5))
    image = ax.imshow(cm, cmap="Blues")
    fig.colorbar(image, ax=ax, fraction=0.046)
    ax.set_xticks(range(n), names, rotation=45, ha="right")
    ax.set_yticks(range(n), names)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    threshold = cm.max() / 2.0 if cm.max() > 0 else 0.5
    for i in range(n):
        for j in range(n):
            color = "white" if cm[i, j] > threshold else "black"
            ax.text(j, i, str(int(cm[i, j])), ha="center", va="center", color=color)
    fig.tight_layout()
    _save(fig, path)


def save_history_figure(histories, path):
    """Training loss and validation scores over epochs, one line per run."""
    fig, (ax_loss, ax_val) = plt.subplots(1, 2, figsize=(11, 4))
    for i, history in enumerate(histories):
        epochs = [row["epoch"] for row in history]
        ax_loss.plot(epochs, [row["loss"] for row in history], label=f"run {i}")
        vals = [(row["epoch"], row["val_ua"]) for row in history
                if row.get("val_ua") is not None]
        if vals:
            ax_val.plot([e for e, _ in vals], [v for _, v in vals], label=f"run {i}")
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("mean training loss")
    ax_val.set_xlabel("epoch")
    ax_val.set_ylabel("validation UA")
    ax_val.set_ylim(0.0, 1.05)
    if histories:
        ax_loss.legend(fontsize="small")
    fig.tight_layout()
    _save(fig, path)
