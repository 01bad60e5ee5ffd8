"""Loss-curve figures written straight to PNG (no interactive backend)."""
from __future__ import annotations

from pathlib import Path

from matplotlib.figure import Figure

from .optim import Metrics


def _curve(ax, metrics: Metrics, field: str, **style):
    epochs = [r.epoch for r in metrics.records]
    ax.plot(epochs, [getattr(r, field) for r in metrics.records], **style)


def plot_training(metrics: Metrics, path, title: str = "") -> Path:
    fig = Figure(figsize=(8, 3.2))
    ax_loss, ax_acc = fig.subplots(1, 2)
    _curve(ax_loss, metrics, "train_loss", label="train", marker=".")
    _curve(ax_loss, metrics, "test_loss", label="test", marker=".")
    _curve(ax_acc, metrics, "train_acc", label="train", marker=".")
    _curve(ax_acc, metrics, "test_acc", label="test", marker=".")
    ax_loss.set(xlabel="epoch", ylabel="loss", yscale="log")
    ax_acc.set(xlabel="epoch", ylabel="accuracy")
    ax_loss.legend()
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    return Path(path)


def plot_comparison(comparison, path) -> Path:
    """Training loss of every (optimizer, start) run on one log axis."""
    fig = Figure(figsize=(6, 4))
    ax = fig.subplots()
    colors = {"sgd": "tab:red", "gsgd": "tab:blue"}
    lines = {"balanced": "-", "unbalanced": "--"}
    for (opt, start), run in sorted(comparison.runs.items()):
        _curve(ax, run.metrics, "train_loss", color=colors[opt], linestyle=lines[start],
               label=f"{'G-SGD' if opt == 'gsgd' else 'SGD'}, {start}")
    ax.set(xlabel="epoch", ylabel="training loss", yscale="log",
           title=f"{comparison.arch}, unbalanced scale {comparison.scale:g}")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    return Path(path)
