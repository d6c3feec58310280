"""Optional figure rendering for CLI reports. Imported lazily so the
library and the non-plotting CLI paths never pay the matplotlib cost."""

from __future__ import annotations

from typing import Sequence


def _pyplot():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def save_adapt_curves(stats: Sequence, path: str) -> None:
    """Two panels: task/reg loss per epoch and mean drift per epoch."""
    plt = _pyplot()
    epochs = [s.epoch for s in stats]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax1.plot(epochs, [s.task_loss for s in stats], marker="o", label="task loss")
    ax1.plot(epochs, [s.reg_loss for s in stats], marker="s", label="reg loss")
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("loss")
    ax1.legend()
    ax1.grid(alpha=0.3)
    ax2.plot(epochs, [s.mean_drift for s in stats], marker="o", color="tab:red")
    ax2.set_xlabel("epoch")
    ax2.set_ylabel("mean drift")
    ax2.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_fertility_hist(report, path: str) -> None:
    """Average tokens per word, bucketed by word length."""
    plt = _pyplot()
    lengths = sorted(report.hist)
    avg = [report.hist[k][1] / report.hist[k][0] for k in lengths]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.bar(lengths, avg, color="tab:blue")
    ax.set_xlabel("word length (codepoints)")
    ax.set_ylabel("tokens per word")
    ax.set_title(f"TF = {report.tf:.3f}")
    ax.grid(alpha=0.3, axis="y")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_compare_chart(report, path: str) -> None:
    """Grouped bars: TF and mean sequence length per tokenizer."""
    plt = _pyplot()
    names = [r.name for r in report.rows]
    x = range(len(names))
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax1.bar(x, [r.tf for r in report.rows], color="tab:blue")
    ax1.set_xticks(list(x), names, rotation=20, ha="right")
    ax1.set_ylabel("token fertility")
    ax1.grid(alpha=0.3, axis="y")
    ax2.bar(x, [r.mean_seq_len for r in report.rows], color="tab:orange")
    ax2.set_xticks(list(x), names, rotation=20, ha="right")
    ax2.set_ylabel("mean tokens per line")
    ax2.grid(alpha=0.3, axis="y")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
