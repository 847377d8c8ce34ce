"""Figures written next to the delimited reports."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 100,
    "font.size": 10,
    "axes.labelsize": 10,
    "axes.titlesize": 11,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "lines.linewidth": 1.5,
}

# Fixed PNG metadata keeps repeated runs byte-identical.
PNG_METADATA = {"Software": None}


def savefig(fig, path):
    fig.savefig(path, metadata=PNG_METADATA)
    plt.close(fig)
    return path


def roc_figure(curves, path, title="ROC"):
    """``curves`` maps a legend label to ``(fpr, tpr, auc)``."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot([0, 1], [0, 1], color="0.7", linestyle="--", linewidth=1)
        for label, (fpr, tpr, auc) in curves.items():
            ax.plot(fpr, tpr, label=f"{label} (AUC {auc:.3f})")
        ax.set_xlabel("false positive rate")
        ax.set_ylabel("true positive rate")
        ax.set_xlim(0, 1)
        ax.set_ylim(0, 1.01)
        ax.set_title(title)
        ax.legend(loc="lower right")
        fig.tight_layout()
        return savefig(fig, path)


def loss_figure(pretrain_trace, finetune_traces, path, title="training losses"):
    with plt.rc_context(STYLE):
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
        if pretrain_trace:
            ax1.plot(np.arange(1, len(pretrain_trace) + 1), pretrain_trace, marker="o")
        ax1.set_title("stage 1: contrastive")
        ax1.set_xlabel("epoch")
        ax1.set_ylabel("mean loss")
        for key in ("total", "bce", "triplet"):
            vals = finetune_traces.get(key, [])
            ax2.plot(np.arange(1, len(vals) + 1), vals, marker="o", label=key)
        ax2.set_title("stage 2: triplet + BCE")
        ax2.set_xlabel("epoch")
        ax2.legend()
        fig.suptitle(title)
        fig.tight_layout()
        return savefig(fig, path)


def protocol_figure(rows, path):
    """Grouped ACC/EER bars. ``rows`` are dicts with train_set, eval_set,
    input, acc and eer keys."""
    cells = list(dict.fromkeys(f"{r['train_set']}→{r['eval_set']}" for r in rows))
    inputs = list(dict.fromkeys(r["input"] for r in rows))
    width = 0.8 / max(len(inputs), 1)
    x = np.arange(len(cells))
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 2, figsize=(10, 3.8), sharex=True)
        for ax, metric in zip(axes, ("acc", "eer")):
            for j, inp in enumerate(inputs):
                vals = [next((float(r[metric]) for r in rows
                              if r["input"] == inp and f"{r['train_set']}→{r['eval_set']}" == c), np.nan)
                        for c in cells]
                ax.bar(x + (j - (len(inputs) - 1) / 2) * width, vals, width, label=inp)
            ax.set_xticks(x)
            ax.set_xticklabels(cells)
            ax.set_ylabel(metric.upper())
            ax.set_ylim(0, 1)
        axes[0].axhline(0.5, color="0.6", linestyle=":", linewidth=1)
        axes[0].legend(loc="lower left")
        fig.tight_layout()
        return savefig(fig, path)


def gradcheck_figure(errors, tolerance, path):
    """Bar chart of max relative error per component on a log axis."""
    names = list(errors)
    vals = [max(errors[n], 1e-16) for n in names]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(7, 3.5))
        ax.barh(names, vals, color=["C0" if v < tolerance else "C3" for v in vals])
        ax.axvline(tolerance, color="k", linestyle="--", linewidth=1)
        ax.set_xscale("log")
        ax.set_xlabel("max relative error")
        fig.tight_layout()
        return savefig(fig, path)
