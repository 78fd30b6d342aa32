"""Figures written next to the CLI's tabular output.

Everything renders off-screen (Agg) straight to a file; the format follows
the file extension.
"""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.dpi": 120,
}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_throughput(report, path):
    """Bar chart of frames per second per benchmarked model."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5, 3))
        names = [f"{m.code}\n{m.scale}px" for m in report.models]
        fps = [m.fps for m in report.models]
        bars = ax.bar(names, fps, color="#4c72b0")
        ax.bar_label(bars, fmt="%.1f", fontsize=8)
        ax.set_ylabel("frames / s")
        ax.set_title(f"End-to-end throughput ({report.environment.get('threads', 1)} thread)")
        return _save(fig, path)


def plot_confusion(confusion, labels, path, title="Confusion matrix"):
    confusion = np.asarray(confusion)
    with plt.rc_context(STYLE):
        size = max(3.0, 0.45 * len(labels) + 1.5)
        fig, ax = plt.subplots(figsize=(size, size))
        ax.imshow(confusion, cmap="Blues")
        ticks = np.arange(len(labels))
        ax.set_xticks(ticks, [str(l) for l in labels], rotation=45, ha="right")
        ax.set_yticks(ticks, [str(l) for l in labels])
        ax.set_xlabel("predicted")
        ax.set_ylabel("true")
        if len(labels) <= 20:
            peak = confusion.max() or 1
            for (i, j), v in np.ndenumerate(confusion):
                ax.text(j, i, str(v), ha="center", va="center", fontsize=7,
                        color="white" if v > peak / 2 else "black")
        ax.set_title(title)
        return _save(fig, path)


def plot_layer_sizes(rows, path, title=None):
    """Log-scale comparison of flattened vs pooled descriptor sizes per layer.

    ``rows`` are ``(layer, shape, linear, pooled)`` tuples as produced by
    the ``shapes`` command.
    """
    names = [r[0] for r in rows]
    linear = [r[2] for r in rows]
    pooled = [r[3] for r in rows]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(max(4.0, 0.3 * len(rows) + 2), 3.2))
        x = np.arange(len(rows))
        ax.bar(x - 0.2, linear, 0.4, label="flattened", color="#dd8452")
        ax.bar(x + 0.2, pooled, 0.4, label="max/sum pooled", color="#4c72b0")
        ax.set_yscale("log")
        ax.set_xticks(x, names, rotation=60, ha="right", fontsize=7)
        ax.set_ylabel("descriptor length")
        ax.legend(frameon=False, ncol=2, loc="lower left", bbox_to_anchor=(0, 1.0))
        if title:
            ax.set_title(title, loc="right")
        return _save(fig, path)
