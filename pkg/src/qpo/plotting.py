"""Figures written next to the delimited run outputs."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.ticker import MaxNLocator  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
}

LABELS = {
    "frac_top_0.5pct": "Fraction top 0.5%",
    "frac_top_1pct": "Fraction top 1%",
    "top10_avg": "Top-10 average",
    "top100_avg": "Top-100 average",
    "simple_regret": "Simple regret",
    "cumulative_regret": "Cumulative regret",
}


def metric_curves(summary, metric, path, title=None):
    """Mean +/- one SEM across seeds, one line per label."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.0))
        labels = []
        for r in summary:
            if r["label"] not in labels:
                labels.append(r["label"])
        for label in labels:
            rows = [r for r in summary if r["label"] == label]
            it = np.array([r["iteration"] for r in rows])
            m = np.array([r.get(f"{metric}_mean", np.nan) for r in rows], dtype=float)
            s = np.array([r.get(f"{metric}_sem", np.nan) for r in rows], dtype=float)
            line, = ax.plot(it, m, marker="o", ms=3, label=label)
            ax.fill_between(it, m - s, m + s, color=line.get_color(), alpha=0.2, lw=0)
        ax.set_xlabel("Iteration")
        ax.xaxis.set_major_locator(MaxNLocator(integer=True))
        ax.set_ylabel(LABELS.get(metric, metric))
        if title:
            ax.set_title(title)
        ax.legend(frameon=False, loc="upper left", bbox_to_anchor=(1.0, 1.0))
        fig.savefig(path, bbox_inches="tight")
        plt.close(fig)


def diversity_histograms(stats_by_label, path, threshold=0.4):
    """One pairwise-similarity histogram panel per policy."""
    labels = list(stats_by_label)
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, len(labels), figsize=(2.4 * len(labels), 2.4), sharey=True, squeeze=False)
        for ax, label in zip(axes[0], labels):
            st = stats_by_label[label]
            edges = st.bin_edges
            ax.bar(edges[:-1], st.counts, width=np.diff(edges), align="edge", color="0.4")
            ax.axvline(threshold, color="C3", lw=1, ls="--")
            ax.set_title(f"{label} ({len(st.edges)} edges)")
            ax.set_xlabel("Tanimoto similarity")
            ax.set_xlim(0, 1)
        axes[0][0].set_ylabel("Pairs")
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)


def toy_scores(scores, path):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(3.0, 2.4))
        ax.bar([f"x{i + 1}" for i in range(len(scores))], scores, color="0.4")
        ax.set_ylabel("P(optimal)")
        ax.set_ylim(0, 1)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
