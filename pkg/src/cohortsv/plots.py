"""Figure rendering for pipeline reports.

Every report CSV the pipeline emits has a matching PNG rendered here.
The Agg backend is forced so figures work in headless runs, and PNG
metadata is pinned so identical data produces identical files.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

_SAVE_KWARGS = {"dpi": 150, "metadata": {"Software": "cohortsv"}}


def save_cost_curve(path, ks, costs) -> None:
    """Clustering cost against cohort size."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(ks, costs, marker="o", color="tab:blue")
    ax.set_xlabel("number of clusters")
    ax.set_ylabel("clustering cost")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)


def save_rank_histogram(path, genuine_counts, imposter_counts) -> None:
    """Side-by-side rank-position counts for genuine and imposter trials."""
    ranks = range(1, len(genuine_counts) + 1)
    width = 0.4
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar([r - width / 2 for r in ranks], genuine_counts, width=width,
           label="genuine", color="tab:green")
    ax.bar([r + width / 2 for r in ranks], imposter_counts, width=width,
           label="imposter", color="tab:red")
    ax.set_xlabel("rank position of claimed-speaker score")
    ax.set_ylabel("trial count")
    ax.set_xticks(list(ranks))
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)


def save_det_curves(path, curves: dict) -> None:
    """Overlayed DET trade-offs; curves maps a label to its (FAR, FRR) points."""
    fig, ax = plt.subplots(figsize=(5, 5))
    for label, points in curves.items():
        far = [p[0] for p in points]
        frr = [p[1] for p in points]
        ax.plot(far, frr, label=label)
    ax.plot([0, 1], [0, 1], linestyle=":", color="gray", linewidth=0.8)
    ax.set_xlabel("false acceptance rate")
    ax.set_ylabel("false rejection rate")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1)
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)


def save_score_histogram(path, genuine_scores, imposter_scores, *, title=None) -> None:
    """Overlapping decision-score histograms for the two trial classes."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(imposter_scores, bins=40, alpha=0.6, label="imposter",
            color="tab:red", density=True)
    ax.hist(genuine_scores, bins=40, alpha=0.6, label="genuine",
            color="tab:green", density=True)
    ax.set_xlabel("decision score")
    ax.set_ylabel("density")
    if title:
        ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)
