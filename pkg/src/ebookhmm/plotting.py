"""Figures written next to the delimited reports."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .evaluation import MismatchClass, MismatchReport  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
}

# no timestamps or version strings, so reruns are byte-identical
PNG_METADATA = {"Software": None}


def _save(fig, path):
    fig.savefig(path, dpi=120, metadata=PNG_METADATA)
    plt.close(fig)


def plot_identity_matrix(ids, matrix, path):
    with plt.rc_context(STYLE):
        k = len(ids)
        fig, ax = plt.subplots(figsize=(1.2 + 0.7 * k, 1.0 + 0.6 * k))
        image = ax.imshow(np.asarray(matrix) * 100, cmap="viridis", vmin=min(80.0, float(np.min(matrix)) * 100), vmax=100)
        ax.set_xticks(range(k), ids, rotation=45, ha="right")
        ax.set_yticks(range(k), ids)
        for i in range(k):
            for j in range(k):
                ax.text(j, i, f"{matrix[i][j] * 100:.1f}", ha="center", va="center", fontsize=7, color="w")
        fig.colorbar(image, ax=ax, label="% identity")
        ax.set_title("Pairwise sequence identity")
        fig.tight_layout()
        _save(fig, path)


def plot_mismatch_classes(report: MismatchReport, path, title="Mismatches against the reference"):
    names = [c.value for c in MismatchClass if c is not MismatchClass.EXACT]
    raw = [report.counts[n] for n in names]
    stripped = [report.stripped_counts[n] for n in names]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6.0, 3.2))
        y = np.arange(len(names))
        ax.barh(y - 0.2, raw, height=0.4, label="raw alignment")
        ax.barh(y + 0.2, stripped, height=0.4, label="tags removed")
        ax.set_yticks(y, names)
        ax.invert_yaxis()
        ax.set_xlabel("alignment columns")
        ax.set_title(title)
        ax.legend(frameon=False)
        fig.tight_layout()
        _save(fig, path)


def plot_match_profile(match_probs, path):
    """Probability of the match (vs delete) state at every model position."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(7.0, 2.4))
        x = np.arange(1, len(match_probs) + 1)
        ax.plot(x, match_probs, lw=0.6)
        ax.axhline(0.5, color="0.5", lw=0.5, ls="--")
        ax.set_ylim(0, 1.02)
        ax.set_xlim(1, max(len(match_probs), 2))
        ax.set_xlabel("model position")
        ax.set_ylabel("P(match state)")
        fig.tight_layout()
        _save(fig, path)
