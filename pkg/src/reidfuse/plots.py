"""Report figures rendered to files (headless backend, stable bytes).

PNG metadata is stripped (``Software: None``) so re-running an experiment
produces byte-identical images along with byte-identical reports.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .evaluation import EvalReport  # noqa: E402

_SAVE_KWARGS = {"dpi": 120, "metadata": {"Software": None}}


def save_cmc_figure(reports: list[EvalReport], path: str | Path) -> None:
    """One CMC curve per run, rank on x, cumulative match rate on y."""
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    for report in reports:
        ranks = range(1, len(report.cmc) + 1)
        ax.plot(ranks, report.cmc, marker="o", markersize=3, label=report.run_label)
    ax.set_xlabel("rank")
    ax.set_ylabel("cumulative match rate")
    ax.set_title("CMC curves")
    ax.set_ylim(0.0, 1.05)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)


def save_delta_figure(reports: list[EvalReport], path: str | Path) -> None:
    """Horizontal bars of each run's mAP delta vs the baseline run."""
    labels = [report.run_label for report in reports]
    deltas = [
        0.0 if report.delta_vs_baseline is None else report.delta_vs_baseline
        for report in reports
    ]
    fig, ax = plt.subplots(figsize=(7.0, 0.5 * max(len(reports), 4) + 1.5))
    positions = range(len(reports))
    ax.barh(positions, deltas)
    ax.set_yticks(positions, labels=labels, fontsize=8)
    ax.invert_yaxis()  # baseline row on top, like the table
    ax.axvline(0.0, color="black", linewidth=0.8)
    ax.set_xlabel("mAP delta vs baseline (%)")
    ax.set_title("mAP deltas")
    ax.grid(True, axis="x", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)
