"""Figure rendering for evaluation outputs.

Figures are written next to the delimited outputs they visualize so a sweep
directory is self-describing: the CSV carries the numbers, the PNG the shape.
"""
from __future__ import annotations

from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .evaluate import SweepRow


def render_sweep_figure(rows: Sequence[SweepRow], path: str) -> None:
    """Precision and coverage against the score threshold."""
    thresholds = [row.threshold for row in rows]
    coverage = [row.coverage for row in rows]
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.plot(thresholds, coverage, marker="s", color="tab:blue", label="coverage")
    with_precision = [(r.threshold, r.precision) for r in rows if r.precision is not None]
    if with_precision:
        ax.plot(
            [t for t, _ in with_precision],
            [p for _, p in with_precision],
            marker="o",
            color="tab:red",
            label="precision",
        )
    ax.set_xlabel("score threshold")
    ax.set_ylabel("fraction")
    ax.set_ylim(-0.02, 1.05)
    ax.grid(True, alpha=0.3)
    ax.legend()
    ax.set_title("Precision / coverage vs. trend score threshold")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_topic_series_figure(
    values: Sequence[int], end_hour: int, topic: str, path: str
) -> None:
    """Aggregated unique-user series for one topic, for eyeballing a burst."""
    hours = list(range(end_hour - len(values) + 1, end_hour + 1))
    fig, ax = plt.subplots(figsize=(8, 3.5))
    ax.step(hours, values, where="mid", color="tab:blue")
    ax.fill_between(hours, values, step="mid", alpha=0.25, color="tab:blue")
    ax.set_xlabel("hour")
    ax.set_ylabel("unique users")
    ax.set_title(topic)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
