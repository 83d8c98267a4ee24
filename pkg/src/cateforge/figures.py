"""Figure rendering for experiment reports.

The evaluation module emits plot-ready records; this module turns them into
PNG files next to the delimited output: per-learner boxplot panels of PEHE
across settings and training sizes, and a median-trend line chart.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .evaluation import ExperimentResult, median_pehe

_SETTING_ORDER = ("perfect", "entangled", "external", "none")
_SETTING_COLORS = {
    "perfect": "#2a7f3f",
    "entangled": "#c98a12",
    "external": "#7a5fb5",
    "none": "#b03a3a",
}


def _group(records: Sequence[ExperimentResult], learner: str):
    sizes = sorted({r.train_size for r in records if r.learner == learner})
    settings = [
        s
        for s in _SETTING_ORDER
        if any(r.learner == learner and r.setting == s for r in records)
    ]
    return sizes, settings


def _png_metadata(config_digest: str) -> dict:
    return {"config_digest": config_digest} if config_digest else {}


def render_boxplots(
    records: Sequence[ExperimentResult], out_dir, config_digest: str = ""
) -> list[Path]:
    """One panel per learner: PEHE boxplots per setting, grouped by size."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for learner in sorted({r.learner for r in records}):
        sizes, settings = _group(records, learner)
        if not sizes or not settings:
            continue
        fig, ax = plt.subplots(figsize=(1.8 + 1.6 * len(sizes), 4.0))
        width = 0.8 / max(len(settings), 1)
        for j, setting in enumerate(settings):
            positions, data = [], []
            for i, size in enumerate(sizes):
                values = [
                    r.pehe
                    for r in records
                    if r.learner == learner and r.setting == setting and r.train_size == size
                ]
                if values:
                    positions.append(i + (j - (len(settings) - 1) / 2) * width)
                    data.append(values)
            if not data:
                continue
            box = ax.boxplot(
                data,
                positions=positions,
                widths=width * 0.85,
                patch_artist=True,
                medianprops={"color": "black"},
            )
            for patch in box["boxes"]:
                patch.set_facecolor(_SETTING_COLORS.get(setting, "#888888"))
                patch.set_alpha(0.75)
        ax.axhline(1.0, color="red", linestyle="--", linewidth=0.8)
        ax.set_xticks(range(len(sizes)))
        ax.set_xticklabels([str(s) for s in sizes])
        ax.set_xlabel("training set size")
        ax.set_ylabel("PEHE (test set)")
        ax.set_title(f"{learner}-learner")
        handles = [
            plt.Rectangle((0, 0), 1, 1, facecolor=_SETTING_COLORS.get(s, "#888"), alpha=0.75)
            for s in settings
        ]
        ax.legend(handles, settings, loc="best", fontsize=8)
        fig.tight_layout()
        path = out_dir / f"pehe_boxplots_{learner}.png"
        fig.savefig(path, dpi=150, metadata=_png_metadata(config_digest))
        plt.close(fig)
        written.append(path)
    return written


def render_median_trends(
    records: Sequence[ExperimentResult], out_dir, config_digest: str = ""
) -> Path | None:
    """Median PEHE vs training size, one subplot per learner."""
    learners = sorted({r.learner for r in records})
    if not learners:
        return None
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    fig, axes = plt.subplots(
        1, len(learners), figsize=(3.2 * len(learners), 3.4), squeeze=False
    )
    for ax, learner in zip(axes[0], learners):
        sizes, settings = _group(records, learner)
        for setting in settings:
            xs = [
                n
                for n in sizes
                if any(
                    r.learner == learner and r.setting == setting and r.train_size == n
                    for r in records
                )
            ]
            ys = [median_pehe(records, learner, setting, n) for n in xs]
            ax.plot(xs, ys, marker="o", label=setting, color=_SETTING_COLORS.get(setting))
        ax.axhline(1.0, color="red", linestyle="--", linewidth=0.8)
        ax.set_xscale("log")
        ax.set_xticks(sizes)
        ax.set_xticklabels([str(s) for s in sizes])
        ax.set_xlabel("training set size")
        ax.set_ylabel("median PEHE")
        ax.set_title(f"{learner}-learner")
        ax.legend(fontsize=8)
    fig.tight_layout()
    path = out_dir / "pehe_medians.png"
    fig.savefig(path, dpi=150, metadata=_png_metadata(config_digest))
    plt.close(fig)
    return path


def render_all(
    records: Sequence[ExperimentResult], out_dir, config_digest: str = ""
) -> list[Path]:
    written = render_boxplots(records, out_dir, config_digest)
    trend = render_median_trends(records, out_dir, config_digest)
    if trend is not None:
        written.append(trend)
    return written
