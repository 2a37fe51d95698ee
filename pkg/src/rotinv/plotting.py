"""Report figures rendered to PNG files with the non-interactive Agg backend.

PNG metadata is pinned so that the same report always produces the same bytes.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .shapes import KINDS  # noqa: E402

_STYLE = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.dpi": 100,
    "savefig.dpi": 100,
}
_METADATA = {"Software": None}


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, format="png", metadata=_METADATA)
    plt.close(fig)
    return path


def accuracy_bars(results: dict, path: str | Path) -> Path:
    """Grouped bars: one group per condition, one bar per pipeline.

    `results` maps pipeline name -> list of reports (each with condition and accuracy).
    """
    conditions = []
    for reports in results.values():
        for rep in reports:
            if rep.condition not in conditions:
                conditions.append(rep.condition)
    x = np.arange(len(conditions))
    width = 0.8 / max(len(results), 1)
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(5, 3))
        for i, (name, reports) in enumerate(results.items()):
            acc = {rep.condition: rep.accuracy for rep in reports}
            pos = [j for j, c in enumerate(conditions) if c in acc]
            vals = [100 * acc[conditions[j]] for j in pos]
            bars = ax.bar(x[pos] + (i - (len(results) - 1) / 2) * width, vals, width, label=name)
            ax.bar_label(bars, fmt="%.0f", fontsize=7)
        ax.set_xticks(x, conditions)
        ax.set_ylim(0, 105)
        ax.set_ylabel("test accuracy (%)")
        ax.legend(frameon=False, loc="lower left")
        return _save(fig, path)


def confusion_heatmap(confusion, path: str | Path, labels=KINDS, title: str = "") -> Path:
    conf = np.asarray(confusion)
    labels = list(labels)[: conf.shape[0]]
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(4, 3.5))
        ax.imshow(conf, cmap="Blues", vmin=0)
        for (i, j), v in np.ndenumerate(conf):
            color = "white" if v > conf.max() / 2 else "black"
            ax.text(j, i, str(v), ha="center", va="center", color=color, fontsize=8)
        ax.set_xticks(range(len(labels)), labels, rotation=45, ha="right")
        ax.set_yticks(range(len(labels)), labels)
        ax.set_xlabel("predicted")
        ax.set_ylabel("true")
        if title:
            ax.set_title(title)
        return _save(fig, path)


def ablation_bars(table, path: str | Path) -> Path:
    labels = [label for label, _ in table.rows]
    acc = [100 * rep.accuracy for _, rep in table.rows]
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(max(4, 0.8 * len(labels) + 1), 3))
        bars = ax.bar(range(len(labels)), acc, color="tab:gray")
        ax.bar_label(bars, fmt="%.0f", fontsize=7)
        ax.set_xticks(range(len(labels)), labels, rotation=30, ha="right")
        ax.set_ylim(0, 105)
        ax.set_ylabel("test accuracy (%)")
        ax.set_title(f"{table.suite} ({table.condition})")
        return _save(fig, path)


def training_curves(histories: dict, path: str | Path) -> Path:
    """Loss per epoch for each named run."""
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(5, 3))
        for name, history in histories.items():
            ax.plot([h.epoch + 1 for h in history], [h.loss for h in history], marker="o",
                    markersize=3, label=name)
        ax.set_xlabel("epoch")
        ax.set_ylabel("training loss")
        ax.legend(frameon=False)
        return _save(fig, path)
