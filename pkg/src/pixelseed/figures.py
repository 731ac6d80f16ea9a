"""Report figures rendered to files next to the delimited metric output."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import numpy as np
from matplotlib import pyplot as plt


def save_iou_bars(table: dict, path, title: str) -> None:
    names = [str(k) for k in table]
    values = [table[k] for k in table]
    fig, ax = plt.subplots(figsize=(max(4, 0.5 * len(names) + 1), 3.2))
    ax.bar(range(len(names)), values, color="#4878cf")
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=60, ha="right", fontsize=8)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("IoU")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def save_pr_bars(per_class: dict[str, tuple[float, float]], path, title: str) -> None:
    names = list(per_class)
    prec = [0.0 if np.isnan(per_class[n][0]) else per_class[n][0] for n in names]
    rec = [per_class[n][1] for n in names]
    x = np.arange(len(names))
    fig, ax = plt.subplots(figsize=(max(4, 0.6 * len(names) + 1), 3.2))
    ax.bar(x - 0.2, prec, width=0.4, label="precision", color="#4878cf")
    ax.bar(x + 0.2, rec, width=0.4, label="recall", color="#d65f5f")
    ax.set_xticks(x)
    ax.set_xticklabels(names, rotation=60, ha="right", fontsize=8)
    ax.set_ylim(0, 1.05)
    ax.legend(fontsize=8)
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def save_iteration_trend(reports, path) -> None:
    rounds = [r.round for r in reports]
    fig, ax = plt.subplots(figsize=(5, 3.2))
    for attr, label in (
        ("miou_class", "mIoU class"),
        ("miou_category", "mIoU category"),
        ("precision", "macro precision"),
        ("recall", "macro recall"),
    ):
        vals = [getattr(r, attr) for r in reports]
        if all(np.isnan(v) for v in vals):
            continue
        ax.plot(rounds, vals, marker="o", label=label)
    ax.plot(rounds, [r.ignore_fraction for r in reports], marker="s", linestyle="--", label="ignore fraction")
    ax.set_xlabel("round")
    ax.set_xticks(rounds)
    ax.set_ylim(0, 1.05)
    ax.legend(fontsize=8)
    ax.set_title("iteration trend")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
