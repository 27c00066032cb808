"""Turn run CSVs into averaged curves, summaries and SVG charts."""

from __future__ import annotations

import csv
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .harness import average_runs, instances_to_reach, read_curve_csv  # noqa: E402


def collect_curves(paths):
    """Merge several ``curve.csv`` files into ``{strategy: [run curves]}``."""
    merged = defaultdict(list)
    for path in paths:
        for strategy, runs in read_curve_csv(path).items():
            merged[strategy].extend(runs[k] for k in sorted(runs))
    return dict(merged)


def summarize(curves_by_strategy, target):
    rows = []
    for strategy, runs in curves_by_strategy.items():
        avg = average_runs(runs)
        rows.append({
            "strategy": strategy,
            "runs": len(runs),
            "instances_to_target": instances_to_reach(avg, target),
            "final_instances": avg[-1].effective_instances,
            "final_accuracy": avg[-1].test_accuracy,
        })
    return rows


def plot_curves(curves_by_strategy, out_path, target=None, title=None):
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for strategy in sorted(curves_by_strategy):
        avg = average_runs(curves_by_strategy[strategy])
        ax.plot([p.effective_instances for p in avg], [p.test_accuracy for p in avg],
                label=f"{strategy} (n={len(curves_by_strategy[strategy])})", linewidth=1.4)
    if target is not None:
        ax.axhline(target, color="0.5", linestyle=":", linewidth=1)
    ax.set_xlabel("effective training instances")
    ax.set_ylabel("test accuracy")
    if title:
        ax.set_title(title)
    ax.legend(loc="lower right", frameon=False)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, format="svg", metadata={"Date": None})
    plt.close(fig)


def read_filterlog(path):
    counts = defaultdict(dict)
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            counts[int(row["epoch"])][row["bucket"]] = int(row["filtered_count"])
    return dict(counts)


def plot_hardness(filterlog_path, out_path):
    """Stacked bars of filtered counts per epoch, one colour per rank bucket."""
    counts = read_filterlog(filterlog_path)
    epochs = sorted(counts)
    buckets = list(counts[epochs[0]]) if epochs else []
    fig, ax = plt.subplots(figsize=(6.4, 3.6))
    bottom = [0] * len(epochs)
    for bucket in buckets:
        heights = [counts[e].get(bucket, 0) for e in epochs]
        ax.bar(epochs, heights, bottom=bottom, label=f"rank {bucket}")
        bottom = [b + h for b, h in zip(bottom, heights)]
    ax.set_xlabel("epoch")
    ax.set_ylabel("filtered instances")
    ax.legend(frameon=False, fontsize="small")
    fig.tight_layout()
    fig.savefig(out_path, format="svg", metadata={"Date": None})
    plt.close(fig)


def write_summary(rows, path):
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
