"""Metric panels for sweep and report output (needs matplotlib)."""

import math
from collections import defaultdict
from pathlib import Path

from .pipeline import parse_config
from .stats import loess


def plot_report(records, path, x_key: str = "K", span: float = 0.75, group_key=None) -> Path:
    """One panel per (metric, input kind): per-seed points plus a LOESS line.

    ``records`` are report rows as dicts; summary rows (seed ``all`` or
    ``mean``) are skipped. ``K`` is drawn on a log2 axis.
    """
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        raise RuntimeError("plotting needs matplotlib: pip install 'codeprobe[plot]'") from None

    panels = defaultdict(lambda: defaultdict(list))
    for r in records:
        if str(r["seed"]) in ("all", "mean"):
            continue
        cfg = parse_config(r["config"])
        if x_key not in cfg:
            continue
        x = float(cfg[x_key])
        x = math.log2(x) if x_key == "K" else x
        group = cfg.get(group_key, "") if group_key else ""
        panels[(r["metric"], r["input_kind"])][group].append((x, float(r["value"])))
    if not panels:
        raise ValueError(f"no per-seed rows with config key {x_key!r} to plot")

    keys = sorted(panels)
    cols = min(3, len(keys))
    rows = math.ceil(len(keys) / cols)
    fig, axes = plt.subplots(rows, cols, figsize=(4 * cols, 3.2 * rows), squeeze=False)
    for ax, key in zip(axes.flat, keys):
        for group, pts in sorted(panels[key].items()):
            xs, ys = zip(*pts)
            dots = ax.scatter(xs, ys, s=10, alpha=0.6, label=group or None)
            if len(set(xs)) >= 3:
                cx, cy = zip(*sorted(loess(pts, span=span)))
                ax.plot(cx, cy, color=dots.get_facecolor()[0])
        ax.set_title(f"{key[0]} ({key[1]})", fontsize=9)
        ax.set_xlabel(f"log2 {x_key}" if x_key == "K" else x_key)
        if group_key:
            ax.legend(fontsize=7)
    for ax in list(axes.flat)[len(keys):]:
        ax.set_visible(False)
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
