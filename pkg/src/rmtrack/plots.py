"""Report figures. Rendered with the Agg backend and without timestamped
metadata so repeated runs produce identical files."""
from __future__ import annotations

from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

PNG_META = {"Software": None}


def _save(fig, path):
    fig.savefig(path, dpi=100, metadata=PNG_META)
    plt.close(fig)


def plot_tracks(path, gt_rows, pred_rows, image_w, image_h, title=""):
    """Box-centre trajectories: ground truth in grey, predictions coloured by assoc id."""
    fig, ax = plt.subplots(figsize=(8, 4.5))
    for rows, style in ((gt_rows, "gt"), (pred_rows, "pred")):
        paths = defaultdict(list)
        for r in rows:
            cx, cy = r.bbox.center
            paths[(r.assoc_id, r.track_id)].append((r.frame, cx, cy))
        for (aid, _), pts in sorted(paths.items()):
            pts.sort()
            xs = [p[1] for p in pts]
            ys = [p[2] for p in pts]
            if style == "gt":
                ax.plot(xs, ys, color="0.8", lw=3, zorder=1)
            else:
                color = "k" if aid < 0 else plt.cm.tab20(aid % 20)
                ax.plot(xs, ys, color=color, lw=1, zorder=2)
    ax.set_xlim(0, image_w)
    ax.set_ylim(image_h, 0)
    ax.set_aspect("equal")
    ax.set_xlabel("x (px)")
    ax.set_ylabel("y (px)")
    ax.set_title(title or "track centres (grey: ground truth)")
    fig.tight_layout()
    _save(fig, path)


def plot_metrics(path, reports, labels=None):
    """Grouped bars of HOTA/MOTA/IDF1 at object and R-M instance level."""
    labels = labels or [r.scenario for r in reports]
    keys = ("hota", "mota", "idf1")
    fig, axes = plt.subplots(1, 2, figsize=(10, 4), sharey=True)
    width = 0.8 / max(1, len(reports))
    for ax, level, name in zip(axes, ("tracking", "rm_tracking"), ("objects", "R-M instances")):
        for k, (rep, lab) in enumerate(zip(reports, labels)):
            vals = [getattr(rep, level)[m] for m in keys]
            ax.bar([i + k * width for i in range(len(keys))], vals, width, label=lab)
        ax.set_xticks([i + 0.4 - width / 2 for i in range(len(keys))])
        ax.set_xticklabels([m.upper() for m in keys])
        ax.set_title(name)
        ax.axhline(0, color="k", lw=0.5)
    axes[0].set_ylabel("score")
    axes[1].legend(fontsize=8, loc="lower right")
    fig.tight_layout()
    _save(fig, path)


def plot_hota_alpha(path, curves):
    """HOTA against the localisation threshold; curves: label -> (alphas, values)."""
    fig, ax = plt.subplots(figsize=(5, 4))
    for lab, (alphas, vals) in curves.items():
        ax.plot(alphas, vals, marker="o", ms=3, label=lab)
    ax.set_xlabel("alpha")
    ax.set_ylabel("HOTA")
    ax.set_ylim(0, 1.02)
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, path)
