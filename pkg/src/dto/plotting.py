"""Report figures. Every function writes one PNG and closes its figure."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib as mpl  # noqa: E402
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

mpl.rcParams["axes.labelsize"] = 12
mpl.rcParams["xtick.direction"] = "in"
mpl.rcParams["ytick.direction"] = "in"
mpl.rcParams["xtick.top"] = True
mpl.rcParams["ytick.right"] = True
mpl.rcParams["legend.frameon"] = False
mpl.rcParams["savefig.dpi"] = 120
mpl.rcParams["svg.hashsalt"] = "dto"

GROUP_COLORS = {"Baby": "tab:pink", "Kid": "tab:orange", "Teen": "tab:green", "Adult": "tab:blue"}


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


def identity_scatter(pred, gt, groups, path, quantity="depth", unit="m"):
    pred = np.asarray(pred, dtype=float)
    gt = np.asarray(gt, dtype=float)
    fig, ax = plt.subplots(figsize=(5, 5))
    for g, color in GROUP_COLORS.items():
        sel = np.array([x == g for x in groups], dtype=bool)
        if sel.any():
            ax.scatter(gt[sel], pred[sel], s=12, color=color, label=g, alpha=0.8)
    if gt.size:
        lo = float(min(gt.min(), pred.min()))
        hi = float(max(gt.max(), pred.max()))
        ax.plot([lo, hi], [lo, hi], color="k", lw=0.8, ls="--")
    ax.set_xlabel(f"ground-truth {quantity} [{unit}]")
    ax.set_ylabel(f"predicted {quantity} [{unit}]")
    ax.legend(loc="upper left")
    _finish(fig, path)


def pcdr_bars(report, path):
    labels = ["all", "Baby", "Kid", "Teen", "Adult"]
    vals = [report["pcdr"]] + [report["pcdr_by_group"].get(g) for g in labels[1:]]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    xs = np.arange(len(labels))
    ax.bar(xs, [100.0 * v if v is not None else 0.0 for v in vals],
           color=["0.4"] + [GROUP_COLORS[g] for g in labels[1:]])
    ax.set_xticks(xs, labels)
    ax.set_ylim(0, 100)
    ax.set_ylabel("PCDR [%]")
    _finish(fig, path)


def residual_histogram(mean_residuals, threshold, path):
    r = np.asarray(mean_residuals, dtype=float)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    if r.size:
        ax.hist(r, bins=min(30, max(5, r.size // 2)), color="tab:blue", alpha=0.8)
    ax.axvline(threshold, color="tab:red", ls="--", lw=1.0, label=f"threshold {threshold:g}")
    ax.set_xlabel("mean standardized height residual")
    ax.set_ylabel("scenes")
    ax.legend()
    _finish(fig, path)


def kkt_case_bars(counts: dict, path):
    labels = ["Interior", "ClampedLower", "ClampedUpper", "PlanarFixedScale"]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    xs = np.arange(len(labels))
    ax.bar(xs, [counts.get(k, 0) for k in labels], color="0.45")
    ax.set_xticks(xs, ["interior", "lower", "upper", "planar"])
    ax.set_ylabel("scenes")
    _finish(fig, path)
