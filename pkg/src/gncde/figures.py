"""Figure rendering for the CLI report paths.

Every renderer takes plain data and writes one PNG next to the CSV the
numbers came from.  The CSVs stay the canonical record; these plots are
the quick-look companions.  The Agg backend keeps rendering headless and
deterministic.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_DPI = 120


def render_curves(report, out_path):
    """Training loss and held-out metrics against iteration."""
    fig, (left, right) = plt.subplots(1, 2, figsize=(10, 4))
    if report.train_losses:
        left.semilogy(np.arange(1, len(report.train_losses) + 1),
                      report.train_losses, color="tab:blue", lw=1.0)
    left.set_xlabel("iteration")
    left.set_ylabel("training loss")
    left.set_title("objective")
    left.grid(True, alpha=0.3)

    its = [rec["iteration"] for rec in report.evals]
    for key, color in (("interp_l1", "tab:green"),
                       ("extrap_l1", "tab:red"),
                       ("sum_l1", "tab:purple")):
        right.plot(its, [rec[key] for rec in report.evals], color=color,
                   lw=1.2, marker=".", ms=4, label=key)
    right.set_xlabel("iteration")
    right.set_ylabel("mean absolute deviation")
    right.set_title("held-out error")
    right.grid(True, alpha=0.3)
    right.legend(loc="upper right", fontsize=8)
    if report.diverged:
        right.annotate("diverged", xy=(0.5, 0.5),
                       xycoords="axes fraction", ha="center",
                       color="tab:red", fontsize=14)
    fig.tight_layout()
    fig.savefig(out_path, dpi=_DPI)
    plt.close(fig)


def render_surface(times, nodes, true_grid, pred_grid, out_path):
    """Side-by-side (time x node) value maps for truth and prediction."""
    true_grid = np.asarray(true_grid, dtype=float)
    pred_grid = np.asarray(pred_grid, dtype=float)
    lo = min(true_grid.min(), pred_grid.min())
    hi = max(true_grid.max(), pred_grid.max())
    fig, axes = plt.subplots(1, 2, figsize=(10, 4), sharey=True)
    for ax, grid, title in ((axes[0], true_grid, "observed dynamics"),
                            (axes[1], pred_grid, "model prediction")):
        img = ax.imshow(grid.T, aspect="auto", origin="lower",
                        interpolation="nearest", vmin=lo, vmax=hi,
                        cmap="viridis",
                        extent=(float(times[0]), float(times[-1]),
                                -0.5, len(nodes) - 0.5))
        ax.set_xlabel("time")
        ax.set_title(title)
    axes[0].set_ylabel("node (display order)")
    fig.colorbar(img, ax=axes, shrink=0.85, label="state value")
    fig.savefig(out_path, dpi=_DPI)
    plt.close(fig)


def render_grid_summary(rows, out_path):
    """Mean sum_l1 with a std whisker per aggregated grid cell."""
    labels = ["%s/%s\n%s" % (row["topology"], row["dynamics"], row["variant"])
              for row in rows]
    means = [float(row["mean_sum_l1"]) if row["mean_sum_l1"] != "" else np.nan
             for row in rows]
    stds = [float(row["std_sum_l1"]) if row["std_sum_l1"] != "" else 0.0
            for row in rows]
    x = np.arange(len(rows))
    fig, ax = plt.subplots(figsize=(max(6, 1.2 * len(rows)), 4))
    ax.bar(x, means, yerr=stds, capsize=4, color="tab:blue", alpha=0.8)
    ax.set_xticks(x)
    ax.set_xticklabels(labels, fontsize=8)
    ax.set_ylabel("sum of interp and extrap L1 (mean over seeds)")
    ax.set_title("grid summary")
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, dpi=_DPI)
    plt.close(fig)
