"""Figure rendering for the CLI report path.

Kept out of the core modules: solvers and experiments emit arrays and rows,
and only the command-line layer turns them into PNG files next to the
delimited output.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def plot_residuals(residuals, path, bound: float | None = None):
    """Semi-log convergence curve of the power iteration residuals."""
    fig, ax = plt.subplots(figsize=(6, 4))
    r = np.asarray(residuals, dtype=float)
    ax.semilogy(np.arange(1, r.size + 1), r, marker=".", lw=1)
    if bound is not None and 0 < bound < 1 and r.size:
        ks = np.arange(1, r.size + 1)
        ax.semilogy(ks, r[0] * bound ** (ks - 1), "--", color="gray",
                    label=f"geometric bound {bound:g}")
        ax.legend()
    ax.set_xlabel("iteration")
    ax.set_ylabel("L1 residual")
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_report(report, path):
    """Metric-vs-perturbation curves, one line per method (mean over reps)."""
    fig, ax = plt.subplots(figsize=(6, 4))
    metric = report.rows[0].metric if report.rows else "value"
    for name in report.methods:
        series = report.values(name, metric)
        if not series:
            continue
        levels = sorted(series)
        means = [float(np.mean(series[l])) for l in levels]
        ax.plot(levels, means, marker="o", label=name)
    ax.set_xlabel("perturbation level")
    ax.set_ylabel(metric)
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
