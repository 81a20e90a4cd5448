"""Figure rendering for the CLI report paths.

Every report that writes delimited output can also render a matplotlib
figure next to it.  Rendering is file-only (Agg backend); nothing here
opens a window.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def save_error_curves(cells, path):
    """Mean relative error vs n, one line per method, log-log axes.

    cells: iterable of (method_label, n, mean_error, stderr).
    """
    by_method = {}
    for method, n, mean, stderr in cells:
        by_method.setdefault(method, []).append((n, mean, stderr))
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for method, pts in by_method.items():
        pts.sort()
        ns = [p[0] for p in pts]
        means = [100.0 * p[1] for p in pts]
        errs = [100.0 * p[2] for p in pts]
        ax.errorbar(ns, means, yerr=errs, marker="o", capsize=3, label=method)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("sample size n")
    ax.set_ylabel("mean relative error (%)")
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_spectrum_plot(ks, f_plain, f_rearranged, path):
    """Cumulative singular-value fractions of a coefficient matrix and of
    its rearrangement, side by side."""
    fig, axes = plt.subplots(1, 2, figsize=(9.0, 3.6), sharey=True)
    for ax, vals, title in (
        (axes[0], f_plain, "coefficient matrix"),
        (axes[1], f_rearranged, "rearranged matrix"),
    ):
        ax.bar(ks, vals, width=0.8, color="#4878a8")
        ax.set_xlabel("k")
        ax.set_title(title)
        ax.set_ylim(0.0, 1.05)
        ax.grid(True, axis="y", alpha=0.3)
    axes[0].set_ylabel("cumulative singular-value fraction")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_pvalue_plot(p_adjusted, alpha, path):
    """Adjusted p-values per channel on a -log10 scale with the rejection
    threshold marked."""
    p = np.asarray(p_adjusted, dtype=np.float64)
    # Cap the transform so exact zeros stay plottable.
    neglog = -np.log10(np.maximum(p, 1e-300))
    channels = np.arange(1, p.size + 1)
    fig, ax = plt.subplots(figsize=(7.5, 3.8))
    ax.stem(channels, neglog, basefmt=" ")
    ax.axhline(-np.log10(alpha), color="crimson", linestyle="--",
               label=f"alpha = {alpha:g}")
    ax.set_xlabel("channel")
    ax.set_ylabel("-log10 adjusted p-value")
    ax.legend()
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
