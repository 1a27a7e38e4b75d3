"""SVG figures.  CSV files are the canonical output; these are conveniences."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# fixed ids and no timestamp so reruns give identical files
matplotlib.rcParams["svg.hashsalt"] = "probcub"
matplotlib.rcParams["svg.fonttype"] = "none"


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": "probcub"})
    plt.close(fig)


def calibration_plot(path, gammas, by_n, title=""):
    """Coverage against nominal level ``1 - gamma``, one line per n."""
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.plot([0, 1], [0, 1], color="0.6", lw=1, ls="--")
    for n, cov in by_n.items():
        ax.plot([1 - g for g in gammas], cov, marker="o", ms=3, label=f"n={n}")
    ax.set_xlabel("nominal coverage 1 - gamma")
    ax.set_ylabel("empirical coverage")
    ax.set_title(title)
    ax.legend(fontsize=7)
    _save(fig, path)


def loglog_plot(path, series, title="", xlabel="n", ylabel="WCE"):
    """``series`` maps a label to ``(x, y, slope)``."""
    fig, ax = plt.subplots(figsize=(5, 4))
    for label, (x, y, slope) in series.items():
        ax.loglog(x, y, marker="o", ms=3, label=f"{label} (slope {slope:.2f})")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.legend(fontsize=7)
    _save(fig, path)


def interval_plot(path, x, series, truth=None, title="", logx=True):
    """``series`` maps a label to ``(mean, lo, hi)`` arrays (lo/hi may be None)."""
    fig, ax = plt.subplots(figsize=(6, 4))
    k = len(series)
    for j, (label, (mean, lo, hi)) in enumerate(series.items()):
        xs = [xi * (1.0 + 0.04 * (j - (k - 1) / 2)) for xi in x]
        if lo is None:
            ax.plot(xs, mean, marker="o", ms=3, ls="none", label=label)
        else:
            yerr = [[m - l for m, l in zip(mean, lo)], [h - m for m, h in zip(mean, hi)]]
            ax.errorbar(xs, mean, yerr=yerr, marker="o", ms=3, ls="none", capsize=2, label=label)
    if truth is not None:
        ax.axhline(truth, color="k", lw=1, ls="--", label="reference")
    if logx:
        ax.set_xscale("log")
    ax.set_xlabel("n")
    ax.set_title(title)
    ax.legend(fontsize=7)
    _save(fig, path)


def bar_plot(path, labels, means, lo, hi, title=""):
    fig, ax = plt.subplots(figsize=(7, 4))
    xs = range(len(labels))
    ax.bar(xs, means, color="0.7")
    ax.errorbar(xs, means, yerr=[[m - l for m, l in zip(means, lo)], [h - m for m, h in zip(means, hi)]],
                fmt="none", ecolor="k", capsize=2)
    ax.set_xticks(list(xs))
    ax.set_xticklabels(labels, rotation=60, fontsize=7)
    ax.set_title(title)
    fig.tight_layout()
    _save(fig, path)
