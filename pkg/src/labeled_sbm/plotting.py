"""Figures written next to the CSV outputs.

The CSV files are the contract; these renderings are a convenience.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 10,
    "legend.fontsize": 7,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "figure.dpi": 150,
    "savefig.bbox": "tight",
}


def _new(figsize=(4.2, 3.6)):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=figsize)
    return fig, ax


def _save(fig, path) -> Path:
    path = Path(path)
    with plt.rc_context(STYLE):
        fig.savefig(path)
    plt.close(fig)
    return path


def threshold_curves(mean_degrees, num=721):
    """Known-parameter ellipse and EM diamond in the (x1, x2) plane for two labels."""
    c = np.asarray(mean_degrees, float)
    P, ctot = c / c.sum(), c.sum()
    t = np.linspace(0, 2 * np.pi, num)
    # sum dc_a^2 / P_a = 4 c with dc_a = 4 c_a (x_a - 1/2)
    r = np.sqrt(4 * ctot * P) / (4 * c)
    ellipse = np.stack([0.5 + r[0] * np.cos(t), 0.5 + r[1] * np.sin(t)], 1)
    s = 1 / (2 * np.sqrt(ctot)) / P
    diamond = np.array([[0.5 + s[0], 0.5], [0.5, 0.5 + s[1]], [0.5 - s[0], 0.5], [0.5, 0.5 - s[1]], [0.5 + s[0], 0.5]])
    return ellipse, diamond


def _thresholds(ax, mean_degrees):
    ellipse, diamond = threshold_curves(mean_degrees)
    ax.fill(diamond[:, 0], diamond[:, 1], color="0.85", zorder=0, label="EM undetectable")
    ax.plot(ellipse[:, 0], ellipse[:, 1], "k--", lw=0.9, label="known-parameter threshold")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1)
    ax.set_aspect("equal")
    ax.set_xlabel(r"$x_1$")
    ax.set_ylabel(r"$x_2$")


def plot_phase_sweep(result, path):
    fig, ax = _new()
    if len(result.config.mean_degrees) == 2:
        _thresholds(ax, result.config.mean_degrees)
    xs = np.array([p.params.strengths[:2] for p in result.points])
    med = np.array([p.median_overlap for p in result.points])
    sc = ax.scatter(xs[:, 0], xs[:, 1], c=med, cmap="viridis", vmin=0, vmax=1, s=24, edgecolors="k", lw=0.4)
    fig.colorbar(sc, ax=ax, label="median overlap")
    ax.legend(loc="best", frameon=False, fontsize=6)
    return _save(fig, path)


def plot_trajectories(bundle, path):
    fig, ax = _new()
    if bundle.planted.num_labels == 2:
        _thresholds(ax, bundle.planted.mean_degrees)
    for k, run in enumerate(bundle.runs):
        h = run.history
        ax.plot(h[:, 0], h[:, 1], "-o", ms=2, lw=0.8, color=f"C{k % 10}")
        ax.annotate("", xy=h[-1, :2], xytext=h[max(0, len(h) - 2), :2],
                    arrowprops=dict(arrowstyle="->", color=f"C{k % 10}"))
    ax.plot(*bundle.planted.strengths[:2], "ks", mfc="none", ms=6, label="planted")
    ax.plot([0, 1], [1, 0], ":", color="0.4", lw=0.7)
    ax.legend(loc="best", frameon=False, fontsize=6)
    return _save(fig, path)


def plot_spectrum(summary, path, title=None):
    fig, ax = _new((3.6, 3.6))
    z = summary.empirical_eigenvalues
    ax.plot(z.real, z.imag, ".", ms=1.5, color="C0")
    t = np.linspace(0, 2 * np.pi, 400)
    r = summary.band_radius_analytic
    ax.plot(r * np.cos(t), r * np.sin(t), "r-", lw=0.9)
    if summary.iso_analytic is not None:
        ax.axvline(summary.iso_analytic, color="0.5", ls=":", lw=0.8)
    ax.set_aspect("equal")
    ax.set_xlabel(r"Re $\lambda$")
    ax.set_ylabel(r"Im $\lambda$")
    if title:
        ax.set_title(title, fontsize=8)
    return _save(fig, path)


def plot_overlap_histogram(table, path, bins=20):
    fig, ax = _new((5.0, 3.2))
    edges = np.linspace(0, 1, bins + 1)
    width = 0.8
    for k, (v, ovs) in enumerate(zip(table.values, table.overlaps)):
        o = np.array([x for x in ovs if x is not None])
        counts, _ = np.histogram(o, edges)
        scale = width / max(counts.max(), 1)
        ax.barh(edges[:-1], counts * scale, height=np.diff(edges), left=k, align="edge", color="C0", alpha=0.8)
    ax.plot(range(len(table.values)), table.medians, "w--o", mec="k", ms=4, lw=0.8)
    ax.set_xticks(range(len(table.values)))
    ax.set_xticklabels([f"{v:g}" for v in table.values])
    ax.set_xlabel(f"$c_{table.label}$")
    ax.set_ylabel("overlap")
    ax.set_ylim(0, 1)
    return _save(fig, path)
