"""Static SVG charts for the experiment outputs.

The CSV files are the real output; these are conveniences. Files are
written without timestamps and with a fixed hash salt so reruns produce
identical bytes.
"""
from __future__ import annotations

import math


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "snoopbias"
    return plt


def _legend(ax, **kw):
    if ax.get_legend_handles_labels()[0]:
        ax.legend(**kw)


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None})
    _pyplot().close(fig)


def plot_noise_correlation(rows, path):
    """Analytic correlation, empirical correlation and expected maximum against m."""
    plt = _pyplot()
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.6))
    for rho_x in sorted({r.rho_x for r in rows}):
        sub = [r for r in rows if r.rho_x == rho_x]
        m = [r.m for r in sub]
        lab = f"rho_x = {rho_x:g}"
        axes[0].plot(m, [r.analytic_cor for r in sub], marker="o", label=lab)
        axes[1].errorbar(m, [r.empirical_cor for r in sub], yerr=[2 * r.cor_se for r in sub], marker="o", label=lab)
        axes[2].errorbar(m, [r.expected_max for r in sub], yerr=[2 * r.max_se for r in sub], marker="o", label=lab)
    for ax, title in zip(axes, ("approximate correlation", "simulated correlation", "expected maximum")):
        ax.set_xlabel("m")
        ax.set_title(title)
    _legend(axes[0], fontsize=8)
    fig.tight_layout()
    _save(fig, path)


def _grid_axes(plt, rows, ncols):
    rho2s = sorted({r.rho2 for r in rows})
    fig, axes = plt.subplots(ncols, len(rho2s), figsize=(4 * len(rho2s), 3.2 * ncols), squeeze=False)
    return fig, axes, rho2s


def plot_scaled_bias(rows, path):
    """Scaled bias against n/p, one row of panels per analyst and one column per rho2."""
    plt = _pyplot()
    analysts = list(dict.fromkeys(r.analyst for r in rows))
    fig, axes, rho2s = _grid_axes(plt, rows, len(analysts))
    for i, analyst in enumerate(analysts):
        for k, rho2 in enumerate(rho2s):
            ax = axes[i][k]
            for est in dict.fromkeys(r.estimator for r in rows):
                for p in sorted({r.p for r in rows}):
                    sub = sorted((r for r in rows if r.analyst == analyst and r.rho2 == rho2
                                  and r.estimator == est and r.p == p), key=lambda r: r.n)
                    if sub:
                        ax.plot([r.n / r.p for r in sub], [r.scaled_bias for r in sub], marker="o",
                                label=f"{est}, p={p}")
            ax.set_xscale("log")
            ax.set_title(f"{analyst}, rho2={rho2:g}", fontsize=9)
            ax.set_xlabel("n / p")
    _legend(axes[0][0], fontsize=6)
    fig.tight_layout()
    _save(fig, path)


def plot_bias_ratios(ratios, path):
    """Blinded-to-snooping bias ratio against n/p with a reference line at rho."""
    plt = _pyplot()
    fig, axes, rho2s = _grid_axes(plt, ratios, 1)
    for k, rho2 in enumerate(rho2s):
        ax = axes[0][k]
        for key in dict.fromkeys((r.estimator, r.analyst) for r in ratios):
            sub = sorted((r for r in ratios if (r.estimator, r.analyst) == key and r.rho2 == rho2
                          and r.defined), key=lambda r: r.n / r.p)
            if sub:
                ax.plot([r.n / r.p for r in sub], [r.ratio for r in sub], marker="o", linestyle="",
                        label=f"{key[0]}, {key[1]}")
        ax.axhline(math.sqrt(rho2), color="gray", linestyle="--")
        ax.axhline(rho2, color="gray", linestyle=":")
        ax.set_xscale("log")
        ax.set_title(f"rho2={rho2:g}", fontsize=9)
        ax.set_xlabel("n / p")
    _legend(axes[0][0], fontsize=6)
    fig.tight_layout()
    _save(fig, path)


def plot_rank_agreement(rows, path, learned=None):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(4.5, 3.4))
    for label, sub in (("known mu", rows), ("learned mu", learned or [])):
        if sub:
            ax.errorbar([r.n for r in sub], [r.p_disagree for r in sub], yerr=[2 * r.se for r in sub],
                        marker="o", label=label)
    ax.set_xscale("log")
    ax.set_xlabel("n")
    ax.set_ylabel("P(rank disagreement)")
    _legend(ax, fontsize=8)
    fig.tight_layout()
    _save(fig, path)
