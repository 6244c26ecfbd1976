"""Matplotlib rendering of decay-series figures (file output only)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .experiments import DecaySeries  # noqa: E402

_STYLE = {
    "M_mean": dict(color="k", marker="o", ms=3.5, lw=1.2, label=r"$\bar M(t)$"),
    "M_single": dict(color="tab:purple", marker="s", ms=3, lw=1.0,
                     label="single packet $M(t)$"),
    "I_s": dict(color="tab:red", marker="^", ms=3, lw=1.0, ls="--",
                label=r"$I_s(t)$ (anchored)"),
    "I_Lambda": dict(color="tab:blue", marker="v", ms=3, lw=1.0, ls="--",
                     label=r"$I_\Lambda(t)$ (anchored)"),
    "M_cl": dict(color="tab:green", marker="x", ms=4, lw=1.0, ls=":",
                 label="classical echo $M_{cl}(t)$"),
}


def _plot_series(ax, series: DecaySeries, names):
    for name in names:
        if name not in series.columns:
            continue
        y = series.anchored(name)
        ok = np.isfinite(y) & (y > 0)
        if name == "M_mean" and "M_stderr" in series.columns:
            ax.errorbar(series.t[ok], y[ok], yerr=series.columns["M_stderr"][ok],
                        capsize=2, **_STYLE[name])
        else:
            ax.plot(series.t[ok], y[ok], **_STYLE[name])
    ax.set_yscale("log")
    ax.set_xlabel("t")
    ax.grid(alpha=0.25)


def _reference_line(ax, series, rate, label, color, anchor_t=3):
    m = series.columns.get("M_mean")
    if m is None or anchor_t >= len(m) or not np.isfinite(m[anchor_t]):
        return
    t = series.t.astype(float)
    y = m[anchor_t] * np.exp(-rate * (t - anchor_t))
    lo = np.nanmin(m[m > 0]) / 30.0 if np.any(m > 0) else 1e-12
    ok = y > lo
    ax.plot(t[ok], y[ok], color=color, lw=0.9, alpha=0.8, ls="-.", label=label)


def render_figure(figure_id: int, series: DecaySeries, summary: dict,
                  path: str) -> str:
    """Render one decay figure with its reference slopes to a PNG file."""
    if figure_id == 4 and "M_single" in series.columns:
        fig, axes = plt.subplots(1, 2, figsize=(9.0, 3.6), sharey=True)
        _plot_series(axes[0], series, ["M_single"])
        _plot_series(axes[1], series, ["M_mean"])
        lam = summary.get("lambda")
        if lam:
            _reference_line(axes[0], series, 2 * lam, r"$e^{-2\lambda t}$", "gray")
            _reference_line(axes[1], series, lam, r"$e^{-\lambda t}$", "gray")
        axes[0].set_ylabel("fidelity")
        for ax in axes:
            ax.legend(fontsize=8, frameon=False)
        fig.suptitle(_title(series, figure_id), fontsize=10)
    else:
        fig, ax = plt.subplots(figsize=(5.4, 4.0))
        _plot_series(ax, series, ["M_mean", "I_s", "I_Lambda", "M_cl"])
        lam = summary.get("lambda")
        lam1 = summary.get("lambda1")
        if figure_id == 3 and lam:
            _reference_line(ax, series, 2 * lam, r"$e^{-2\lambda t}$", "gray")
            _reference_line(ax, series, lam, r"$e^{-\lambda t}$", "silver")
            tau = summary.get("tau_estimate")
            if tau:
                ax.axvline(tau, color="orange", lw=1.0, alpha=0.7)
                ax.annotate(r"$\bar\tau$", (tau, ax.get_ylim()[1] * 0.5),
                            color="orange")
        elif lam1:
            _reference_line(ax, series, lam1, r"$e^{-\lambda_1 t}$", "gray")
        ax.set_ylabel("fidelity")
        ax.legend(fontsize=8, frameon=False)
        ax.set_title(_title(series, figure_id), fontsize=10)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def _title(series: DecaySeries, figure_id: int) -> str:
    m = series.meta
    fam = m.get("family", "")
    if fam == "cat_sawtooth":
        desc = f"K={m.get('K')}, eta={m.get('eta')}"
    else:
        desc = f"sawtooth, i={m.get('poly_i')}"
    return (f"figure {figure_id}: {desc}, N={m.get('N')}, "
            f"sigma={m.get('sigma')}")
