"""Figure rendering for CLI reports.

All figures go straight to files through the Agg backend. PNG metadata
is pinned so repeated runs produce byte-identical images.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_PNG_METADATA = {"Software": "ftfsim"}


def save_figure(fig, path):
    fig.savefig(path, dpi=150, bbox_inches="tight", metadata=_PNG_METADATA)
    plt.close(fig)


def plot_sweep(axis, values, ylabel: str, title: str = "", logy: bool = False,
               xlabel: str = "coupler flux (Phi0)"):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(axis, values, "o-", ms=3, lw=1)
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.grid(alpha=0.3)
    return fig


def plot_spectrum_levels(energies, labels, ambiguous, title: str = ""):
    fig, ax = plt.subplots(figsize=(6, 5))
    for i, (e, lab, amb) in enumerate(zip(energies, labels, ambiguous)):
        color = "C3" if amb else "C0"
        ax.hlines(e, 0.1, 0.9, color=color, lw=1.5)
        if i < 40:
            ax.annotate(lab, (0.92, e), fontsize=7, va="center")
    ax.set_xlim(0, 1.15)
    ax.set_xticks([])
    ax.set_ylabel("energy (GHz)")
    if title:
        ax.set_title(title)
    return fig


def plot_transition_branches(flux, branch_table: dict, strengths: dict | None = None,
                             title: str = ""):
    """Branch frequencies vs flux; line width follows drive weight."""
    fig, ax = plt.subplots(figsize=(6.5, 4.5))
    for k, (final, freqs) in enumerate(sorted(branch_table.items())):
        freqs = np.asarray(freqs, dtype=float)
        mask = np.isfinite(freqs)
        if strengths and final in strengths:
            w = np.asarray(strengths[final])
            ax.scatter(np.asarray(flux)[mask], freqs[mask],
                       s=4 + 60 * np.clip(w[mask], 0, 1), label=final, alpha=0.8)
        else:
            ax.plot(np.asarray(flux)[mask], freqs[mask], ".-", ms=3, lw=1, label=final)
    ax.set_xlabel("coupler flux (Phi0)")
    ax.set_ylabel("transition frequency (GHz)")
    ax.legend(fontsize=7, ncol=2)
    if title:
        ax.set_title(title)
    ax.grid(alpha=0.3)
    return fig


def plot_chevron(freqs, amps, pop_map, title: str = ""):
    fig, ax = plt.subplots(figsize=(6, 4.5))
    mesh = ax.pcolormesh(np.asarray(amps), np.asarray(freqs), np.asarray(pop_map),
                         shading="nearest", vmin=0.0, vmax=1.0, cmap="viridis")
    fig.colorbar(mesh, ax=ax, label="initial-state population")
    ax.set_xlabel("drive amplitude (GHz)")
    ax.set_ylabel("drive frequency (GHz)")
    if title:
        ax.set_title(title)
    return fig


def plot_parity(phases, parity, amplitudes: dict, title: str = ""):
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.6))
    axes[0].plot(phases, parity, "o-", ms=3, lw=0.7)
    axes[0].set_xlabel("collective phase (rad)")
    axes[0].set_ylabel("parity")
    axes[0].grid(alpha=0.3)
    orders = sorted(amplitudes)
    axes[1].bar(orders, [amplitudes[m] for m in orders], color="C0")
    axes[1].set_xlabel("harmonic order")
    axes[1].set_ylabel("amplitude")
    axes[1].grid(alpha=0.3, axis="y")
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    return fig


def plot_decays(lengths_or_times, series: dict, fit_curves: dict | None = None,
                xlabel: str = "sequence length", ylabel: str = "survival",
                title: str = "", logy: bool = False):
    fig, ax = plt.subplots(figsize=(6, 4))
    xs = np.asarray(lengths_or_times, dtype=float)
    for name, ys in series.items():
        ax.plot(xs, ys, "o", ms=4, label=name)
    if fit_curves:
        dense = np.linspace(xs.min(), xs.max(), 400)
        for name, fn in fit_curves.items():
            ax.plot(dense, fn(dense), "-", lw=1, label=f"{name} fit")
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    if title:
        ax.set_title(title)
    return fig
