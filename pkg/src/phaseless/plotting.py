"""Static figures rendered to files with the Agg backend."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path):
    path = Path(path)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_slice(img, path, title=None, truth=None):
    """Image of one reconstructed slice, optionally next to the truth."""
    half = img.slice.B_a
    extent = (-half, half, -half, half)
    panels = [("reconstruction", img.values)]
    if truth is not None:
        panels.append(("truth", truth))
        panels.append(("difference", img.values - truth))
    fig, axes = plt.subplots(1, len(panels), figsize=(4.2 * len(panels), 3.8), squeeze=False)
    for ax, (name, vals) in zip(axes[0], panels):
        im = ax.imshow(vals, origin="lower", extent=extent, cmap="viridis" if name != "difference" else "RdBu_r")
        ax.set_title(name)
        ax.set_xlabel("y1")
        ax.set_ylabel("y2")
        fig.colorbar(im, ax=ax, fraction=0.046)
    fig.suptitle(title or f"slice a = {img.slice.a:+.3f}")
    return _save(fig, path)


def plot_sinogram(sg, path, title=None):
    fig, ax = plt.subplots(figsize=(5.5, 4))
    extent = (sg.offsets[0], sg.offsets[-1], sg.alphas[0], sg.alphas[-1])
    im = ax.imshow(sg.values, origin="lower", aspect="auto", extent=extent, cmap="magma")
    ax.set_xlabel("s")
    ax.set_ylabel("alpha")
    ax.set_title(title or f"sinogram, a = {sg.slice.a:+.3f}")
    fig.colorbar(im, ax=ax)
    return _save(fig, path)


def plot_convergence(x, series: dict, path, xlabel, ylabel="relative L2 error", title=None, loglog=True):
    """Line plot of one or more error curves against ``x``."""
    fig, ax = plt.subplots(figsize=(5, 3.8))
    for label, y in series.items():
        ax.plot(x, y, "o-", label=label)
    if loglog:
        ax.set_xscale("log")
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(True, which="both", alpha=0.3)
    if len(series) > 1:
        ax.legend()
    if title:
        ax.set_title(title)
    return _save(fig, path)


def plot_trace(trace, path, title=None):
    """Regular kernel against time, with the individual series terms."""
    fig, ax = plt.subplots(figsize=(5.5, 3.8))
    ax.plot(trace.t_grid, trace.wtilde_values, "k-", lw=1.5, label="sum")
    if trace.term_values is not None and trace.n_terms > 1:
        for n, vals in enumerate(trace.term_values, 1):
            ax.plot(trace.t_grid, vals, "--", lw=1, label=f"w{n}")
        ax.legend()
    ax.axvline(trace.rho, color="0.6", lw=0.8)
    ax.set_xlabel("t")
    ax.set_ylabel("regular kernel")
    ax.set_title(title or f"rho = {trace.rho:.3f}, N = {trace.n_terms}")
    return _save(fig, path)


def plot_modulus(k, kf, path, limit=None, title=None):
    """``k f(k)`` against ``k`` for a few chords, with the fitted limits."""
    fig, ax = plt.subplots(figsize=(5, 3.8))
    kf = np.atleast_2d(kf)
    for i, row in enumerate(kf):
        line, = ax.plot(k, row, "o-")
        if limit is not None:
            ax.axhline(np.atleast_1d(limit)[i], color=line.get_color(), ls=":")
    ax.set_xscale("log")
    ax.set_xlabel("k")
    ax.set_ylabel("k |u_sc|")
    if title:
        ax.set_title(title)
    return _save(fig, path)
