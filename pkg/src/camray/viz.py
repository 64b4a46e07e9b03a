"""Figure rendering for CLI artifacts. Not contract-bearing.

Everything here draws through the Agg backend and writes PNG files;
numeric outputs live in the rasters and JSON the figures sit next to.
"""

from __future__ import annotations

import numpy as np


def _plt():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def latup_figure(raster: np.ndarray, valid: np.ndarray, path) -> None:
    """Latitude as an image, up vectors as a sparse quiver overlay."""
    plt = _plt()
    lat = np.where(valid, raster[..., 0], np.nan)
    h, w = lat.shape
    step = max(1, min(h, w) // 20)
    ys, xs = np.mgrid[step // 2:h:step, step // 2:w:step]
    uu = raster[ys, xs, 1]
    vv = raster[ys, xs, 2]
    ok = valid[ys, xs]
    fig, axes = plt.subplots(1, 2, figsize=(11, 4))
    im = axes[0].imshow(np.degrees(lat), cmap="twilight_shifted")
    fig.colorbar(im, ax=axes[0], label="latitude [deg]")
    axes[0].set_title("latitude")
    axes[1].imshow(np.where(valid, 0.15, 0.0), cmap="gray", vmin=0, vmax=1)
    # angles="xy" keeps v pointing down the image, matching pixel axes.
    axes[1].quiver(xs[ok], ys[ok], uu[ok], vv[ok], color="w", angles="xy")
    axes[1].set_title("up direction")
    for ax in axes:
        ax.set_xticks([])
        ax.set_yticks([])
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def plucker_figure(raster: np.ndarray, valid: np.ndarray, path) -> None:
    """Direction and moment channels mapped into RGB panels."""
    plt = _plt()
    d = raster[..., :3]
    m = raster[..., 3:]
    mmax = np.nanmax(np.abs(m)) or 1.0
    fig, axes = plt.subplots(1, 2, figsize=(11, 4))
    axes[0].imshow(np.where(valid[..., None], d * 0.5 + 0.5, 0.0))
    axes[0].set_title("ray direction")
    axes[1].imshow(np.where(valid[..., None], m / (2 * mmax) + 0.5, 0.0))
    axes[1].set_title("ray moment")
    for ax in axes:
        ax.set_xticks([])
        ax.set_yticks([])
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def report_figure(rows: list, path) -> None:
    """Deviation-vs-tolerance bars for an invariance report."""
    plt = _plt()
    names = [r["name"] for r in rows]
    devs = [max(r["deviation"], 1e-18) for r in rows]
    tols = [r["tolerance"] for r in rows]
    colors = ["tab:green" if r["passed"] else "tab:red" for r in rows]
    fig, ax = plt.subplots(figsize=(7, 0.8 * len(rows) + 1.6))
    ypos = np.arange(len(rows))
    ax.barh(ypos, devs, color=colors)
    for y, t in zip(ypos, tols):
        ax.plot([t, t], [y - 0.4, y + 0.4], "k--", lw=1)
    ax.set_yticks(ypos, names)
    ax.set_xscale("log")
    ax.set_xlabel("max deviation (dashed = tolerance)")
    ax.invert_yaxis()
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def score_figure(angles_deg: list, path) -> None:
    """Per-frame rotation magnitude relative to the first frame."""
    plt = _plt()
    fig, ax = plt.subplots(figsize=(7, 3.2))
    ax.plot(angles_deg, marker=".", lw=1)
    ax.set_xlabel("frame")
    ax.set_ylabel("rotation vs frame 0 [deg]")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
