"""Figure rendering for experiment reports. Everything goes to files; no
interactive backends, fixed dpi, so reruns are byte-reproducible."""

from __future__ import annotations

import numpy as np

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

__all__ = [
    "save_power_figure",
    "save_image_figure",
    "save_error_figure",
]

_DPI = 110


def _finish(fig, path):
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def save_power_figure(path, coil_maps: np.ndarray, title: str):
    """Per-coil squared power maps on a shared log color scale."""
    c = coil_maps.shape[0]
    peak = float(coil_maps.max())
    floor = peak * 1e-6 if peak > 0 else 1.0
    shown = np.log10(np.maximum(coil_maps, floor)) if peak > 0 else coil_maps
    fig, axes = plt.subplots(1, c, figsize=(3.0 * c, 3.2), squeeze=False)
    for j in range(c):
        ax = axes[0, j]
        im = ax.imshow(shown[j], cmap="viridis", interpolation="nearest")
        ax.set_title(f"coil {j}", fontsize=9)
        ax.set_xticks([])
        ax.set_yticks([])
        fig.colorbar(im, ax=ax, fraction=0.046)
    fig.suptitle(title, fontsize=10)
    fig.tight_layout()
    _finish(fig, path)


def save_image_figure(path, images: dict, title: str):
    """Magnitude images side by side (label -> 2-d complex or real array)."""
    n = len(images)
    fig, axes = plt.subplots(1, n, figsize=(3.0 * n, 3.2), squeeze=False)
    for ax, (label, img) in zip(axes[0], images.items()):
        im = ax.imshow(np.abs(img), cmap="gray", interpolation="nearest")
        ax.set_title(label, fontsize=9)
        ax.set_xticks([])
        ax.set_yticks([])
        fig.colorbar(im, ax=ax, fraction=0.046)
    fig.suptitle(title, fontsize=10)
    fig.tight_layout()
    _finish(fig, path)


def save_error_figure(path, image_err: np.ndarray, kspace_err_mag: np.ndarray, title: str):
    """Image-domain error next to log-magnitude k-space error (coil 0)."""
    fig, axes = plt.subplots(1, 2, figsize=(6.4, 3.2))
    im0 = axes[0].imshow(image_err, cmap="magma", interpolation="nearest")
    axes[0].set_title("image error", fontsize=9)
    fig.colorbar(im0, ax=axes[0], fraction=0.046)
    peak = float(kspace_err_mag.max())
    floor = peak * 1e-6 if peak > 0 else 1.0
    shown = np.log10(np.maximum(kspace_err_mag, floor)) if peak > 0 else kspace_err_mag
    im1 = axes[1].imshow(shown, cmap="viridis", interpolation="nearest")
    axes[1].set_title("k-space error (log10)", fontsize=9)
    fig.colorbar(im1, ax=axes[1], fraction=0.046)
    for ax in axes:
        ax.set_xticks([])
        ax.set_yticks([])
    fig.suptitle(title, fontsize=10)
    fig.tight_layout()
    _finish(fig, path)
