"""Visual outputs: overlay difference images and correlation scatter grids."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .bench import DOF_NAMES, PoseErrorRecord
from .errors import ValidationError


def overlay_diff(a: np.ndarray, b: np.ndarray, max_level: int | None = None) -> np.ndarray:
    """Per-pixel comparison image: red where a > b, cyan where a < b.

    Equal pixels render as the grayscale of ``a``; the tint strength is
    proportional to |a - b|.  Returns an (h, w, 3) uint8 RGB image.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValidationError(f"image sizes differ: {a.shape} vs {b.shape}")
    if max_level is None:
        max_level = max(int(a.max(initial=1)), int(b.max(initial=1)), 1)
    na = a.astype(np.float64) / max_level
    nb = b.astype(np.float64) / max_level
    rgb = np.stack([na, nb, nb], axis=-1)
    return np.clip(np.round(rgb * 255.0), 0, 255).astype(np.uint8)


def scatter_grid_svg(records: list[PoseErrorRecord], path: str | Path) -> None:
    """6x6 grid: each pose error against each pose value.

    Horizontal dashed lines mark the mean error, dotted lines the mean plus
    or minus one standard deviation.
    """
    detected = [r for r in records if r.detected]
    if not detected:
        raise ValidationError("no detected records to plot")
    values = np.array([[r.truth.x, r.truth.y, r.truth.z, r.truth.roll, r.truth.pitch, r.truth.yaw] for r in detected])
    errors = np.array([r.errors for r in detected])
    units = ("mm", "mm", "mm", "deg", "deg", "deg")

    fig, axes = plt.subplots(6, 6, figsize=(16, 14), sharex="col")
    for i in range(6):  # error row
        mean = errors[:, i].mean()
        std = errors[:, i].std()
        for j in range(6):  # value column
            ax = axes[i, j]
            ax.plot(values[:, j], errors[:, i], ".", markersize=2, alpha=0.5, color="tab:blue")
            ax.axhline(mean, linestyle="--", linewidth=0.8, color="black")
            ax.axhline(mean + std, linestyle=":", linewidth=0.8, color="black")
            ax.axhline(mean - std, linestyle=":", linewidth=0.8, color="black")
            ax.tick_params(labelsize=6)
            if i == 5:
                ax.set_xlabel(f"{DOF_NAMES[j]} [{units[j]}]", fontsize=8)
            if j == 0:
                ax.set_ylabel(f"err {DOF_NAMES[i]} [{units[i]}]", fontsize=8)
    fig.suptitle("pose errors vs pose values (36 combinations)", fontsize=11)
    fig.tight_layout(rect=(0, 0, 1, 0.98))
    fig.savefig(path, format="svg")
    plt.close(fig)
