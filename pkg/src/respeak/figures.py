"""Matplotlib figure rendering for the report paths.

Every command that emits delimited output (loss CSV, WER JSON/table) also
drops a rendered figure next to it: loss curves for training, spectrogram
triptychs for visual comparison, and a WER bar chart for evaluation.
"""

from __future__ import annotations

from typing import Dict, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .audio import PathLike
from .spectro import SpectroImage

FIGURE_DPI = 110


def save_loss_curves(steps: Sequence[int], losses: Dict[str, Sequence[float]], out_png: PathLike) -> None:
    """One panel, all loss series on a log-y axis."""
    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    for name, series in losses.items():
        ax.plot(steps, series, label=name, linewidth=1.2)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.grid(True, alpha=0.3)
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(out_png, dpi=FIGURE_DPI)
    plt.close(fig)


def save_triptych(
    images: Sequence[SpectroImage],
    titles: Sequence[str],
    out_png: PathLike,
    sample_rate: int = 16000,
) -> None:
    """Side-by-side spectrogram images (input / generated / target), low
    frequencies at the bottom."""
    fig, axes = plt.subplots(1, len(images), figsize=(3.2 * len(images), 3.6))
    if len(images) == 1:
        axes = [axes]
    for ax, img, title in zip(axes, images, titles):
        ax.imshow(img.pixels, origin="lower", aspect="auto", cmap="magma", vmin=-1.0, vmax=1.0)
        ax.set_title(title, fontsize=9)
        ax.set_xlabel("frame")
        ax.set_ylabel("frequency row")
    fig.tight_layout()
    fig.savefig(out_png, dpi=FIGURE_DPI)
    plt.close(fig)


def save_wer_bars(conditions: Sequence[str], wer_values: Sequence[float], out_png: PathLike) -> None:
    fig, ax = plt.subplots(figsize=(4.8, 3.4))
    positions = np.arange(len(conditions))
    ax.bar(positions, wer_values, color=["#4c72b0", "#dd8452", "#c44e52"][: len(conditions)])
    ax.set_xticks(positions)
    ax.set_xticklabels(conditions)
    ax.set_ylabel("WER (%)")
    for pos, value in zip(positions, wer_values):
        ax.text(pos, value, f"{value:.1f}", ha="center", va="bottom", fontsize=9)
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_png, dpi=FIGURE_DPI)
    plt.close(fig)
