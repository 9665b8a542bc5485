"""Figures for experiment reports. Imported lazily by the command line tool."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def plot_sweep(path, x, series: dict, xlabel: str, title: str,
               log_axes=(False, False)) -> Path:
    """One line per entry of ``series`` against the sweep values."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    for name, ys in series.items():
        ax.plot(x, ys, marker="o", label=name)
    if log_axes[0]:
        ax.set_xscale("log")
    if log_axes[1]:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    if len(series) > 1:
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return path
