"""Figure rendering for experiment reports.

All figures are written straight to files; the Agg backend keeps this
usable on headless machines.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _centers(edges: np.ndarray) -> np.ndarray:
    return 0.5 * (edges[:-1] + edges[1:])


def plot_z_distribution(
    edges: np.ndarray,
    theoretical_density: np.ndarray,
    empirical_counts: np.ndarray | None,
    title: str,
    out_path: str | Path,
) -> None:
    """Histogram of the fidelity-loss parameter z with the theory curve."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    width = edges[1] - edges[0]
    if empirical_counts is not None:
        total = empirical_counts.sum()
        density = empirical_counts / (total * width) if total else empirical_counts
        ax.bar(
            _centers(edges), density, width=width, color="tab:blue", alpha=0.45,
            edgecolor="tab:blue", label="numerical experiments",
        )
    ax.plot(_centers(edges), theoretical_density, "-", color="tab:red", lw=2,
            label="information-matrix theory")
    ax.set_xlabel(r"$z = -\log_{10}(1 - F)$")
    ax.set_ylabel("probability density")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def plot_z_overview(
    curves: list[tuple[str, np.ndarray, np.ndarray]], out_path: str | Path
) -> None:
    """Theory z distributions of every (variant, eta) pair on shared axes."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for label, edges, density in curves:
        ax.plot(_centers(edges), density, lw=1.8, label=label)
    ax.set_xlabel(r"$z = -\log_{10}(1 - F)$")
    ax.set_ylabel("probability density")
    ax.set_title("theoretical fidelity-loss distributions")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
