"""Figure output for the CLI.  Presentation only; every plotted number is also in a CSV."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

plt.rcParams.update({"font.size": 11, "axes.spines.top": False, "axes.spines.right": False,
                     "svg.hashsalt": "carbon-mfg"})

_META = {"Date": None}


def plot_xbar(path: str, times: np.ndarray, Xbar: np.ndarray, title: str = "") -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    for i, row in enumerate(Xbar):
        ax.plot(times, row, label=f"population {i + 1}")
    ax.set_xlabel("time")
    ax.set_ylabel("average cumulative production")
    if title:
        ax.set_title(title)
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, metadata=_META)
    plt.close(fig)


def plot_sweep(path: str, times: np.ndarray, families: list[tuple[str, np.ndarray]],
               param: str) -> None:
    """One panel per population, one curve per sweep value."""
    M = families[0][1].shape[0]
    fig, axes = plt.subplots(1, M, figsize=(4 * M, 3.6), sharey=True, squeeze=False)
    cmap = plt.get_cmap("viridis")
    for k, (label, Xbar) in enumerate(families):
        color = cmap(k / max(1, len(families) - 1))
        for i in range(M):
            axes[0, i].plot(times, Xbar[i], color=color, label=f"{param}={label}")
    for i in range(M):
        axes[0, i].set_title(f"population {i + 1}")
        axes[0, i].set_xlabel("time")
    axes[0, 0].set_ylabel("average cumulative production")
    axes[0, -1].legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, metadata=_META)
    plt.close(fig)
