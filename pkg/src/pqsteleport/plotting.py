"""Static figures of fidelity tables (PNG, non-interactive backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .results import ResultTable  # noqa: E402

__all__ = ["AXIS_LABELS", "STYLES", "plot_fidelity"]

AXIS_LABELS = {
    "eta": r"detector efficiency $\eta$",
    "time": r"total probing time $T\kappa$",
}

STYLES = {
    "direct": dict(color="tab:red", linestyle="--", marker="o", label="integrated signal"),
    "pqs": dict(color="tab:blue", linestyle="-", marker="s", label="past quantum state"),
}


def plot_fidelity(table: ResultTable, path: str | Path, title: str | None = None) -> Path:
    """Mean fidelity with one-stderr bars against the table's axis, one line per strategy."""
    if not len(table):
        raise ValueError("empty result table")
    axis = table.rows[0].axis
    fig, ax = plt.subplots(figsize=(5.0, 3.6), dpi=120)
    try:
        for strategy in table.strategies():
            x, y, err = table.series(strategy)
            style = STYLES.get(strategy, dict(label=strategy, marker="o"))
            ax.errorbar(x, y, yerr=err, capsize=3, markersize=4, linewidth=1.4, **style)
        ax.axhline(2.0 / 3.0, color="0.6", linewidth=0.8, linestyle=":", label="classical limit 2/3")
        ax.set_xlabel(AXIS_LABELS.get(axis, axis))
        ax.set_ylabel("mean teleportation fidelity")
        if title:
            ax.set_title(title)
        ax.grid(alpha=0.3)
        ax.legend(frameon=False, fontsize=8)
        fig.tight_layout()
        path = Path(path)
        # fixed metadata keeps the PNG bytes reproducible
        fig.savefig(path, metadata={"Software": None})
    finally:
        plt.close(fig)
    return path
