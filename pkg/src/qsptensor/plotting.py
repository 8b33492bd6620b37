"""Static bar charts of outcome probability tables."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# deterministic SVG output
matplotlib.rcParams["svg.hashsalt"] = "qsptensor"
matplotlib.rcParams["svg.fonttype"] = "none"


def plot_outcome_table(table: Mapping[tuple[str, ...], float], path: str | Path, title: str = "") -> Path:
    """Write one bar per outcome string; bars read left to right in table order."""
    path = Path(path)
    labels = [" ".join(k) if k else "()" for k in table]
    probs = [max(0.0, min(1.0, v)) for v in table.values()]

    width = max(4.0, 0.45 * len(labels) + 1.5)
    fig, ax = plt.subplots(figsize=(width, 3.2))
    ax.bar(range(len(probs)), probs, color="0.35", width=0.7)
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=60 if len(labels) > 8 else 0, ha="right" if len(labels) > 8 else "center", fontsize=8)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("probability")
    ax.set_xlabel("outcome string")
    for side in ("top", "right"):
        ax.spines[side].set_visible(False)
    if title:
        ax.set_title(title, fontsize=9)
    fig.tight_layout()
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format=path.suffix.lstrip(".") or "svg", metadata={"Date": None} if path.suffix == ".svg" else None)
    plt.close(fig)
    return path
