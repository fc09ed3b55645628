"""Figures written next to the CSV output."""
from __future__ import annotations

import io
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .harness import atomic_write  # noqa: E402


def regret_curve_svg(rows: list[dict], slope: float | None = None) -> str:
    t = [r["horizon"] for r in rows]
    g = [r["mean_regret"] for r in rows]
    se = [r.get("se_regret", 0.0) for r in rows]
    # fixed id salt and no date keep the file byte-stable across runs
    plt.rcParams["svg.hashsalt"] = "mnlkb"
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.errorbar(t, g, yerr=[3 * s for s in se], marker="o", capsize=3)
    ax.set_xlabel("horizon T")
    ax.set_ylabel("mean regret")
    if slope is not None and slope == slope:
        ax.set_title(f"log-log slope {slope:.3f}")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    return buf.getvalue()


def write_regret_curve(rows: list[dict], path: Path, slope: float | None = None) -> None:
    atomic_write(Path(path), regret_curve_svg(rows, slope))
