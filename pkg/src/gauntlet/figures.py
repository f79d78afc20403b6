"""Report figures: a summary PNG rendered next to each report's CSV."""

from __future__ import annotations

from pathlib import Path
from typing import List

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def render_report_figures(
    experiment: str,
    columns: List[str],
    rows: List[dict],
    aggregates: dict,
    out_dir: Path,
) -> List[Path]:
    """Render the per-trial metric distribution and the success split."""
    metrics = [float(r["metric"]) for r in rows]
    successes = sum(int(r["success"]) for r in rows)
    failures = len(rows) - successes

    fig, (ax_hist, ax_bar) = plt.subplots(1, 2, figsize=(9, 3.4), constrained_layout=True)

    ax_hist.hist(metrics, bins=min(32, max(5, len(set(metrics)))), color="#3b6ea5", edgecolor="white")
    ax_hist.set_xlabel("per-trial metric")
    ax_hist.set_ylabel("trials")
    ax_hist.set_title(f"{experiment}: metric distribution")
    ax_hist.grid(True, alpha=0.3)

    ax_bar.bar(["success", "failure"], [successes, failures], color=["#2e8b57", "#b33939"])
    ax_bar.set_ylabel("trials")
    ax_bar.set_title(f"success rate {aggregates['success_rate']:.3f}")
    ax_bar.grid(True, axis="y", alpha=0.3)

    path = out_dir / "summary.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return [path]
