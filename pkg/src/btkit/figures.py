"""Figure rendering for evaluation reports.

One bar panel per metric that at least one system reports; systems keep
their input order on the x axis. Rendering is headless (Agg) and the PNG
is written without the encoder's Software tag so identical inputs give
identical bytes, which keeps manifest digests stable.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)

from .errors import EmptyInput
from .metrics import EvaluationReport

__all__ = ["render_report_figure"]

_PANELS = (
    ("bleu", "BLEU"),
    ("chrf", "chrF"),
    ("chrf_pp", "chrF++"),
    ("comet", "COMET"),
)


def render_report_figure(
    reports: Sequence[tuple[str, EvaluationReport]],
    path: str | Path,
) -> Path:
    """Render per-metric bar panels to ``path`` (PNG). Returns the path."""
    if not reports:
        raise EmptyInput("no reports to plot")

    names = [name for name, _ in reports]
    panels = [
        (attr, label)
        for attr, label in _PANELS
        if any(getattr(report, attr) is not None for _, report in reports)
    ]
    if not panels:
        raise EmptyInput("no metric present in any report")

    fig, axes = plt.subplots(
        1, len(panels), figsize=(3.2 * len(panels), 3.2), dpi=100
    )
    if len(panels) == 1:
        axes = [axes]
    for axis, (attr, label) in zip(axes, panels):
        values = [getattr(report, attr) for _, report in reports]
        positions = range(len(names))
        heights = [v if v is not None else 0.0 for v in values]
        bars = axis.bar(positions, heights, color="#4878a8")
        for bar, value in zip(bars, values):
            if value is None:
                bar.set_height(0.0)
                bar.set_hatch("//")
                bar.set_facecolor("#cccccc")
        axis.set_title(label)
        axis.set_xticks(list(positions))
        axis.set_xticklabels(names, rotation=45, ha="right", fontsize=8)
    fig.tight_layout()

    path = Path(path)
    # Software: None strips the encoder tag so output bytes depend only on input
    fig.savefig(path, format="png", metadata={"Software": None})
    plt.close(fig)
    return path
