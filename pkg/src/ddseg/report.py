"""Run reports and diagnostic figures.

The report is split across three files so that repeated runs stay
byte-comparable: PREFIX.report.txt and PREFIX.report.csv hold only
deterministic quantities (solver errors, residuals, histograms,
fallback counts), while wall-clock stage timings go to a separate
PREFIX.timings.csv.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.12e}"
    return str(value)


def emit_run_report(prefix, lines: list[tuple[str, object]], timings: list[tuple[str, float]]) -> None:
    """Write PREFIX.report.txt / .csv (deterministic) and .timings.csv."""
    prefix = Path(prefix)
    txt_path = prefix.parent / (prefix.name + ".report.txt")
    csv_path = prefix.parent / (prefix.name + ".report.csv")
    time_path = prefix.parent / (prefix.name + ".timings.csv")

    width = max((len(k) for k, _ in lines), default=0)
    with open(txt_path, "w", encoding="utf-8") as fh:
        fh.write("run report\n")
        fh.write("==========\n")
        for key, value in lines:
            fh.write(f"{key.ljust(width)}  {_fmt(value)}\n")

    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("key,value\n")
        for key, value in lines:
            fh.write(f"{key},{_fmt(value)}\n")

    with open(time_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("stage,seconds\n")
        for stage, seconds in timings:
            fh.write(f"{stage},{seconds:.6f}\n")


def step_histogram(steps: np.ndarray) -> str:
    """Compact "step:count" histogram string, ascending by step."""
    values, counts = np.unique(steps, return_counts=True)
    return " ".join(f"{int(v)}:{int(c)}" for v, c in zip(values, counts))


def render_figures(prefix, label_map, palette, maps_high, class_names) -> list[Path]:
    """Save a colorized label-map preview and per-class heatmaps.

    Returns the written paths.  Uses the Agg backend so it works
    headless; figures are diagnostics and are not covered by the
    byte-determinism guarantee.
    """
    import matplotlib

    matplotlib.use("Agg", force=True)
    import matplotlib.pyplot as plt

    prefix = Path(prefix)
    written = []

    lut = np.asarray(palette, dtype=np.uint8)
    rgb = lut[label_map.labels]
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.imshow(rgb, interpolation="nearest")
    ax.set_title("label map")
    ax.axis("off")
    path = prefix.parent / (prefix.name + ".labels.png")
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    written.append(path)

    if maps_high:
        cols = min(4, len(maps_high))
        rows = (len(maps_high) + cols - 1) // cols
        fig, axes = plt.subplots(rows, cols, figsize=(4 * cols, 3.2 * rows), squeeze=False)
        for ax in axes.flat:
            ax.axis("off")
        for ax, m in zip(axes.flat, maps_high):
            im = ax.imshow(m.values, cmap="viridis")
            ax.set_title(f"class {m.class_index}: {class_names[m.class_index]}")
            fig.colorbar(im, ax=ax, fraction=0.046)
        path = prefix.parent / (prefix.name + ".maps.png")
        fig.savefig(path, dpi=120, bbox_inches="tight")
        plt.close(fig)
        written.append(path)
    return written
