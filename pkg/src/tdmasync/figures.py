"""Render the figure-analog CSVs to PNG files.

Works from the delimited plot data so a report can be regenerated without
re-running any simulation.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

FIGURE_TITLES = {
    "fig2": ("Classic loop, no period update: phase offsets from the mean", "slot", "phase offset (s)"),
    "fig4a": ("ESSBS: clock periods", "slot", "period (s)"),
    "fig4b": ("ESSBS: NPDR", "slot", "NPDR"),
    "fig5": ("PFDSA: clock periods", "slot", "period (s)"),
    "fig6": ("PFDSA: phase offsets from the mean", "slot", "phase offset (s)"),
    "fig7": ("NPDR: PFDSA vs ESSBS", "slot", "NPDR"),
}


def _read_csv(path: Path) -> tuple[list[str], np.ndarray]:
    with open(path) as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) if v else np.nan for v in row] for row in reader]
    return header, np.asarray(rows)


def _render_lines(path: Path, out_path: Path, log_y: bool = False) -> None:
    header, data = _read_csv(path)
    # divergent traces legitimately reach astronomically large or non-finite
    # values; clamp the rendered series so the axis machinery stays sane
    data = np.where(np.isfinite(data), data, np.nan)
    data = np.clip(data, -1e30, 1e30)
    title, xlabel, ylabel = FIGURE_TITLES.get(path.stem, (path.stem, header[0], "value"))
    fig, ax = plt.subplots(figsize=(7, 4))
    x = data[:, 0]
    for col in range(1, data.shape[1]):
        if np.isfinite(data[:, col]).any():
            ax.plot(x, data[:, col], linewidth=0.9, label=header[col])
    if data.shape[1] <= 4:
        ax.legend()
    if log_y:
        ax.set_yscale("log")
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def _render_histogram(path: Path, out_path: Path) -> None:
    with open(path) as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
    algorithms = sorted({r["algorithm"] for r in rows})
    fig, axes = plt.subplots(len(algorithms), 1, figsize=(7, 2.6 * max(1, len(algorithms))), squeeze=False)
    for ax, name in zip(axes[:, 0], algorithms):
        sel = [r for r in rows if r["algorithm"] == name]
        lefts = np.array([float(r["bin_left"]) for r in sel])
        rights = np.array([float(r["bin_right"]) for r in sel])
        counts = np.array([int(r["count"]) for r in sel])
        ax.bar(lefts, counts, width=rights - lefts, align="edge")
        ax.set_title(name)
        ax.set_ylabel("scenarios")
    axes[-1, 0].set_xlabel(path.stem.replace("hist_", ""))
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def render_figures(csv_dir: str | Path) -> list[Path]:
    """Render a PNG next to every known figure CSV found in ``csv_dir``."""
    csv_dir = Path(csv_dir)
    rendered: list[Path] = []
    for stem in FIGURE_TITLES:
        src = csv_dir / f"{stem}.csv"
        if src.exists():
            out = csv_dir / f"{stem}.png"
            _render_lines(src, out, log_y=(stem in ("fig4b", "fig7")))
            rendered.append(out)
    for stem in ("hist_npdr", "hist_T"):
        src = csv_dir / f"{stem}.csv"
        if src.exists():
            out = csv_dir / f"{stem}.png"
            _render_histogram(src, out)
            rendered.append(out)
    return rendered
