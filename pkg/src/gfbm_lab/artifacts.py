"""Deterministic on-disk artifacts: CSV tables, JSON summaries, SVG plots.

All floats are written with 17 significant digits so values round-trip
exactly; JSON is canonical (sorted keys); SVG omits date metadata.  Nothing
here embeds timestamps, so identical inputs produce byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from pathlib import Path

import numpy as np

__all__ = [
    "OverwriteRefusedError",
    "fmt",
    "content_hash",
    "prepare_path",
    "write_csv",
    "write_json",
    "write_matrix_csv",
    "read_matrix_csv",
    "line_plot_svg",
]


class OverwriteRefusedError(OSError):
    """Target file exists and overwriting was not requested."""


def fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def content_hash(obj) -> str:
    """Stable sha256 of a JSON-serializable object (canonical form)."""
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=fmt)
    return hashlib.sha256(blob.encode()).hexdigest()


def prepare_path(path, overwrite: bool) -> Path:
    path = Path(path)
    if path.exists() and not overwrite:
        raise OverwriteRefusedError(f"{path} exists; pass overwrite to replace it")
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def write_csv(path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, quoting=csv.QUOTE_MINIMAL)
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2, default=fmt)
        fh.write("\n")


def write_matrix_csv(path, grid: np.ndarray, matrix: np.ndarray) -> None:
    """Row-major matrix with the grid times as header."""
    write_csv(path, [fmt(t) for t in np.asarray(grid)], np.asarray(matrix))


def read_matrix_csv(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader if row]
    return np.array([float(v) for v in header]), np.array(rows)


def line_plot_svg(path, curves, xlabel: str, ylabel: str, title: str = "",
                  logx: bool = False, logy: bool = False) -> None:
    """Static SVG line plot; curves is a list of (x, y, label)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for x, y, label in curves:
        ax.plot(x, y, marker="o", markersize=3, linewidth=1.2, label=label)
    if logx:
        ax.set_xscale("log")
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    if any(label for _, _, label in curves):
        ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def scan_artifacts(directory) -> list[Path]:
    directory = Path(directory)
    if not directory.is_dir():
        raise OSError(f"{directory} is not a readable directory")
    return sorted(p for p in directory.iterdir() if p.suffix == ".json")
