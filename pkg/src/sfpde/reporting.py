"""Output writers for the command-line tools: delimited statistics and
convergence tables, run manifests, and rendered figures.

All CSV output is RFC-4180 via the csv module with fixed headers and
deterministic row order (observation grid in index order, nodes in sample
order).  Figures render through the Agg backend so runs never need a display.
"""

from __future__ import annotations

import csv
import platform
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

from .randomspace import SampleSet  # noqa: E402
from .uq import ObservableGrid, StatisticsResult  # noqa: E402

__all__ = [
    "write_stats_csv",
    "write_field_csv",
    "write_norms_csv",
    "write_table_csv",
    "write_nodes_csv",
    "write_manifest",
    "version_entries",
    "render_stats_png",
    "render_field_png",
    "render_convergence_png",
]

_FMT = "%.17g"


def _grid_columns(grid: ObservableGrid) -> tuple[list[str], np.ndarray]:
    """Header names and a (n_rows, n_coords) coordinate table in C order."""
    names = ["t"] + [f"x{j + 1}" for j in range(len(grid.axes))]
    mesh = np.meshgrid(grid.times, *grid.axes, indexing="ij")
    coords = np.stack([m.reshape(-1) for m in mesh], axis=1)
    return names, coords


def _write_rows(path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def write_stats_csv(path, result: StatisticsResult) -> None:
    """Mean/std fields over the observation grid, one row per grid point."""
    names, coords = _grid_columns(result.grid)
    mean = result.mean.reshape(-1)
    std = result.std.reshape(-1)
    rows = ([_FMT % c for c in coords[i]] + [_FMT % mean[i], _FMT % std[i]]
            for i in range(coords.shape[0]))
    _write_rows(path, names + ["mean", "std"], rows)


def write_field_csv(path, grid: ObservableGrid, values: np.ndarray,
                    name: str = "value") -> None:
    """A single field over the observation grid."""
    names, coords = _grid_columns(grid)
    flat = np.asarray(values).reshape(-1)
    if flat.size != coords.shape[0]:
        raise ValueError(f"field has {flat.size} entries for {coords.shape[0]} grid points")
    rows = ([_FMT % c for c in coords[i]] + [_FMT % flat[i]]
            for i in range(coords.shape[0]))
    _write_rows(path, names + [name], rows)


def write_norms_csv(path, norms: np.ndarray) -> None:
    """Per-sample solution norms in sample order."""
    rows = ([str(i), _FMT % v] for i, v in enumerate(np.asarray(norms)))
    _write_rows(path, ["sample", "l2_norm"], rows)


def write_table_csv(path, header: list[str], rows) -> None:
    """Generic numeric table; floats format at full precision."""
    def fmt(v):
        if isinstance(v, float):
            return _FMT % v
        return str(v)

    _write_rows(path, header, ([fmt(v) for v in row] for row in rows))


def write_nodes_csv(path, nodes: SampleSet) -> None:
    """Collocation/sample nodes: one column per dimension plus the weight."""
    names = [d.name for d in nodes.space.dims]
    rows = ([_FMT % c for c in nodes.points[i]] + [_FMT % nodes.weights[i]]
            for i in range(len(nodes)))
    _write_rows(path, names + ["weight"], rows)


def version_entries() -> dict:
    import scipy

    from . import __version__

    return {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "sfpde": __version__,
    }


def write_manifest(path, entries: dict) -> None:
    """Run manifest as key = value lines (same syntax as the config format)."""
    lines = [f"{key} = {value}" for key, value in entries.items()]
    Path(path).write_text("\n".join(lines) + "\n")


def _squeeze_field(grid: ObservableGrid, values: np.ndarray):
    """(times, x or None, field) with the field shaped (n_t,) or (n_t, n_x)."""
    arr = np.asarray(values).reshape(grid.shape)
    if len(grid.axes) == 0:
        return grid.times, None, arr
    if len(grid.axes) == 1:
        return grid.times, grid.axes[0], arr
    raise ValueError("figure rendering supports at most one spatial axis")


def _time_slice_indices(n_times: int, count: int = 4) -> list[int]:
    picks = np.linspace(0, n_times - 1, min(count, n_times)).round().astype(int)
    return sorted(set(int(i) for i in picks if i > 0)) or [n_times - 1]


def render_stats_png(path, result: StatisticsResult) -> None:
    """Mean with a +-std band: against t directly, or as time slices in x."""
    times, x, mean = _squeeze_field(result.grid, result.mean)
    _, _, std = _squeeze_field(result.grid, result.std)
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    if x is None:
        ax.plot(times, mean, color="C0", label="mean")
        ax.fill_between(times, mean - std, mean + std, color="C0", alpha=0.25,
                        label="mean +- std")
        ax.set_xlabel("t")
    else:
        for i in _time_slice_indices(times.size):
            ax.plot(x, mean[i], label=f"t = {times[i]:g}")
            ax.fill_between(x, mean[i] - std[i], mean[i] + std[i], alpha=0.2)
        ax.set_xlabel("x")
    ax.set_ylabel("u")
    ax.legend(frameon=False, fontsize=9)
    ax.set_title(f"solution statistics ({result.provenance}, "
                 f"{result.sample_count} samples)", fontsize=10)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def render_field_png(path, grid: ObservableGrid, values: np.ndarray,
                     title: str = "solution") -> None:
    times, x, field = _squeeze_field(grid, values)
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    if x is None:
        ax.plot(times, field, color="C0")
        ax.set_xlabel("t")
        ax.set_ylabel("u")
    else:
        img = ax.pcolormesh(x, times, field, shading="auto", cmap="viridis")
        fig.colorbar(img, ax=ax, label="u")
        ax.set_xlabel("x")
        ax.set_ylabel("t")
    ax.set_title(title, fontsize=10)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def render_convergence_png(path, xs, ys, xlabel: str, ylabel: str,
                           slope: float | None = None, loglog: bool = True) -> None:
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    plot = ax.loglog if loglog else ax.semilogy
    plot(xs, ys, "o-", color="C0")
    if slope is not None and loglog and xs.size > 1:
        anchor = ys[0] * (xs / xs[0]) ** slope
        ax.loglog(xs, anchor, "--", color="gray",
                  label=f"slope {slope:+.2f}")
        ax.legend(frameon=False, fontsize=9)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
