"""Figure rendering for CLI reports.

Everything here draws to files through the Agg backend; nothing opens a
window.  The functions accept the same objects the CSV/JSON writers do,
so a report directory carries both machine-readable payloads and the
matching pictures.
"""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.colors import LogNorm  # noqa: E402

from .fields import FieldGrid, parse_plane  # noqa: E402

__all__ = [
    "per_l_figure",
    "amplitude_figure",
    "flux_figure",
    "sweep_figure",
    "feasibility_figure",
]

_DPI = 160


def _layer_circles(ax, grid: FieldGrid) -> None:
    # layer boundaries cut by the sampled plane; a plane offset from the
    # origin sees each sphere as a smaller circle (or not at all)
    _, offset = parse_plane(grid.plane)
    for layer in grid.stack_config["layers"]:
        r = layer["outer_radius_nm"]
        if r <= abs(offset):
            continue
        rho = math.sqrt(r * r - offset * offset)
        ax.add_patch(plt.Circle((0.0, 0.0), rho, fill=False,
                                color="white", lw=0.8, ls="--", alpha=0.9))


def per_l_figure(per_l_terms, path) -> None:
    """Bar chart of the (l, term) cross-section contributions."""
    ls = [l for l, _ in per_l_terms]
    terms = np.asarray([t for _, t in per_l_terms], dtype=float)
    fig, ax = plt.subplots(figsize=(5.0, 3.2))
    ax.bar(ls, np.maximum(terms, 1e-300), width=0.8)
    ax.set_yscale("log")
    ax.set_xlabel("partial wave l")
    ax.set_ylabel(r"$(2l+1)\,|a_l|^2$")
    ax.set_title("cross-section contributions")
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def amplitude_figure(grid: FieldGrid, path) -> None:
    """Probability density |psi|^2 over the sampled plane, log color scale."""
    dens = np.abs(grid.psi.T) ** 2
    floor = max(float(dens.max()) * 1e-16, 1e-300)
    fig, ax = plt.subplots(figsize=(5.4, 4.6))
    mesh = ax.pcolormesh(grid.u, grid.v, np.maximum(dens, floor),
                         norm=LogNorm(), shading="auto", cmap="viridis")
    _layer_circles(ax, grid)
    ax.set_aspect("equal")
    ax.set_xlabel(grid.axis_names[0].replace("_", " "))
    ax.set_ylabel(grid.axis_names[1].replace("_", " "))
    ax.set_title(rf"$|\Psi|^2$ on {grid.plane}")
    fig.colorbar(mesh, ax=ax)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def flux_figure(grid: FieldGrid, path, lines=None) -> None:
    """In-plane flux magnitude with optional traced streamlines on top."""
    mag = np.hypot(grid.j1, grid.j2).T
    fig, ax = plt.subplots(figsize=(5.4, 4.6))
    mesh = ax.pcolormesh(grid.u, grid.v, mag, shading="auto", cmap="magma")
    if lines:
        for line in lines:
            if len(line) > 1:
                ax.plot(line[:, 0], line[:, 1], color="cyan", lw=0.7)
    _layer_circles(ax, grid)
    ax.set_aspect("equal")
    ax.set_xlabel(grid.axis_names[0].replace("_", " "))
    ax.set_ylabel(grid.axis_names[1].replace("_", " "))
    ax.set_title(f"flux magnitude on {grid.plane}")
    fig.colorbar(mesh, ax=ax)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def _grid_arrays(grid):
    xs = np.asarray(grid.axes[0].values, dtype=float)
    ys = np.asarray(grid.axes[1].values, dtype=float)
    obj = np.full((ys.size, xs.size), np.nan)
    feas = np.zeros((ys.size, xs.size), dtype=bool)
    for c in grid.cells:
        obj[c.iy, c.ix] = c.objective
        feas[c.iy, c.ix] = c.feasible
    return xs, ys, obj, feas


def sweep_figure(grid, path) -> None:
    """Objective heatmap over a two-axis sweep."""
    xs, ys, obj, _ = _grid_arrays(grid)
    fig, ax = plt.subplots(figsize=(5.4, 4.2))
    finite = obj[np.isfinite(obj)]
    norm = None
    if finite.size and finite.min() > 0 and finite.max() / finite.min() > 100:
        norm = LogNorm()
    mesh = ax.pcolormesh(xs, ys, obj, shading="auto", cmap="viridis", norm=norm)
    ax.set_xlabel(grid.axes[0].name.replace("_", " "))
    ax.set_ylabel(grid.axes[1].name.replace("_", " "))
    ax.set_title("sweep objective")
    fig.colorbar(mesh, ax=ax)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def feasibility_figure(grid, path) -> None:
    """Binary feasibility map; feasible cells light, infeasible dark."""
    xs, ys, _, feas = _grid_arrays(grid)
    fig, ax = plt.subplots(figsize=(5.4, 4.2))
    mesh = ax.pcolormesh(xs, ys, feas.astype(float), shading="auto",
                         cmap="cividis", vmin=0.0, vmax=1.0)
    ax.set_xlabel(grid.axes[0].name.replace("_", " "))
    ax.set_ylabel(grid.axes[1].name.replace("_", " "))
    ax.set_title("feasible cells")
    fig.colorbar(mesh, ax=ax, ticks=[0.0, 1.0])
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
