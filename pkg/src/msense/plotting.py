"""PNG figures for phase-transition grids, drawn off-screen."""

from __future__ import annotations

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from .harness import PhaseGrid, contour50

__all__ = ["plot_phase_grid", "plot_contours"]


def _save(fig, path, dpi):
    FigureCanvasAgg(fig)
    fig.savefig(path, dpi=dpi, bbox_inches="tight")


def plot_phase_grid(grid: PhaseGrid, path, dpi: int = 120) -> None:
    """One success-probability panel per C, with the 50% contour overlaid."""
    n = len(grid.C_list)
    fig = Figure(figsize=(3.2 * n, 3.0))
    axes = fig.subplots(1, n, sharey=True, squeeze=False)[0]
    curves = contour50(grid)
    s_order = np.argsort(grid.s_grid)
    s_vals = np.asarray(grid.s_grid)[s_order]
    m_vals = np.asarray(grid.m_grid)
    im = None
    for a, (ax, C) in enumerate(zip(axes, grid.C_list)):
        im = ax.pcolormesh(m_vals, s_vals, grid.success_prob[a][:, s_order].T,
                           vmin=0.0, vmax=1.0, cmap="gray", shading="nearest")
        pts = curves[C]
        ax.plot([p.m for p in pts], [p.s_star for p in pts], "o-", color="tab:red", lw=1.5)
        ax.set_title(f"C = {C}")
        ax.set_xlabel("m")
    axes[0].set_ylabel("s")
    fig.colorbar(im, ax=list(axes), shrink=0.85, label="success probability")
    _save(fig, path, dpi)


def plot_contours(curves: dict, path, dpi: int = 120, title: str | None = None) -> None:
    """All 50% curves on shared axes; pinned (non-crossing) points drawn hollow."""
    fig = Figure(figsize=(4.5, 3.4))
    ax = fig.subplots()
    for C, pts in curves.items():
        m = [p.m for p in pts]
        s = [p.s_star for p in pts]
        line, = ax.plot(m, s, "-", label=f"C = {C}")
        hit = [p.flag == "crossing" for p in pts]
        ax.plot([x for x, h in zip(m, hit) if h], [y for y, h in zip(s, hit) if h],
                "o", color=line.get_color())
        ax.plot([x for x, h in zip(m, hit) if not h], [y for y, h in zip(s, hit) if not h],
                "o", mfc="none", color=line.get_color())
    ax.set_xlabel("m")
    ax.set_ylabel("s at 50% success")
    if title:
        ax.set_title(title)
    ax.legend(frameon=False)
    _save(fig, path, dpi)
