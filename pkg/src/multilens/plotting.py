"""Matplotlib renderings of critical curves, caustics and images.

Every panel is written as its own self-contained SVG file.
"""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .caustics import CurveSet, Window  # noqa: E402
from .core import LensedImage, MultiplaneLens  # noqa: E402
from .solver import time_delay  # noqa: E402

__all__ = ["PANEL_STYLE", "group_colors", "plot_critical", "plot_caustics", "plot_time_delay", "save_panel"]

PANEL_STYLE = {
    "font.family": "serif",
    "font.size": 8,
    "axes.labelsize": 9,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "lines.linewidth": 0.8,
    "lines.markersize": 4,
    "svg.fonttype": "none",
    "svg.hashsalt": "multilens",
    "figure.figsize": (3.4, 3.4),
}

_SINGLE = "0.2"


def group_colors(groups: Sequence[Sequence[int]], n: int) -> list:
    """One colour per curve; curves sharing a multiplicity group (size > 1)
    share a colour, singletons are drawn in dark grey."""
    cmap = plt.get_cmap("tab10")
    colors = [_SINGLE] * n
    k = 0
    for g in groups:
        if len(g) > 1:
            for i in g:
                colors[i] = cmap(k % 10)
            k += 1
    return colors


def _square(ax, window: Window):
    ax.set_xlim(window.xmin, window.xmax)
    ax.set_ylim(window.ymin, window.ymax)
    ax.set_aspect("equal")
    ax.set_xlabel("$u$")
    ax.set_ylabel("$v$")


def _image_markers(ax, images: Sequence[LensedImage]):
    plus = np.array([im.position.as_array() for im in images if _is_min(im)]).reshape(-1, 2)
    cross = np.array([im.position.as_array() for im in images if not _is_min(im)]).reshape(-1, 2)
    if len(plus):
        ax.plot(plus[:, 0], plus[:, 1], "+", color="tab:red", ms=5, mew=0.8, ls="none")
    if len(cross):
        ax.plot(cross[:, 0], cross[:, 1], "x", color="tab:blue", ms=4, mew=0.8, ls="none")


def _is_min(im: LensedImage) -> bool:
    if im.morse_type != "unavailable":
        return im.morse_type == "minimum"
    return im.parity > 0


def plot_critical(ax, lens: MultiplaneLens, curves: CurveSet, images: Sequence[LensedImage] = ()):
    """Critical curves in plane 1 with mass markers and images."""
    colors = group_colors(curves.multiplicity_groups, len(curves.critical))
    for pl, c in zip(curves.critical, colors):
        xy = np.vstack([pl.xy, pl.xy[:1]]) if pl.closed else pl.xy
        ax.plot(xy[:, 0], xy[:, 1], color=c)
    p1 = lens.planes[0].positions
    p1 = p1[lens.planes[0].b2 > 0]
    if p1.size:
        ax.plot(p1.real, p1.imag, "o", color="k", ms=3.5, ls="none")
    back = [p.positions[p.b2 > 0] for p in lens.planes[1:]]
    back = np.concatenate(back) if back else np.empty(0, complex)
    if back.size:
        ax.plot(back.real, back.imag, "o", mfc="none", mec="k", ms=3.5, ls="none")
    _image_markers(ax, images)
    if curves.window is not None:
        _square(ax, curves.window)


def plot_caustics(ax, lens: MultiplaneLens, curves: CurveSet, window: Window | None = None):
    """Caustics in the source plane with the source marked."""
    colors = group_colors(curves.multiplicity_groups, len(curves.caustic))
    for pl, c in zip(curves.caustic, colors):
        xy = np.vstack([pl.xy, pl.xy[:1]]) if pl.closed else pl.xy
        ax.plot(xy[:, 0], xy[:, 1], color=c)
    y = lens.source.as_array()
    ax.plot([y[0]], [y[1]], "*", color="tab:red", ms=6, ls="none")
    if window is not None:
        _square(ax, window)


def plot_time_delay(ax, lens: MultiplaneLens, window: Window, images: Sequence[LensedImage] = (), n: int = 200,
                    levels: int = 30):
    """Contours of the single-plane time delay over ``window``."""
    if lens.K != 1:
        raise ValueError("time-delay surfaces are defined for a single plane")
    xs = np.linspace(window.xmin, window.xmax, n)
    ys = np.linspace(window.ymin, window.ymax, n)
    X, Y = np.meshgrid(xs, ys)
    Z = X + 1j * Y
    plane = lens.planes[0]
    y = lens.source.as_complex()
    d = np.abs(Z[..., None] - plane.positions)
    with np.errstate(divide="ignore"):
        T = 0.5 * np.abs(Z - y) ** 2 - (plane.b2 * np.log(d)).sum(-1)
    T = np.where(np.isfinite(T), T, np.nan)
    if images:
        lo = min(time_delay(plane, lens.source, im.position) for im in images)
        T = np.clip(T, None, lo + 4.0)
    ax.contour(X, Y, T, levels=levels, colors="0.35", linewidths=0.5)
    p = plane.positions[plane.b2 > 0]
    ax.plot(p.real, p.imag, "o", color="k", ms=3.5, ls="none")
    _image_markers(ax, images)
    _square(ax, window)


def save_panel(path, draw, *args, title: str | None = None, **kwargs) -> Path:
    """Render one panel with ``draw(ax, *args, **kwargs)`` into an SVG file."""
    path = Path(path)
    with plt.rc_context(PANEL_STYLE):
        fig, ax = plt.subplots()
        draw(ax, *args, **kwargs)
        if title:
            ax.set_title(title)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return path
