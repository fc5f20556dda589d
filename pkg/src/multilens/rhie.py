"""Rhie's single-plane ensembles with 5g - 5 images, and the radius of the
source disk over which that count survives."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .core import LensPlane, MultiplaneLens, PlanePoint, trace_batch
from .solver import SolveOptions, _newton, _dedup, _lattice, _rings, solve

__all__ = [
    "RhieConfig",
    "ConstructionError",
    "polygon_radius",
    "rhie_plane",
    "tune_central_mass",
    "max_source_radius",
]

TUNE_START = 0.1
TUNE_MAX_HALVINGS = 40
TUNE_MARGIN = 1e-6
DISK_SAMPLES = 64
DISK_BISECTIONS = 20
DISK_MARGIN = 1e-8
DISK_SAFETY = 0.5


class ConstructionError(RuntimeError):
    """A construction step could not reach its target image count."""


@dataclass(frozen=True)
class RhieConfig:
    g: int
    polygon_radius: float
    central_b: float
    rotation: float = 0.0


def polygon_radius(g: int) -> float:
    """Vertex radius ``(g-2)^(-1/(g-1)) sqrt((g-2)/(g-1))`` for g >= 4."""
    if g < 4:
        return 1.0
    return (g - 2) ** (-1.0 / (g - 1)) * math.sqrt((g - 2) / (g - 1))


def _polygon(n: int, radius: float, rotation: float) -> list[complex]:
    return [radius * complex(math.cos(rotation + 2 * math.pi * k / n), math.sin(rotation + 2 * math.pi * k / n))
            for k in range(n)]


def _build(g: int, b: float, rotation: float = 0.0) -> LensPlane:
    if g <= 3:
        return LensPlane.from_arrays(_polygon(g, 1.0, rotation), [1.0] * g)
    verts = _polygon(g - 1, polygon_radius(g), rotation)
    return LensPlane.from_arrays(verts + [0j], [1.0] * (g - 1) + [b])


_TUNED: dict[int, float] = {}
_RADII: dict[tuple, tuple[float, float]] = {}


def rhie_plane(g: int, rotation: float = 0.0, central_b: float | None = None) -> tuple[LensPlane, RhieConfig]:
    """Rhie ensemble with ``g`` unit masses (g = 2, 3) or ``g - 1`` unit masses
    on a regular polygon plus a light central mass (g >= 4).

    Vertex 0 sits at angle ``rotation`` from the positive u-axis. For g >= 4
    the central Einstein radius comes from :func:`tune_central_mass` unless
    given explicitly.
    """
    if not isinstance(g, (int, np.integer)) or g < 2:
        raise ValueError(f"g must be an integer >= 2, got {g!r}")
    g = int(g)
    if g <= 3:
        return _build(g, 0.0, rotation), RhieConfig(g, 1.0, 0.0, rotation)
    b = tune_central_mass(g) if central_b is None else float(central_b)
    return _build(g, b, rotation), RhieConfig(g, polygon_radius(g), b, rotation)


def _origin_count(plane: LensPlane, opts: SolveOptions) -> tuple[int, float]:
    res = solve(MultiplaneLens((plane,)), opts)
    if res.suspect:
        return -1, 0.0
    return res.count, res.min_abs_det


def tune_central_mass(g: int, opts: SolveOptions | None = None) -> float:
    """Largest ``0.1 * 2**-m`` central Einstein radius giving a stable 5g - 5.

    Stability means the next smaller grid value gives the same count and
    every image has ``|det| >= 1e-6``.
    """
    if g < 4:
        raise ValueError("the central mass exists only for g >= 4")
    if g in _TUNED and opts is None:
        return _TUNED[g]
    opts = opts or SolveOptions()
    target = 5 * g - 5

    def good(b):
        n, mdet = _origin_count(_build(g, b), opts)
        return n == target and mdet >= TUNE_MARGIN

    b = TUNE_START
    ok_here = good(b)
    for _ in range(TUNE_MAX_HALVINGS):
        ok_next = good(b / 2)
        if ok_here and ok_next:
            _TUNED[g] = b
            return b
        b /= 2
        ok_here = ok_next
    raise ConstructionError(f"no stable central mass found for g={g} after {TUNE_MAX_HALVINGS} halvings")


def _disk_predicate(plane: LensPlane, target: int, r: float, base_images: np.ndarray,
                    opts: SolveOptions) -> bool:
    """True if all DISK_SAMPLES sources on the circle |w| = r have ``target``
    images with |det| >= DISK_MARGIN."""
    if r == 0:
        return True
    lens = MultiplaneLens((plane,))
    hw = opts.window_half_width(lens)
    theta = 2 * np.pi * np.arange(DISK_SAMPLES) / DISK_SAMPLES
    sources = r * np.exp(1j * theta)
    base = np.concatenate([
        base_images,
        _lattice(0j, hw, opts.grid_n),
        _rings(plane.positions, np.sqrt(plane.b2)),
    ])
    seeds = np.concatenate([base + 0 * w for w in sources] + [sources])
    targets = np.concatenate([np.full(base.size, w) for w in sources] + [sources])
    z, conv = _newton(lens, seeds, targets, opts.newton_tol, opts.newton_max_iter, hw)
    for w in sources:
        sel = conv & (targets == w)
        roots = _dedup(z[sel], opts.dedup_radius)
        if roots.size != target:
            return False
        bt = trace_batch(lens, roots, jac=True)
        if np.abs(np.linalg.det(bt.jac)).min() < DISK_MARGIN:
            return False
    return True


def max_source_radius(plane: LensPlane, target_count: int, opts: SolveOptions | None = None,
                      return_raw: bool = False):
    """Safe radius of the source disk over which ``target_count`` images persist.

    Bisects on ``[0, 1]`` for the radius where the sampled circle stops
    having the full count, then halves it.
    """
    opts = opts or SolveOptions(grid_n=64, back_substitution=False)
    key = (plane.positions.tobytes(), plane.b2.tobytes(), int(target_count), opts)
    if key in _RADII:
        safe, lo = _RADII[key]
        return (safe, lo) if return_raw else safe
    res = solve(MultiplaneLens((plane,)), opts)
    if res.suspect or res.count != target_count or res.min_abs_det < DISK_MARGIN:
        raise ConstructionError(
            f"source at the origin gives {res.count} images, expected {target_count}")
    base = res.positions
    lo, hi = 0.0, 1.0
    if _disk_predicate(plane, target_count, hi, base, opts):
        lo = hi
    else:
        for _ in range(DISK_BISECTIONS):
            mid = 0.5 * (lo + hi)
            if _disk_predicate(plane, target_count, mid, base, opts):
                lo = mid
            else:
                hi = mid
    safe = DISK_SAFETY * lo
    _RADII[key] = (safe, lo)
    return (safe, lo) if return_raw else safe
