"""Locate every lensed image of a multiplane point-mass lens.

Roots of ``eta(x1) - y`` are found by damped Newton iterations started from
many seeds at once. Seeds come from a lattice over a window in plane 1,
rings around each plane-1 mass, rings around plane-1 preimages of every
downstream mass and, for K > 1, plane-by-plane back substitution of the
uncoupled system.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.spatial import cKDTree

from . import _kernels
from .core import (
    LensedImage,
    LensPlane,
    MultiplaneLens,
    ObstructionError,
    PlanePoint,
    RayPath,
    trace_batch,
)

__all__ = [
    "SolveOptions",
    "SolveResult",
    "BoundsReport",
    "DegenerateImageWarning",
    "solve",
    "find_images",
    "classify_image",
    "time_delay",
    "time_delay_gradient",
    "image_count_bounds",
    "count_images",
    "ImageClusters",
    "cluster_images",
]

log = logging.getLogger(__name__)

RING_RADII = (0.5, 1.0, 1.5)
RING_SEEDS = 64
MAX_HALVINGS = 20


class DegenerateImageWarning(RuntimeWarning):
    """Converged roots had a near-vanishing Jacobian (source on or near a caustic)."""


@dataclass(frozen=True)
class SolveOptions:
    half_width: float | None = None
    center: tuple[float, float] = (0.0, 0.0)
    grid_n: int = 256
    newton_tol: float = 1e-12
    newton_max_iter: int = 60
    dedup_radius: float = 1e-8
    nondegeneracy_margin: float = 1e-10
    back_substitution: bool = True
    extra_seeds: tuple = ()

    def __post_init__(self):
        for name in ("grid_n", "newton_tol", "newton_max_iter", "dedup_radius", "nondegeneracy_margin"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.half_width is not None and not self.half_width > 0:
            raise ValueError("half_width must be positive")

    def window_half_width(self, lens: MultiplaneLens) -> float:
        if self.half_width is not None:
            return float(self.half_width)
        return 2.0 * max(p.outer_radius for p in lens.planes) + 2.0


@dataclass
class SolveResult:
    images: list[LensedImage]
    suspect: list[LensedImage] = field(default_factory=list)

    @property
    def count(self) -> int:
        return len(self.images)

    @property
    def positions(self) -> np.ndarray:
        """Plane-1 image positions as complex numbers."""
        return np.array([im.position.as_complex() for im in self.images], dtype=complex)

    @property
    def min_abs_det(self) -> float:
        if not self.images:
            return math.inf
        return min(abs(im.lens_map_jacobian_det) for im in self.images)


# ---------------------------------------------------------------------------
# Newton


def _newton(lens: MultiplaneLens, z0: np.ndarray, target, tol: float, max_iter: int,
            max_step: float, upto: int | None = None):
    """Damped Newton for ``trace(z)[upto] = target`` on many seeds at once.

    ``target`` is a scalar or an array broadcastable against ``z0``. Returns
    the final iterates and a boolean mask of seeds that reached ``tol``.
    """
    z0 = np.ascontiguousarray(np.asarray(z0, dtype=complex).ravel())
    y = np.ascontiguousarray(np.broadcast_to(np.asarray(target, dtype=complex), z0.shape))
    return _kernels.newton(*_kernels.pack(lens, upto), z0, y, float(tol), int(max_iter),
                           float(max_step), MAX_HALVINGS)


# ---------------------------------------------------------------------------
# seeding


def _lattice(center: complex, half_width: float, n: int) -> np.ndarray:
    # cell-centred lattice so the (often symmetric) mass positions are avoided
    h = 2 * half_width / n
    s = -half_width + h * (np.arange(n) + 0.5)
    return (center + s[None, :] + 1j * s[:, None]).ravel()


def _rings(centers: np.ndarray, radii: np.ndarray, shapes: np.ndarray | None = None) -> np.ndarray:
    """Rings of RING_SEEDS points around each centre.

    ``shapes`` optionally holds a real 2x2 matrix per centre that maps the
    circle to an ellipse (used to pull rings back through a Jacobian).
    """
    if len(centers) == 0:
        return np.empty(0, dtype=complex)
    theta = 2 * np.pi * (np.arange(RING_SEEDS) + 0.25) / RING_SEEDS
    circ = np.exp(1j * theta)
    out = []
    for k, c in enumerate(centers):
        for r in RING_RADII:
            pts = r * radii[k] * circ
            if shapes is not None:
                M = shapes[k]
                pts = (M[0, 0] * pts.real + M[0, 1] * pts.imag) + 1j * (M[1, 0] * pts.real + M[1, 1] * pts.imag)
            out.append(c + pts)
    return np.concatenate(out)


def _dedup(z: np.ndarray, radius: float) -> np.ndarray:
    """Cluster points closer than ``radius``; keep one representative each."""
    if z.size == 0:
        return z
    z = z[np.lexsort((z.imag, z.real))]
    pts = np.column_stack([z.real, z.imag])
    tree = cKDTree(pts)
    taken = np.zeros(z.size, dtype=bool)
    reps = []
    for i in range(z.size):
        if taken[i]:
            continue
        reps.append(i)
        taken[tree.query_ball_point(pts[i], radius)] = True
    return z[reps]


def _sub_lens(lens: MultiplaneLens, n_planes: int, source) -> MultiplaneLens:
    return MultiplaneLens(
        planes=lens.planes[:n_planes],
        source=source,
        betas=lens.betas[:n_planes],
        epsilons=lens.epsilons[: n_planes - 1],
    )


def _single_plane_roots(plane: LensPlane, beta: float, sources: np.ndarray, opts: SolveOptions,
                        grid_n: int) -> list[np.ndarray]:
    """Roots of the single-plane equation for each of several sources."""
    lens = MultiplaneLens((plane,), betas=(beta,))
    hw = opts.window_half_width(lens)
    base = np.concatenate([
        _lattice(0j, hw, grid_n),
        _rings(plane.positions, np.sqrt(plane.b2 * beta)),
    ])
    out = []
    for y in np.atleast_1d(sources):
        seeds = np.concatenate([base, [y, y + 0.5, y - 0.5]])
        z, conv = _newton(lens, seeds, y, opts.newton_tol, opts.newton_max_iter, hw)
        out.append(_dedup(z[conv], opts.dedup_radius))
    return out


def _back_substitution_seeds(lens: MultiplaneLens, opts: SolveOptions) -> np.ndarray:
    """Plane-1 roots of the uncoupled (eps = 0) system, by back substitution."""
    grid_n = max(48, opts.grid_n // 4)
    current = np.array([lens.source.as_complex()])
    for i in reversed(range(lens.K)):
        roots = _single_plane_roots(lens.planes[i], lens.betas[i], current, opts, grid_n)
        current = _dedup(np.concatenate(roots), opts.dedup_radius) if roots else current[:0]
        if current.size == 0:
            break
    return current


def _downstream_seeds(lens: MultiplaneLens, opts: SolveOptions, hw: float, base: np.ndarray) -> np.ndarray:
    """Rings around plane-1 preimages of every mass in planes 2..K."""
    out = []
    for j in range(1, lens.K):
        plane = lens.planes[j]
        sub = _sub_lens(lens, j, lens.source)
        for xi, b2 in zip(plane.positions, plane.b2):
            if b2 <= 0:
                continue
            z, conv = _newton(sub, base, xi, opts.newton_tol, opts.newton_max_iter, hw, upto=j)
            pre = _dedup(z[conv], opts.dedup_radius)
            if pre.size == 0:
                continue
            bt = trace_batch(sub, pre, jac=True, upto=j)
            good = bt.ok & np.all(np.isfinite(bt.jac), axis=(1, 2))
            pre, Jp = pre[good], bt.jac[good]
            dets = np.abs(np.linalg.det(Jp))
            invs = np.linalg.inv(Jp[dets > 1e-14])
            pre = pre[dets > 1e-14]
            b = math.sqrt(b2 * lens.betas[j])
            out.append(_rings(pre, np.full(pre.size, b), invs))
            out.append(pre)
    return np.concatenate(out) if out else np.empty(0, dtype=complex)


def _seeds(lens: MultiplaneLens, opts: SolveOptions) -> np.ndarray:
    hw = opts.window_half_width(lens)
    center = complex(*opts.center)
    lattice = _lattice(center, hw, opts.grid_n)
    p1 = lens.planes[0]
    y = lens.source.as_complex()
    parts = [
        lattice,
        _rings(p1.positions, np.sqrt(p1.b2 * lens.betas[0])),
        np.array([y, y + 0.5, y - 0.5, y + 0.5j, y - 0.5j]),
        np.array([complex(*PlanePoint.of(s)) for s in opts.extra_seeds], dtype=complex),
    ]
    if lens.K > 1:
        parts.append(_downstream_seeds(lens, opts, hw, _lattice(center, hw, max(64, opts.grid_n // 2))))
        if opts.back_substitution:
            parts.append(_back_substitution_seeds(lens, opts))
    return np.concatenate(parts)


# ---------------------------------------------------------------------------
# public API


def _make_images(lens: MultiplaneLens, z: np.ndarray) -> list[LensedImage]:
    bt = trace_batch(lens, z, jac=True)
    y = lens.source.as_complex()
    out = []
    for k in range(z.size):
        path = RayPath(
            impacts=tuple(PlanePoint(w.real, w.imag) for w in bt.impacts[:, k]),
            source_hit=PlanePoint(bt.hit[k].real, bt.hit[k].imag),
            residual_norm=float(abs(bt.hit[k] - y)),
        )
        det = float(np.linalg.det(bt.jac[k]))
        out.append(classify_image(lens, LensedImage(path, det), jac=bt.jac[k]))
    return out


def solve(lens: MultiplaneLens, opts: SolveOptions | None = None) -> SolveResult:
    """Find all images; degenerate roots are split off into ``suspect``."""
    opts = opts or SolveOptions()
    seeds = _seeds(lens, opts)
    hw = opts.window_half_width(lens)
    z, conv = _newton(lens, seeds, lens.source.as_complex(), opts.newton_tol,
                      opts.newton_max_iter, hw)
    roots = _dedup(z[conv], opts.dedup_radius)
    images = _make_images(lens, roots)
    good = [im for im in images if abs(im.lens_map_jacobian_det) >= opts.nondegeneracy_margin]
    suspect = [im for im in images if abs(im.lens_map_jacobian_det) < opts.nondegeneracy_margin]
    log.debug("solve: %d seeds, %d converged, %d images, %d suspect",
              seeds.size, int(conv.sum()), len(good), len(suspect))
    return SolveResult(good, suspect)


def find_images(lens: MultiplaneLens, opts: SolveOptions | None = None) -> list[LensedImage]:
    """All nondegenerate images of ``lens.source``, sorted by position.

    Degenerate roots are not returned but are reported through a
    :class:`DegenerateImageWarning`; use :func:`solve` to get them.
    """
    res = solve(lens, opts)
    if res.suspect:
        warnings.warn(
            f"{len(res.suspect)} degenerate root(s) near a caustic were excluded",
            DegenerateImageWarning,
            stacklevel=2,
        )
    return res.images


def count_images(lens: MultiplaneLens, opts: SolveOptions | None = None, margin: float | None = None) -> int:
    """Image count, or -1 if any root is degenerate at ``margin``."""
    opts = opts or SolveOptions()
    if margin is not None:
        opts = replace(opts, nondegeneracy_margin=margin)
    res = solve(lens, opts)
    return -1 if res.suspect else res.count


def classify_image(lens: MultiplaneLens, img: LensedImage, jac: np.ndarray | None = None) -> LensedImage:
    """Attach parity and, for a single plane, the Morse type of the time delay.

    For K = 1 the Hessian of the time delay equals the lensing-map Jacobian.
    """
    if jac is None:
        bt = trace_batch(lens, np.array([img.position.as_complex()]), jac=True)
        jac = bt.jac[0]
    det = float(np.linalg.det(jac))
    parity = 1 if det > 0 else -1
    morse = "unavailable"
    if lens.K == 1:
        ev = np.linalg.eigvalsh(0.5 * (jac + jac.T))
        if ev.min() > 0:
            morse = "minimum"
        elif ev.max() < 0:
            morse = "maximum"
        else:
            morse = "saddle"
    return replace(img, lens_map_jacobian_det=det, parity=parity, morse_type=morse)


def time_delay(plane: LensPlane, source, x) -> float:
    """Single-plane time delay ``|x - y|^2 / 2 - sum b^2 log|x - xi|``."""
    z = PlanePoint.of(x).as_complex()
    y = PlanePoint.of(source).as_complex()
    d = np.abs(z - plane.positions)
    if d.min() <= 1e-9:
        raise ObstructionError(0)
    return 0.5 * abs(z - y) ** 2 - float(np.sum(plane.b2 * np.log(d)))


def time_delay_gradient(plane: LensPlane, source, x) -> np.ndarray:
    """Analytic gradient of :func:`time_delay`, which is ``eta(x) - y``."""
    lens = MultiplaneLens((plane,), source=source)
    bt = trace_batch(lens, np.array([PlanePoint.of(x).as_complex()]))
    if bt.blocked[0] >= 0:
        raise ObstructionError(0)
    w = bt.hit[0] - lens.source.as_complex()
    return np.array([w.real, w.imag])


@dataclass(frozen=True)
class BoundsReport:
    lower: int
    upper_eq1: int
    conjectured_max: int | None
    petters_special: int | None
    even_sum: int
    odd_sum: int

    def contains(self, count: int) -> bool:
        return self.lower <= count <= self.upper_eq1


def image_count_bounds(g_list: Sequence[int]) -> BoundsReport:
    """Known lower/upper bounds on the image count of a K-plane point-mass lens.

    The upper bound expands ``prod(1 + g_i Z)`` and combines the sums of its
    even- and odd-degree coefficients. Python integers do not overflow, but
    non-integral or non-positive plane sizes are rejected.
    """
    g_list = list(g_list)
    if not g_list:
        raise ValueError("need at least one plane")
    for g in g_list:
        if not isinstance(g, (int, np.integer)) or isinstance(g, bool) or g < 1:
            raise ValueError(f"plane sizes must be integers >= 1, got {g!r}")
    coeffs = [1]
    for g in g_list:
        g = int(g)
        coeffs = [a + g * b for a, b in zip(coeffs + [0], [0] + coeffs)]
    even = sum(coeffs[0::2])
    odd = sum(coeffs[1::2])
    lower = math.prod(int(g) + 1 for g in g_list)
    conj = math.prod(5 * int(g) - 5 for g in g_list) if all(g >= 2 for g in g_list) else None
    K = len(g_list)
    petters = 2 * (2 ** (2 * (K - 1)) - 1) if K > 1 and all(g == 1 for g in g_list) else None
    return BoundsReport(lower, even * even + odd * odd, conj, petters, even, odd)


@dataclass(frozen=True)
class ImageClusters:
    """Single-linkage clusters of image positions.

    ``gap_ratio`` is the dendrogram merge height that joins the clusters
    divided by the largest merge height inside any cluster.
    """

    labels: np.ndarray
    gap_ratio: float

    @property
    def sizes(self) -> list[int]:
        return sorted(np.bincount(self.labels).tolist(), reverse=True)

    @property
    def n_clusters(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size else 0


def cluster_images(positions, n_clusters: int | None = None) -> ImageClusters:
    """Cut the single-linkage dendrogram of ``positions`` into clusters.

    Without ``n_clusters`` the cut goes at the largest ratio between
    consecutive merge heights. Labels are numbered in order of first
    appearance.
    """
    z = np.asarray([PlanePoint.of(p).as_complex() if not isinstance(p, (complex, np.complexfloating)) else p
                    for p in positions], dtype=complex)
    n = z.size
    if n < 3:
        return ImageClusters(np.zeros(n, dtype=int), math.inf)
    Z = linkage(np.column_stack([z.real, z.imag]), method="single")
    h = Z[:, 2]
    ratios = h[1:] / np.maximum(h[:-1], np.finfo(float).tiny)
    if n_clusters is None:
        k = int(np.argmax(ratios))
        n_clusters = n - 1 - k
    if not 1 <= n_clusters <= n:
        raise ValueError(f"n_clusters must lie in [1, {n}]")
    if n_clusters == 1:
        gap = math.inf
    elif n_clusters == n:
        gap = math.inf if h[0] > 0 else 0.0
    else:
        gap = float(ratios[n - 1 - n_clusters])
    raw = fcluster(Z, n_clusters, criterion="maxclust")
    _, first = np.unique(raw, return_index=True)
    order = {raw[i]: j for j, i in enumerate(sorted(first))}
    return ImageClusters(np.array([order[r] for r in raw]), gap)
