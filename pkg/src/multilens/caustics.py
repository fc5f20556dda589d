"""Critical curves, caustics and caustic multiplicity.

Critical curves are extracted by marching squares on the determinant of the
lensing-map Jacobian, with every edge crossing refined by bisection on the
exact determinant. Caustics are their pointwise images under the lensing map.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels
from .core import MultiplaneLens, PlanePoint, trace_batch

__all__ = [
    "Window",
    "Polyline",
    "CurveSet",
    "OpenContourWarning",
    "det_on_grid",
    "critical_curves",
    "map_to_caustics",
    "group_by_caustic",
    "hausdorff",
    "curve_set",
]

EDGE_BISECTIONS = 10
GROUP_TOL_FACTOR = 3.0


class OpenContourWarning(UserWarning):
    """A critical curve leaves the sampling window."""


@dataclass(frozen=True)
class Window:
    xmin: float
    xmax: float
    ymin: float
    ymax: float

    def __post_init__(self):
        if not (self.xmax > self.xmin and self.ymax > self.ymin):
            raise ValueError(f"empty window {self}")

    @classmethod
    def square(cls, half_width: float, center=(0.0, 0.0)) -> "Window":
        cx, cy = center
        return cls(cx - half_width, cx + half_width, cy - half_width, cy + half_width)

    @classmethod
    def of(cls, value) -> "Window":
        if isinstance(value, Window):
            return value
        if np.isscalar(value):
            return cls.square(float(value))
        if len(value) == 4:
            return cls(*map(float, value))
        raise ValueError(f"cannot interpret {value!r} as a window")

    def spacing(self, grid_n: int) -> float:
        return max(self.xmax - self.xmin, self.ymax - self.ymin) / (grid_n - 1)


@dataclass
class Polyline:
    """Ordered vertices, stored as an (n, 2) array."""

    xy: np.ndarray
    closed: bool = False
    exits_window: bool = False

    def __post_init__(self):
        self.xy = np.asarray(self.xy, dtype=float).reshape(-1, 2)
        if len(self.xy) < 2:
            raise ValueError("a polyline needs at least two points")

    @property
    def points(self) -> list[PlanePoint]:
        return [PlanePoint(u, v) for u, v in self.xy]

    @property
    def z(self) -> np.ndarray:
        return self.xy[:, 0] + 1j * self.xy[:, 1]

    def segments(self) -> tuple[np.ndarray, np.ndarray]:
        a = self.xy
        b = np.roll(a, -1, axis=0)
        if not self.closed:
            a, b = a[:-1], b[:-1]
        return a, b

    def segment_lengths(self) -> np.ndarray:
        a, b = self.segments()
        return np.hypot(*(b - a).T)

    @property
    def diameter(self) -> float:
        z = self.z
        return float(np.abs(z[:, None] - z[None, :]).max()) if len(z) <= 4000 else float(
            np.ptp(self.xy, axis=0).max() * np.sqrt(2))

    def __len__(self):
        return len(self.xy)


@dataclass
class CurveSet:
    critical: list[Polyline]
    caustic: list[Polyline]
    multiplicity_groups: list[list[int]] = field(default_factory=list)
    window: Window | None = None
    grid_n: int = 0

    @property
    def multiplicities(self) -> list[int]:
        return [len(g) for g in self.multiplicity_groups]


# ---------------------------------------------------------------------------
# critical curves


def det_on_grid(lens: MultiplaneLens, window, grid_n: int):
    """Jacobian determinant on a ``grid_n x grid_n`` lattice; returns (xs, ys, det)."""
    w = Window.of(window)
    xs = np.linspace(w.xmin, w.xmax, grid_n)
    ys = np.linspace(w.ymin, w.ymax, grid_n)
    return xs, ys, _kernels.det_grid(*_kernels.pack(lens), xs, ys)


def _det_at(lens: MultiplaneLens, z: np.ndarray) -> np.ndarray:
    return _kernels.det_points(*_kernels.pack(lens), np.ascontiguousarray(z, dtype=complex))


def _refine(lens, za, zb, da):
    """Bisect the determinant sign change on each segment [za, zb]."""
    sa = da > 0
    for _ in range(EDGE_BISECTIONS):
        zm = 0.5 * (za + zb)
        dm = _det_at(lens, zm)
        # NaN midpoints (obstructed) are treated as the b side
        same = (dm > 0) == sa
        za = np.where(same, zm, za)
        zb = np.where(same, zb, zm)
        da = np.where(same, dm, da)
    db = _det_at(lens, zb)
    with np.errstate(invalid="ignore", divide="ignore"):
        t = da / (da - db)
    t = np.where(np.isfinite(t) & (t >= 0) & (t <= 1), t, 0.5)
    return za + t * (zb - za)


def critical_curves(lens: MultiplaneLens, window, grid_n: int = 512) -> list[Polyline]:
    """Zero set of the lensing-map Jacobian determinant inside ``window``.

    Cells with an obstructed corner are skipped. Curves leaving the window
    come back open and flagged, with an :class:`OpenContourWarning`.
    """
    if grid_n < 64:
        raise ValueError("grid_n must be at least 64")
    w = Window.of(window)
    xs, ys, D = det_on_grid(lens, w, grid_n)
    n = grid_n
    fin = np.isfinite(D)
    P = D > 0

    # horizontal edges (i, j)-(i, j+1) and vertical edges (i, j)-(i+1, j)
    h_cross = fin[:, :-1] & fin[:, 1:] & (P[:, :-1] != P[:, 1:])
    v_cross = fin[:-1, :] & fin[1:, :] & (P[:-1, :] != P[1:, :])
    nh = n * (n - 1)

    def hid(i, j):
        return i * (n - 1) + j

    def vid(i, j):
        return nh + i * n + j

    hi, hj = np.nonzero(h_cross)
    vi, vj = np.nonzero(v_cross)
    ids = np.concatenate([hid(hi, hj), vid(vi, vj)])
    if ids.size == 0:
        return []
    za = np.concatenate([xs[hj] + 1j * ys[hi], xs[vj] + 1j * ys[vi]])
    zb = np.concatenate([xs[hj + 1] + 1j * ys[hi], xs[vj] + 1j * ys[vi + 1]])
    da = np.concatenate([D[hi, hj], D[vi, vj]])
    pts = _refine(lens, za, zb, da)
    point_of = dict(zip(ids.tolist(), pts.tolist()))

    # cells with every corner finite and at least one crossing
    cell_ok = fin[:-1, :-1] & fin[:-1, 1:] & fin[1:, :-1] & fin[1:, 1:]
    bottom, top = h_cross[:-1, :], h_cross[1:, :]
    left, right = v_cross[:, :-1], v_cross[:, 1:]
    ncross = bottom.astype(int) + top + left + right
    ci, cj = np.nonzero(cell_ok & (ncross > 0))

    saddle = ncross[ci, cj] == 4
    centre_pos = np.zeros(ci.size, dtype=bool)
    if saddle.any():
        zc = 0.5 * (xs[cj[saddle]] + xs[cj[saddle] + 1]) + 0.5j * (ys[ci[saddle]] + ys[ci[saddle] + 1])
        centre_pos[saddle] = _det_at(lens, zc) > 0

    adj: dict[int, list[int]] = {}

    def link(a, b):
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, []).append(a)

    for k in range(ci.size):
        i, j = int(ci[k]), int(cj[k])
        eb, et, el, er = hid(i, j), hid(i + 1, j), vid(i, j), vid(i, j + 1)
        if saddle[k]:
            if centre_pos[k] == P[i, j]:
                link(eb, er)
                link(et, el)
            else:
                link(eb, el)
                link(et, er)
        else:
            present = [e for e, c in ((eb, bottom[i, j]), (et, top[i, j]), (el, left[i, j]), (er, right[i, j])) if c]
            if len(present) == 2:
                link(*present)

    def on_boundary(e):
        if e < nh:
            i, j = divmod(e, n - 1)
            return i == 0 or i == n - 1
        i, j = divmod(e - nh, n)
        return j == 0 or j == n - 1

    visited: set[int] = set()
    curves: list[Polyline] = []
    exits = False

    def walk(start):
        chain = [start]
        visited.add(start)
        prev, cur = None, start
        while True:
            nxt = [m for m in adj[cur] if m != prev and m not in visited]
            if not nxt:
                closed = len(chain) > 2 and start in adj[cur] and cur != start
                return chain, closed
            prev, cur = cur, nxt[0]
            visited.add(cur)
            chain.append(cur)

    nodes = sorted(adj)
    for start in [e for e in nodes if len(adj[e]) == 1] + nodes:
        if start in visited:
            continue
        chain, closed = walk(start)
        z = np.array([point_of[e] for e in chain])
        keep = np.ones(z.size, dtype=bool)
        keep[1:] = z[1:] != z[:-1]
        z = z[keep]
        if closed and z.size > 1 and z[0] == z[-1]:
            z = z[:-1]
        if z.size < 2:
            continue
        leaves = not closed and (on_boundary(chain[0]) or on_boundary(chain[-1]))
        exits |= leaves
        curves.append(Polyline(np.column_stack([z.real, z.imag]), closed=closed, exits_window=leaves))
    if exits:
        warnings.warn("a critical curve leaves the sampling window; kept as an open polyline",
                      OpenContourWarning, stacklevel=2)
    return curves


def map_to_caustics(lens: MultiplaneLens, critical: Sequence[Polyline]) -> list[Polyline | None]:
    """Image of each critical polyline under the lensing map.

    Obstructed vertices are dropped with a warning; a curve with fewer than
    two surviving vertices maps to None.
    """
    out: list[Polyline | None] = []
    dropped = 0
    for pl in critical:
        bt = trace_batch(lens, pl.z)
        ok = bt.ok
        dropped += int((~ok).sum())
        w = bt.hit[ok]
        out.append(Polyline(np.column_stack([w.real, w.imag]), closed=pl.closed,
                            exits_window=pl.exits_window) if w.size >= 2 else None)
    if dropped:
        warnings.warn(f"{dropped} obstructed critical-curve vertices dropped", RuntimeWarning, stacklevel=2)
    return out


# ---------------------------------------------------------------------------
# grouping


def _point_to_polyline(p: np.ndarray, pl: Polyline, chunk: int = 2048) -> np.ndarray:
    a, b = pl.segments()
    if len(a) == 0:
        return np.hypot(*(p - pl.xy[0]).T)
    ab = b - a
    L2 = np.einsum("ij,ij->i", ab, ab)
    L2 = np.where(L2 > 0, L2, 1.0)
    out = np.empty(len(p))
    for s in range(0, len(p), chunk):
        q = p[s:s + chunk, None, :]
        t = np.clip(np.einsum("pmj,mj->pm", q - a, ab) / L2, 0.0, 1.0)
        proj = a + t[..., None] * ab
        out[s:s + chunk] = np.sqrt(((q - proj) ** 2).sum(-1)).min(axis=1)
    return out


def hausdorff(A: Polyline, B: Polyline) -> float:
    """Symmetric Hausdorff distance between two polylines (vertex to segment)."""
    return float(max(_point_to_polyline(A.xy, B).max(), _point_to_polyline(B.xy, A).max()))


def _footprint(pl: Polyline) -> float:
    seg = pl.segment_lengths()
    return float(np.median(seg)) if seg.size else 0.0


def group_by_caustic(curves: CurveSet | Sequence[Polyline | None], tol: float | None = None) -> list[list[int]]:
    """Single-linkage groups of caustics within Hausdorff distance ``tol``.

    By default each pair uses three times the larger median vertex spacing
    of the two caustics. Missing caustics (None) form singleton groups.
    """
    caustics = curves.caustic if isinstance(curves, CurveSet) else list(curves)
    n = len(caustics)
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    boxes = [None if c is None else (c.xy.min(axis=0), c.xy.max(axis=0)) for c in caustics]
    foot = [0.0 if c is None else _footprint(c) for c in caustics]
    for i in range(n):
        for j in range(i + 1, n):
            if caustics[i] is None or caustics[j] is None:
                continue
            t = tol if tol is not None else GROUP_TOL_FACTOR * max(foot[i], foot[j])
            if np.any(np.abs(boxes[i][0] - boxes[j][0]) > t) or np.any(np.abs(boxes[i][1] - boxes[j][1]) > t):
                continue
            if find(i) != find(j) and hausdorff(caustics[i], caustics[j]) <= t:
                parent[find(j)] = find(i)
    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return sorted(groups.values(), key=lambda g: g[0])


def curve_set(lens: MultiplaneLens, window, grid_n: int = 512, tol: float | None = None) -> CurveSet:
    """Critical curves, caustics and multiplicity groups in one go."""
    w = Window.of(window)
    crit = critical_curves(lens, w, grid_n)
    caus = map_to_caustics(lens, crit)
    pairs = [(c, k) for c, k in zip(crit, caus) if k is not None]
    cs = CurveSet([c for c, _ in pairs], [k for _, k in pairs], window=w, grid_n=grid_n)
    cs.multiplicity_groups = group_by_caustic(cs, tol)
    return cs
