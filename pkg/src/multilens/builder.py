"""Assemble K-plane lenses with prod(5 g_i - 5) images.

Planes are filled with Rhie ensembles, the uncoupled (eps = 0) system is made
to have the full product count by rescaling the tail planes from the back,
and the couplings are then switched on.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from .core import LensPlane, MultiplaneLens, PlanePoint
from .rhie import ConstructionError, max_source_radius, rhie_plane
from .solver import SolveOptions, _dedup, _single_plane_roots, solve

__all__ = [
    "ConstructionReport",
    "scale_plane",
    "scale_lens",
    "solution_radius",
    "back_substitute",
    "build_preliminary",
    "perturb_epsilon",
    "max_stable_epsilon",
]

log = logging.getLogger(__name__)

RADIUS_PAD = 1.25
EPS_BISECTIONS = 30
EPS_MARGIN = 1e-10
EPS_SAFETY = 0.5


@dataclass
class ConstructionReport:
    g_list: list[int]
    lambdas: list[float] = field(default_factory=list)
    plane_scales: list[float] = field(default_factory=list)
    deltas: list[float] = field(default_factory=list)
    radii: list[float] = field(default_factory=list)
    step_counts: list[int] = field(default_factory=list)
    expected_count: int = 0
    achieved_count_eps0: int = 0
    epsilon_used: list[float] = field(default_factory=list)
    rotations: list[float] = field(default_factory=list)
    central_b: list[float] = field(default_factory=list)
    mode: str = "auto"

    def to_dict(self) -> dict:
        return asdict(self)


def scale_plane(plane: LensPlane, lam: float) -> LensPlane:
    """Multiply every Einstein radius and mass position by ``lam``."""
    if not lam > 0:
        raise ValueError(f"scale factor must be > 0, got {lam}")
    return LensPlane.from_arrays(plane.positions * lam, np.sqrt(plane.b2) * lam)


def scale_lens(lens: MultiplaneLens, lam: float) -> MultiplaneLens:
    """Scale all planes and the source; image sets scale by the same factor
    when the couplings vanish."""
    src = lens.source
    return replace(lens, planes=tuple(scale_plane(p, lam) for p in lens.planes),
                   source=PlanePoint(lam * src.u, lam * src.v))


def back_substitute(lens: MultiplaneLens, opts: SolveOptions | None = None) -> np.ndarray:
    """All solutions of the uncoupled system, solved from the last plane back.

    Returns complex impacts of shape (n, K). Couplings in ``lens`` are
    ignored.
    """
    opts = opts or SolveOptions()
    rows = [np.array([], dtype=complex).reshape(1, 0)]
    current = np.array([lens.source.as_complex()])
    paths = np.empty((1, 0), dtype=complex)
    for i in reversed(range(lens.K)):
        roots = _single_plane_roots(lens.planes[i], lens.betas[i], current, opts, opts.grid_n)
        new_paths = []
        for k, r in enumerate(roots):
            for z in r:
                new_paths.append(np.concatenate([[z], paths[k]]))
        paths = np.array(new_paths, dtype=complex).reshape(len(new_paths), lens.K - i)
        current = paths[:, 0] if len(paths) else np.empty(0, dtype=complex)
    return paths


def solution_radius(images) -> float:
    """Padded radius of the disk holding the given positions.

    ``images`` holds the front-plane coordinates of the tail's solutions, as
    PlanePoints, LensedImages or complex numbers.
    """
    pts = []
    for im in images:
        if hasattr(im, "position"):
            im = im.position
        pts.append(abs(PlanePoint.of(im).as_complex()))
    if not pts:
        raise ValueError("no images to bound")
    return RADIUS_PAD * max(pts)


def _tail_count(planes: Sequence[LensPlane], opts: SolveOptions) -> tuple[int, np.ndarray]:
    paths = back_substitute(MultiplaneLens(tuple(planes)), opts)
    return len(paths), paths


def build_preliminary(g_list: Sequence[int], lambdas: Sequence[float] | None = None,
                      rotations: Sequence[float] | None = None,
                      opts: SolveOptions | None = None,
                      verify: bool = True) -> tuple[MultiplaneLens, ConstructionReport]:
    """Uncoupled K-plane lens whose source at the origin has prod(5 g_i - 5) images.

    Working backward from the last plane, each step bounds the front
    coordinate of the current tail's solutions by a radius R, finds a safe
    source radius delta for the plane in front, and rescales the whole tail
    by ``delta / R``. ``lambdas`` (length K - 1, step factors for planes
    2..K) bypasses the automatic choice.
    """
    g_list = [int(g) for g in g_list]
    if not g_list or any(g < 2 for g in g_list):
        raise ValueError("every plane needs g >= 2")
    K = len(g_list)
    rotations = list(rotations) if rotations is not None else [0.0] * K
    if len(rotations) != K:
        raise ValueError(f"need {K} rotations")
    if lambdas is not None and len(lambdas) != K - 1:
        raise ValueError(f"need {K - 1} scale factors, got {len(lambdas)}")
    opts = opts or SolveOptions()
    made = [rhie_plane(g, rotation=rot) for g, rot in zip(g_list, rotations)]
    planes = [p for p, _ in made]
    report = ConstructionReport(
        g_list=g_list,
        expected_count=math.prod(5 * g - 5 for g in g_list),
        rotations=rotations,
        central_b=[cfg.central_b for _, cfg in made],
        mode="auto" if lambdas is None else "explicit",
    )
    step_lams: list[float] = []
    running = 5 * g_list[-1] - 5
    for j in range(1, K):
        front = K - j  # 0-based index of the first plane of the current tail
        if lambdas is None:
            count, paths = _tail_count(planes[front:], opts)
            if count != running:
                raise ConstructionError(f"tail from plane {front + 1} has {count} solutions, expected {running}")
            R = solution_radius(paths[:, 0])
            delta = max_source_radius(planes[front - 1], 5 * g_list[front - 1] - 5)
            lam = delta / R
            report.radii.append(R)
            report.deltas.append(delta)
        else:
            lam = float(lambdas[front - 1])
        log.info("step %d: scaling planes %d..%d by %.6g", j, front + 1, K, lam)
        planes[front:] = [scale_plane(p, lam) for p in planes[front:]]
        step_lams.append(lam)
        running *= 5 * g_list[front - 1] - 5
        if verify:
            count, _ = _tail_count(planes[front - 1:], opts)
            report.step_counts.append(count)
            if count != running:
                raise ConstructionError(
                    f"after step {j} the tail from plane {front} has {count} solutions, expected {running}")
    # step factors listed front to back: planes 2..K
    report.lambdas = step_lams[::-1]
    report.plane_scales = [math.prod(report.lambdas[:i]) for i in range(K)]
    lens = MultiplaneLens(tuple(planes), source=PlanePoint(0.0, 0.0))
    report.epsilon_used = [0.0] * (K - 1)
    if verify:
        res = solve(lens, opts)
        report.achieved_count_eps0 = res.count
        if res.count != report.expected_count or res.suspect:
            raise ConstructionError(
                f"built lens has {res.count} images ({len(res.suspect)} degenerate), "
                f"expected {report.expected_count}")
    return lens, report


def perturb_epsilon(lens: MultiplaneLens, eps_values: Sequence[float]) -> MultiplaneLens:
    eps_values = list(eps_values)
    if len(eps_values) != lens.K - 1:
        raise ValueError(f"need {lens.K - 1} coupling values, got {len(eps_values)}")
    return lens.with_epsilons(eps_values)


def _eps_ok(lens: MultiplaneLens, eps: float, target: int, opts: SolveOptions) -> bool:
    res = solve(perturb_epsilon(lens, [eps] * (lens.K - 1)), opts)
    return not res.suspect and res.count == target and res.min_abs_det >= EPS_MARGIN


def max_stable_epsilon(lens: MultiplaneLens, target_count: int, opts: SolveOptions | None = None,
                       return_raw: bool = False):
    """Half the largest uniform coupling (found by bisection on [0, 1]) at
    which the image count is still ``target_count``."""
    opts = opts or SolveOptions()
    if lens.K == 1:
        return (0.0, 0.0) if return_raw else 0.0
    lo, hi = 0.0, 1.0
    if _eps_ok(lens, hi, target_count, opts):
        lo = hi
    else:
        for _ in range(EPS_BISECTIONS):
            mid = 0.5 * (lo + hi)
            if _eps_ok(lens, mid, target_count, opts):
                lo = mid
            else:
                hi = mid
    safe = EPS_SAFETY * lo
    return (safe, lo) if return_raw else safe
