"""Domain types, deflection field and backward ray tracing for multiplane
point-mass lenses.

Positions are handled internally as complex numbers ``u + iv`` so that whole
lattices of rays can be traced with a single vectorised pass. The public
API speaks in :class:`PlanePoint` and real 2x2 Jacobians.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "EXCLUSION_RADIUS",
    "ObstructionError",
    "PlanePoint",
    "PointMass",
    "LensPlane",
    "MultiplaneLens",
    "RayPath",
    "LensedImage",
    "deflection",
    "deflection_jacobian",
    "trace",
    "system_residual",
    "system_jacobian",
    "lens_map",
    "lens_map_jacobian",
    "trace_batch",
]

# A ray closer than this to a deflector counts as hitting it.
EXCLUSION_RADIUS = 1e-9


class ObstructionError(ValueError):
    """A traced ray came within the exclusion radius of a point mass."""

    def __init__(self, plane_index: int, message: str | None = None):
        self.plane_index = plane_index
        super().__init__(message or f"ray obstructed by a deflector in plane {plane_index + 1}")


@dataclass(frozen=True)
class PlanePoint:
    u: float
    v: float

    def __post_init__(self):
        u, v = float(self.u), float(self.v)
        if not (math.isfinite(u) and math.isfinite(v)):
            raise ValueError(f"non-finite plane point ({self.u}, {self.v})")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @classmethod
    def of(cls, value) -> "PlanePoint":
        """Coerce a PlanePoint, complex number or 2-sequence."""
        if isinstance(value, PlanePoint):
            return value
        if isinstance(value, complex):
            return cls(value.real, value.imag)
        u, v = value
        return cls(u, v)

    def __iter__(self):
        yield self.u
        yield self.v

    def as_array(self) -> np.ndarray:
        return np.array([self.u, self.v])

    def as_complex(self) -> complex:
        return complex(self.u, self.v)

    def __abs__(self) -> float:
        return math.hypot(self.u, self.v)


ORIGIN = PlanePoint(0.0, 0.0)


@dataclass(frozen=True)
class PointMass:
    position: PlanePoint
    einstein_radius: float

    def __post_init__(self):
        object.__setattr__(self, "position", PlanePoint.of(self.position))
        b = float(self.einstein_radius)
        if not math.isfinite(b) or b < 0:
            raise ValueError(f"einstein_radius must be finite and >= 0, got {self.einstein_radius}")
        object.__setattr__(self, "einstein_radius", b)


@dataclass(frozen=True)
class LensPlane:
    masses: tuple[PointMass, ...]

    def __post_init__(self):
        masses = tuple(self.masses)
        if not masses:
            raise ValueError("a lens plane needs at least one mass")
        object.__setattr__(self, "masses", masses)
        z = self.positions
        if len(z) > 1:
            sep = np.abs(z[:, None] - z[None, :])
            sep[np.diag_indices(len(z))] = np.inf
            if sep.min() <= 0:
                raise ValueError("mass positions within a plane must be distinct")

    @classmethod
    def from_arrays(cls, positions: Iterable, einstein_radii: Iterable[float]) -> "LensPlane":
        return cls(tuple(PointMass(PlanePoint.of(p), b) for p, b in zip(positions, einstein_radii)))

    @property
    def g(self) -> int:
        return len(self.masses)

    @cached_property
    def positions(self) -> np.ndarray:
        """Complex mass positions, shape (g,)."""
        return np.array([m.position.as_complex() for m in self.masses], dtype=complex)

    @cached_property
    def b2(self) -> np.ndarray:
        """Squared Einstein radii, shape (g,)."""
        return np.array([m.einstein_radius**2 for m in self.masses], dtype=float)

    @property
    def outer_radius(self) -> float:
        return float(np.abs(self.positions).max())


@dataclass(frozen=True)
class MultiplaneLens:
    """Ordered lens planes plus the coupling constants of the ray recursion.

    ``epsilons`` holds the couplings for planes 2..K; the first plane has no
    coupling and nothing is stored for it.
    """

    planes: tuple[LensPlane, ...]
    source: PlanePoint = ORIGIN
    betas: tuple[float, ...] | None = None
    epsilons: tuple[float, ...] | None = None

    def __post_init__(self):
        planes = tuple(self.planes)
        if not planes:
            raise ValueError("a lens needs at least one plane")
        K = len(planes)
        betas = tuple(float(b) for b in (self.betas if self.betas is not None else [1.0] * K))
        eps = tuple(float(e) for e in (self.epsilons if self.epsilons is not None else [0.0] * (K - 1)))
        if len(betas) != K:
            raise ValueError(f"betas must have length {K}, got {len(betas)}")
        if len(eps) != K - 1:
            raise ValueError(f"epsilons must have length {K - 1}, got {len(eps)}")
        if any(not (b > 0 and math.isfinite(b)) for b in betas):
            raise ValueError("betas must be finite and > 0")
        if any(not (e >= 0 and math.isfinite(e)) for e in eps):
            raise ValueError("epsilons must be finite and >= 0")
        object.__setattr__(self, "planes", planes)
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "epsilons", eps)
        object.__setattr__(self, "source", PlanePoint.of(self.source))

    @property
    def K(self) -> int:
        return len(self.planes)

    @property
    def g_list(self) -> list[int]:
        return [p.g for p in self.planes]

    @cached_property
    def eps_full(self) -> np.ndarray:
        """Couplings for all K planes, the first one identically zero."""
        return np.concatenate([[0.0], np.asarray(self.epsilons, dtype=float)])

    def with_source(self, source) -> "MultiplaneLens":
        return replace(self, source=PlanePoint.of(source))

    def with_epsilons(self, epsilons: Sequence[float]) -> "MultiplaneLens":
        return replace(self, epsilons=tuple(epsilons))


@dataclass(frozen=True)
class RayPath:
    impacts: tuple[PlanePoint, ...]
    source_hit: PlanePoint
    residual_norm: float

    @property
    def x1(self) -> PlanePoint:
        return self.impacts[0]


@dataclass(frozen=True)
class LensedImage:
    path: RayPath
    lens_map_jacobian_det: float
    parity: int = 0
    morse_type: str = "unavailable"

    @property
    def position(self) -> PlanePoint:
        return self.path.impacts[0]


# ---------------------------------------------------------------------------
# vectorised kernels (complex arrays)


def _deflect(plane: LensPlane, z: np.ndarray, beta: float = 1.0, jac: bool = False):
    """Bending angle of ``plane`` at complex positions ``z``.

    Returns ``(alpha, gamma, dmin)`` where ``alpha`` is complex, ``gamma`` is
    the complex shear ``sum b^2 / conj(d)^2`` (so that the real Jacobian is
    ``[[-Re g, -Im g], [-Im g, Re g]]``) or None, and ``dmin`` is the distance
    to the nearest mass.
    """
    d = z[..., None] - plane.positions
    dist = np.abs(d)
    dmin = dist.min(axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / np.conj(d)
        alpha = beta * (plane.b2 * inv).sum(axis=-1)
        gamma = beta * (plane.b2 * inv * inv).sum(axis=-1) if jac else None
    return alpha, gamma, dmin


def _gamma_to_matrix(gamma: np.ndarray) -> np.ndarray:
    """Real 2x2 matrices ``[[-Re g, -Im g], [-Im g, Re g]]`` stacked on the last two axes."""
    out = np.empty(gamma.shape + (2, 2))
    out[..., 0, 0] = -gamma.real
    out[..., 0, 1] = -gamma.imag
    out[..., 1, 0] = -gamma.imag
    out[..., 1, 1] = gamma.real
    return out


@dataclass
class BatchTrace:
    """Result of tracing many rays at once.

    ``impacts`` has shape (K, N) (complex), ``hit`` shape (N,), ``jac``
    shape (N, 2, 2) or None, and ``blocked`` holds the 0-based plane index
    where each ray was obstructed, or -1.
    """

    impacts: np.ndarray
    hit: np.ndarray
    jac: np.ndarray | None
    blocked: np.ndarray = field(default=None)

    @property
    def ok(self) -> np.ndarray:
        return self.blocked < 0


def trace_batch(lens: MultiplaneLens, z1, jac: bool = False, upto: int | None = None) -> BatchTrace:
    """Trace rays from complex plane-1 positions ``z1`` through the lens.

    ``upto`` stops after that many planes (the returned ``hit`` is then the
    position on plane ``upto + 1``). Obstructed rays get NaN coordinates.
    """
    z1 = np.asarray(z1, dtype=complex)
    shape = z1.shape
    z = z1.ravel().copy()
    n = z.size
    K = lens.K if upto is None else upto
    eps = lens.eps_full
    blocked = np.full(n, -1, dtype=int)
    impacts = np.empty((K, n), dtype=complex)
    prev = np.zeros(n, dtype=complex)
    if jac:
        D = np.zeros((n, 2, 2))
        D[:, 0, 0] = D[:, 1, 1] = 1.0
        Dprev = np.zeros((n, 2, 2))
    for i in range(K):
        impacts[i] = z
        alpha, gamma, dmin = _deflect(lens.planes[i], z, lens.betas[i], jac)
        newly = (dmin <= EXCLUSION_RADIUS) & (blocked < 0)
        blocked[newly] = i
        nxt = z + eps[i] * (z - prev) - alpha
        if jac:
            Dnext = (1.0 + eps[i]) * D - eps[i] * Dprev - _gamma_to_matrix(gamma) @ D
            Dprev, D = D, Dnext
        prev, z = z, nxt
    bad = blocked >= 0
    if bad.any():
        z[bad] = np.nan
        impacts[:, bad] = np.nan
        if jac:
            D[bad] = np.nan
    return BatchTrace(
        impacts=impacts.reshape((K,) + shape),
        hit=z.reshape(shape),
        jac=D.reshape(shape + (2, 2)) if jac else None,
        blocked=blocked.reshape(shape),
    )


# ---------------------------------------------------------------------------
# scalar API


def _pt(z: complex) -> PlanePoint:
    return PlanePoint(z.real, z.imag)


def deflection(plane: LensPlane, x) -> PlanePoint:
    """Bending angle ``sum b^2 (x - xi) / |x - xi|^2`` of one plane."""
    z = np.array([PlanePoint.of(x).as_complex()])
    alpha, _, dmin = _deflect(plane, z)
    if dmin[0] <= EXCLUSION_RADIUS:
        raise ObstructionError(0)
    return _pt(complex(alpha[0]))


def deflection_jacobian(plane: LensPlane, x) -> np.ndarray:
    z = np.array([PlanePoint.of(x).as_complex()])
    _, gamma, dmin = _deflect(plane, z, jac=True)
    if dmin[0] <= EXCLUSION_RADIUS:
        raise ObstructionError(0)
    return _gamma_to_matrix(gamma[0])


def trace(lens: MultiplaneLens, x1) -> RayPath:
    """Trace one ray backward from plane 1 to the source plane."""
    bt = trace_batch(lens, np.array([PlanePoint.of(x1).as_complex()]))
    if bt.blocked[0] >= 0:
        raise ObstructionError(int(bt.blocked[0]))
    hit = complex(bt.hit[0])
    return RayPath(
        impacts=tuple(_pt(complex(z)) for z in bt.impacts[:, 0]),
        source_hit=_pt(hit),
        residual_norm=abs(hit - lens.source.as_complex()),
    )


def lens_map(lens: MultiplaneLens, x1) -> PlanePoint:
    return trace(lens, x1).source_hit


def lens_map_jacobian(lens: MultiplaneLens, x1) -> np.ndarray:
    """Real 2x2 Jacobian of the lensing map at ``x1``."""
    bt = trace_batch(lens, np.array([PlanePoint.of(x1).as_complex()]), jac=True)
    if bt.blocked[0] >= 0:
        raise ObstructionError(int(bt.blocked[0]))
    return bt.jac[0]


def _impact_array(lens: MultiplaneLens, xs) -> np.ndarray:
    xs = [PlanePoint.of(x).as_complex() for x in xs]
    if len(xs) != lens.K:
        raise ValueError(f"expected {lens.K} plane positions, got {len(xs)}")
    return np.array(xs, dtype=complex)


def system_residual(lens: MultiplaneLens, xs) -> np.ndarray:
    """Stacked residuals of the full 2K-dimensional lens system.

    Row block i is ``(1 + eps_i) x_i - eps_i x_{i-1} - beta_i alpha_i(x_i) - x_{i+1}``
    with ``x_{K+1}`` the source position.
    """
    z = _impact_array(lens, xs)
    nxt = np.append(z[1:], lens.source.as_complex())
    prev = np.concatenate([[0.0], z[:-1]])
    out = np.empty(2 * lens.K)
    for i, plane in enumerate(lens.planes):
        alpha, _, dmin = _deflect(plane, z[i : i + 1], lens.betas[i])
        if dmin[0] <= EXCLUSION_RADIUS:
            raise ObstructionError(i)
        f = (1 + lens.eps_full[i]) * z[i] - lens.eps_full[i] * prev[i] - alpha[0] - nxt[i]
        out[2 * i], out[2 * i + 1] = f.real, f.imag
    return out


def system_jacobian(lens: MultiplaneLens, xs) -> np.ndarray:
    """Block-tridiagonal 2K x 2K Jacobian of :func:`system_residual`."""
    z = _impact_array(lens, xs)
    K = lens.K
    J = np.zeros((2 * K, 2 * K))
    eye = np.eye(2)
    for i, plane in enumerate(lens.planes):
        _, gamma, dmin = _deflect(plane, z[i : i + 1], lens.betas[i], jac=True)
        if dmin[0] <= EXCLUSION_RADIUS:
            raise ObstructionError(i)
        e = lens.eps_full[i]
        J[2 * i : 2 * i + 2, 2 * i : 2 * i + 2] = (1 + e) * eye - _gamma_to_matrix(gamma[0])
        if i + 1 < K:
            J[2 * i : 2 * i + 2, 2 * i + 2 : 2 * i + 4] = -eye
        if i > 0:
            J[2 * i : 2 * i + 2, 2 * i - 2 : 2 * i] = -e * eye
    return J
