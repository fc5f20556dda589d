"""FLRW distances in Hubble units and the distance-ratio couplings of the
multiplane lens equation."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.integrate import quad

__all__ = [
    "Cosmology",
    "PlaneRedshifts",
    "comoving_distance",
    "transverse_comoving",
    "transverse_distance",
    "angular_diameter",
    "plane_parameters",
    "bending_scale",
    "realize_small_epsilon",
    "SmallEpsilonRealization",
    "EDS",
]

QUAD_EPSABS = 1e-10
FLAT_TOL = 1e-12
LIMIT_OFFSET = 1e-6


@dataclass(frozen=True)
class Cosmology:
    omega_m: float
    omega_lambda: float

    def __post_init__(self):
        if not self.omega_m >= 0:
            raise ValueError("omega_m must be >= 0")

    @property
    def omega_k(self) -> float:
        return 1.0 - self.omega_m - self.omega_lambda

    @property
    def is_flat(self) -> bool:
        return abs(self.omega_k) <= FLAT_TOL

    def e2(self, z):
        """Squared dimensionless expansion rate at redshift ``z``."""
        zp = 1.0 + np.asarray(z, dtype=float)
        return self.omega_m * zp**3 + self.omega_k * zp**2 + self.omega_lambda


EDS = Cosmology(1.0, 0.0)


@dataclass(frozen=True)
class PlaneRedshifts:
    """Lens-plane redshifts followed by the source redshift."""

    zs: tuple[float, ...]

    def __post_init__(self):
        zs = tuple(float(z) for z in self.zs)
        if len(zs) < 2:
            raise ValueError("need at least one lens plane and a source redshift")
        if zs[0] <= 0:
            raise ValueError("redshifts must be positive")
        if any(b <= a for a, b in zip(zs, zs[1:])):
            raise ValueError(f"redshifts must be strictly increasing, got {zs}")
        object.__setattr__(self, "zs", zs)

    @property
    def K(self) -> int:
        return len(self.zs) - 1


def comoving_distance(c: Cosmology, z1: float, z2: float) -> float:
    """Line-of-sight comoving distance between two redshifts."""
    if not 0 <= z1 <= z2:
        raise ValueError(f"need 0 <= z1 <= z2, got {z1}, {z2}")
    if z1 == z2:
        return 0.0
    probe = np.linspace(z1, z2, 257)
    if np.min(c.e2(probe)) <= 0:
        raise ValueError(f"expansion rate radicand is not positive on [{z1}, {z2}] for {c}")
    val, _ = quad(lambda z: 1.0 / math.sqrt(c.e2(z)), z1, z2, epsabs=QUAD_EPSABS, epsrel=1e-13, limit=200)
    return val


def transverse_comoving(c: Cosmology, dC: float) -> float:
    if dC < 0:
        raise ValueError("comoving distance must be >= 0")
    ok = c.omega_k
    if abs(ok) <= FLAT_TOL:
        return dC
    s = math.sqrt(abs(ok))
    if ok > 0:
        return math.sinh(s * dC) / s
    return math.sin(s * dC) / s


def transverse_distance(c: Cosmology, z1: float, z2: float) -> float:
    return transverse_comoving(c, comoving_distance(c, z1, z2))


def angular_diameter(c: Cosmology, z1: float, z2: float) -> float:
    return transverse_distance(c, z1, z2) / (1.0 + z2)


def plane_parameters(c: Cosmology, zr: PlaneRedshifts) -> tuple[list[float], list[float]]:
    """Distance-ratio couplings for every plane.

    Returns ``(betas, epsilons)``, each of length K; ``epsilons[0]`` is 0.
    """
    zs = (0.0,) + zr.zs  # observer at index 0, planes 1..K, source K+1
    K = zr.K

    def dM(a, b):
        return transverse_distance(c, zs[a], zs[b])

    betas = [dM(i, i + 1) / dM(0, i + 1) for i in range(1, K + 1)]
    eps = [0.0]
    for i in range(2, K + 1):
        if c.is_flat:
            e = dM(0, i - 1) * dM(i, i + 1) / (dM(i - 1, i) * dM(0, i + 1))
        else:
            e = dM(0, i) * dM(i - 1, i + 1) / (dM(i - 1, i) * dM(0, i + 1)) - 1.0
        eps.append(e)
    return betas, eps


def bending_scale(c: Cosmology, zr: PlaneRedshifts, i: int) -> float:
    """Distance factor ``dM_{i,i+1} / (dA_i dM_{i+1})`` multiplying the masses
    of plane ``i`` (1-based) in the bending term."""
    zs = (0.0,) + zr.zs
    return (transverse_distance(c, zs[i], zs[i + 1])
            / (angular_diameter(c, 0.0, zs[i]) * transverse_distance(c, 0.0, zs[i + 1])))


@dataclass(frozen=True)
class SmallEpsilonRealization:
    redshifts: PlaneRedshifts
    mass_factors: tuple[float, float]
    epsilon: float
    mode: str


def realize_small_epsilon(c: Cosmology, zr: PlaneRedshifts, target_eps: float,
                          mode: str = "foreground", xtol: float = 1e-14) -> SmallEpsilonRealization:
    """Move one redshift of a two-plane system so that eps_2 = ``target_eps``.

    ``foreground`` lowers z_1 towards the observer; ``background`` lowers the
    source redshift towards z_2. The returned mass factors rescale each
    plane's masses so its bending term keeps its original size.
    """
    if zr.K != 2:
        raise ValueError("only two-plane systems are supported")
    if not c.is_flat:
        raise ValueError("small-eps realisation assumes a flat cosmology")
    mode = mode.lower()
    if mode not in ("foreground", "background"):
        raise ValueError(f"unknown mode {mode!r}")
    z1, z2, z3 = zr.zs
    current = plane_parameters(c, zr)[1][1]
    if not 0 < target_eps <= current:
        raise ValueError(f"target eps must lie in (0, {current}], got {target_eps}")
    if target_eps == current:
        return SmallEpsilonRealization(zr, (1.0, 1.0), current, mode)

    if mode == "foreground":
        def config(t):
            return PlaneRedshifts((t, z2, z3))
        lo, hi = LIMIT_OFFSET, z1
    else:
        def config(t):
            return PlaneRedshifts((z1, z2, t))
        lo, hi = z2 + LIMIT_OFFSET, z3

    def excess(t):
        return plane_parameters(c, config(t))[1][1] - target_eps

    f_lo, f_hi = excess(lo), excess(hi)
    if not (f_lo < 0 < f_hi or f_lo == 0):
        raise ArithmeticError(
            f"eps_2 does not bracket {target_eps} on [{lo}, {hi}] ({f_lo + target_eps}, {f_hi + target_eps})")
    # plain bisection: eps_2 is monotone in the moved redshift for flat models
    a, b = lo, hi
    t = lo
    for _ in range(200):
        t = 0.5 * (a + b)
        f = excess(t)
        if abs(f) <= 1e-12 or b - a <= xtol:
            break
        if f < 0:
            a = t
        else:
            b = t
    new = config(t)
    eps_new = plane_parameters(c, new)[1][1]
    if abs(eps_new - target_eps) > 1e-8:
        raise ArithmeticError(f"bisection stalled at eps_2 = {eps_new}")
    factors = tuple(bending_scale(c, zr, i) / bending_scale(c, new, i) for i in (1, 2))
    return SmallEpsilonRealization(new, factors, eps_new, mode)
