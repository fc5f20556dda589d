"""Compiled per-ray kernels used by the root finder.

A lens is packed into padded arrays so the kernels stay free of Python
objects. ``MULTILENS_THREADS`` caps the number of worker threads.
"""
from __future__ import annotations

import math
import os

import numba
import numpy as np
from numba import njit, prange

from .core import EXCLUSION_RADIUS

# the bundled TBB is too old for numba; avoid the probing warning
if "NUMBA_THREADING_LAYER" not in os.environ:
    numba.config.THREADING_LAYER = "workqueue"

_threads = os.environ.get("MULTILENS_THREADS")
if _threads:
    numba.set_num_threads(max(1, min(int(_threads), numba.config.NUMBA_NUM_THREADS)))


def pack(lens, upto: int | None = None):
    """Padded array form of the first ``upto`` planes of ``lens``."""
    K = lens.K if upto is None else upto
    gmax = max(p.g for p in lens.planes[:K])
    pos = np.zeros((K, gmax), dtype=np.complex128)
    b2 = np.zeros((K, gmax))
    gcount = np.zeros(K, dtype=np.int64)
    for i, plane in enumerate(lens.planes[:K]):
        pos[i, : plane.g] = plane.positions
        b2[i, : plane.g] = plane.b2
        gcount[i] = plane.g
    betas = np.asarray(lens.betas[:K], dtype=np.float64)
    eps = np.asarray(lens.eps_full[:K], dtype=np.float64)
    return pos, b2, gcount, betas, eps


@njit(cache=True)
def _trace1(pos, b2, gcount, betas, eps, z):
    """Trace one ray; returns (hit, D00, D01, D10, D11, blocked)."""
    prev = 0j
    d00, d01, d10, d11 = 1.0, 0.0, 0.0, 1.0
    p00, p01, p10, p11 = 0.0, 0.0, 0.0, 0.0
    for i in range(gcount.shape[0]):
        a = 0j
        gam = 0j
        for l in range(gcount[i]):
            d = z - pos[i, l]
            if abs(d) <= EXCLUSION_RADIUS:
                return complex(np.nan, np.nan), np.nan, np.nan, np.nan, np.nan, True
            inv = 1.0 / d.conjugate()
            a += b2[i, l] * inv
            gam += b2[i, l] * inv * inv
        a *= betas[i]
        gam *= betas[i]
        e = eps[i]
        nxt = z + e * (z - prev) - a
        gr = gam.real
        gi = gam.imag
        n00 = (1 + e) * d00 - e * p00 + gr * d00 + gi * d10
        n01 = (1 + e) * d01 - e * p01 + gr * d01 + gi * d11
        n10 = (1 + e) * d10 - e * p10 + gi * d00 - gr * d10
        n11 = (1 + e) * d11 - e * p11 + gi * d01 - gr * d11
        p00, p01, p10, p11 = d00, d01, d10, d11
        d00, d01, d10, d11 = n00, n01, n10, n11
        prev = z
        z = nxt
    return z, d00, d01, d10, d11, False


@njit(cache=True, parallel=True)
def newton(pos, b2, gcount, betas, eps, z0, targets, tol, max_iter, max_step, max_halvings):
    """Damped Newton from every seed in ``z0`` towards its target.

    A step is accepted only if it lowers the residual and keeps the ray
    unobstructed; otherwise it is halved up to ``max_halvings`` times.
    """
    n = z0.shape[0]
    out = np.empty(n, dtype=np.complex128)
    conv = np.zeros(n, dtype=np.bool_)
    for k in prange(n):
        z = z0[k]
        y = targets[k]
        hit, j00, j01, j10, j11, blocked = _trace1(pos, b2, gcount, betas, eps, z)
        out[k] = z
        if blocked:
            continue
        r = hit - y
        rn = abs(r)
        if not math.isfinite(rn):
            continue
        ok = rn <= tol
        it = 0
        while not ok and it < max_iter:
            it += 1
            det = j00 * j11 - j01 * j10
            if det == 0.0 or not math.isfinite(det):
                break
            su = -(j11 * r.real - j01 * r.imag) / det
            sv = -(-j10 * r.real + j00 * r.imag) / det
            step = complex(su, sv)
            sn = abs(step)
            if not math.isfinite(sn):
                break
            if sn > max_step:
                step *= max_step / sn
            t = 1.0
            accepted = False
            for _h in range(max_halvings + 1):
                trial = z + t * step
                th, t00, t01, t10, t11, tb = _trace1(pos, b2, gcount, betas, eps, trial)
                if not tb:
                    tr = th - y
                    trn = abs(tr)
                    if math.isfinite(trn) and trn < rn:
                        z = trial
                        r = tr
                        rn = trn
                        j00, j01, j10, j11 = t00, t01, t10, t11
                        accepted = True
                        break
                t *= 0.5
            if not accepted:
                break
            ok = rn <= tol
        out[k] = z
        conv[k] = ok
    return out, conv


@njit(cache=True, parallel=True)
def det_grid(pos, b2, gcount, betas, eps, xs, ys):
    """Lensing-map Jacobian determinant on the lattice ``xs x ys``.

    Returns an array of shape (len(ys), len(xs)); obstructed vertices are NaN.
    """
    out = np.empty((ys.shape[0], xs.shape[0]))
    for i in prange(ys.shape[0]):
        for j in range(xs.shape[0]):
            _, a, b, c, d, blocked = _trace1(pos, b2, gcount, betas, eps, complex(xs[j], ys[i]))
            out[i, j] = np.nan if blocked else a * d - b * c
    return out


@njit(cache=True, parallel=True)
def det_points(pos, b2, gcount, betas, eps, z):
    out = np.empty(z.shape[0])
    for k in prange(z.shape[0]):
        _, a, b, c, d, blocked = _trace1(pos, b2, gcount, betas, eps, z[k])
        out[k] = np.nan if blocked else a * d - b * c
    return out
