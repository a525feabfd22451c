"""Nelder-Mead simplex maximization (standard coefficients 1, 2, 1/2, 1/2).

``nelder_mead`` runs as plain Python on any callable ``f(x, args)``;
``nelder_mead_jit`` is the same source compiled by numba and needs ``f`` to be
a numba-compiled function. The initial simplex and the stopping rule follow
scipy's implementation: a run converges once the vertex spread is within
``xatol`` and the function spread within ``fatol``.

Helpers are compiled so both modes can call them; explicit loops keep the
compile time of the numba specialization low.
"""

import math

import numba
import numpy as np


@numba.njit(cache=True)
def _sort_simplex(sim, fs):
    # Stable insertion sort of vertices by value, in place.
    for i in range(1, fs.shape[0]):
        j = i
        while j > 0 and fs[j - 1] > fs[j]:
            fs[j - 1], fs[j] = fs[j], fs[j - 1]
            for k in range(sim.shape[1]):
                sim[j - 1, k], sim[j, k] = sim[j, k], sim[j - 1, k]
            j -= 1


@numba.njit(cache=True)
def _centroid_step(sim, c):
    # xbar + c * (xbar - worst), with xbar the centroid of all but the worst.
    n = sim.shape[1]
    out = np.empty(n)
    for k in range(n):
        xbar = 0.0
        for j in range(n):
            xbar += sim[j, k]
        xbar /= n
        out[k] = xbar + c * (xbar - sim[n, k])
    return out


@numba.njit(cache=True)
def _converged(sim, fs, fatol, xatol):
    n = sim.shape[1]
    for j in range(1, n + 1):
        if abs(fs[j] - fs[0]) > fatol:
            return False
        for k in range(n):
            if abs(sim[j, k] - sim[0, k]) > xatol:
                return False
    return True


@numba.njit(cache=True)
def _cost(v):
    # Minimized quantity; non-finite objective values rank last.
    if math.isfinite(v):
        return -v
    return math.inf


def nelder_mead(f, args, x0, fatol, xatol, maxiter, maxfev):
    """Maximize ``f(x, args)`` from ``x0``.

    Returns ``(x, value, iterations, evaluations, status)`` with status 0
    converged, 1 evaluation cap, 2 iteration cap.
    """
    n = x0.shape[0]
    sim = np.empty((n + 1, n))
    fs = np.empty(n + 1)
    for k in range(n):
        sim[0, k] = x0[k]
    for j in range(1, n + 1):
        for k in range(n):
            sim[j, k] = x0[k]
        if x0[j - 1] != 0.0:
            sim[j, j - 1] = 1.05 * x0[j - 1]
        else:
            sim[j, j - 1] = 0.00025
    for j in range(n + 1):
        fs[j] = _cost(f(sim[j], args))
    nfev = n + 1
    _sort_simplex(sim, fs)

    status = 2
    it = 1
    while it < maxiter:
        if nfev >= maxfev:
            status = 1
            break
        if _converged(sim, fs, fatol, xatol):
            status = 0
            break
        xr = _centroid_step(sim, 1.0)
        fxr = _cost(f(xr, args))
        nfev += 1
        shrink = False
        if fxr < fs[0]:
            xe = _centroid_step(sim, 2.0)
            fxe = _cost(f(xe, args))
            nfev += 1
            if fxe < fxr:
                sim[n] = xe
                fs[n] = fxe
            else:
                sim[n] = xr
                fs[n] = fxr
        elif fxr < fs[n - 1]:
            sim[n] = xr
            fs[n] = fxr
        elif fxr < fs[n]:
            xc = _centroid_step(sim, 0.5)
            fxc = _cost(f(xc, args))
            nfev += 1
            if fxc <= fxr:
                sim[n] = xc
                fs[n] = fxc
            else:
                shrink = True
        else:
            xcc = _centroid_step(sim, -0.5)
            fxcc = _cost(f(xcc, args))
            nfev += 1
            if fxcc < fs[n]:
                sim[n] = xcc
                fs[n] = fxcc
            else:
                shrink = True
        if shrink:
            for j in range(1, n + 1):
                for k in range(n):
                    sim[j, k] = sim[0, k] + 0.5 * (sim[j, k] - sim[0, k])
                fs[j] = _cost(f(sim[j], args))
            nfev += n
        _sort_simplex(sim, fs)
        it += 1
    return sim[0].copy(), -fs[0], it, nfev, status


nelder_mead_jit = numba.njit(nelder_mead)
