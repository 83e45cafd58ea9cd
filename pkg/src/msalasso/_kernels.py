"""Hot loops: coordinate-descent sweeps and the AR(1) matrix-vector product.

Every kernel exists twice, as a numba ``@njit`` function and as a plain
numpy function with the same signature and semantics. The module-level
names (``cd_sweep``, ``cd_solve``, ``ar1_matvec``) point at the numba
versions unless numba is missing or ``MSALASSO_DISABLE_NUMBA`` is set to a
truthy value before import.

Arrays passed in are modified in place (``beta`` and ``r``); ``x`` should be
Fortran-ordered so columns are contiguous.
"""
from __future__ import annotations

import os

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

_FALSY = ("", "0", "false", "no", "off")
USE_NUMBA = HAVE_NUMBA and os.environ.get("MSALASSO_DISABLE_NUMBA", "").lower() in _FALSY
BACKEND = "numba" if USE_NUMBA else "numpy"


# ---------------------------------------------------------------- numpy path


def cd_sweep_numpy(x, r, beta, col_sq, pen, idx):
    """One cyclic pass over coordinates ``idx``; returns the max |change|."""
    max_delta = 0.0
    for j in idx:
        cs = col_sq[j]
        if cs == 0.0:
            continue
        xj = x[:, j]
        old = beta[j]
        z = xj @ r + cs * old
        pj = pen[j]
        if z > pj:
            new = (z - pj) / cs
        elif z < -pj:
            new = (z + pj) / cs
        else:
            new = 0.0
        delta = new - old
        if delta != 0.0:
            r -= delta * xj
            beta[j] = new
            if abs(delta) > max_delta:
                max_delta = abs(delta)
    return max_delta


def cd_solve_numpy(x, r, beta, col_sq, pen, tol, max_sweeps):
    """Active-set cyclic coordinate descent.

    A full sweep is followed by sweeps over the nonzero coordinates until
    they settle; the loop ends when a full sweep moves no coordinate by
    more than ``tol``. Returns ``(sweeps, converged)``.
    """
    everything = np.arange(x.shape[1])
    sweeps = 0
    while sweeps < max_sweeps:
        delta = cd_sweep_numpy(x, r, beta, col_sq, pen, everything)
        sweeps += 1
        if delta <= tol:
            return sweeps, True
        active = np.flatnonzero(beta)
        while sweeps < max_sweeps:
            delta = cd_sweep_numpy(x, r, beta, col_sq, pen, active)
            sweeps += 1
            if delta <= tol:
                break
    return sweeps, False


def ar1_matvec_numpy(v, rho):
    """``Sigma @ v`` for ``Sigma[i, j] = rho**|i-j|`` in O(p)."""
    p = v.shape[0]
    fwd = np.empty(p)
    bwd = np.empty(p)
    acc = 0.0
    for i in range(p):
        acc = v[i] + rho * acc
        fwd[i] = acc
    acc = 0.0
    for i in range(p - 1, -1, -1):
        acc = v[i] + rho * acc
        bwd[i] = acc
    return fwd + bwd - v


# ---------------------------------------------------------------- numba path

if HAVE_NUMBA:

    @njit(cache=True, nogil=True)
    def cd_sweep_numba(x, r, beta, col_sq, pen, idx):
        n = x.shape[0]
        max_delta = 0.0
        for k in range(idx.shape[0]):
            j = idx[k]
            cs = col_sq[j]
            if cs == 0.0:
                continue
            old = beta[j]
            z = 0.0
            for i in range(n):
                z += x[i, j] * r[i]
            z += cs * old
            pj = pen[j]
            if z > pj:
                new = (z - pj) / cs
            elif z < -pj:
                new = (z + pj) / cs
            else:
                new = 0.0
            delta = new - old
            if delta != 0.0:
                for i in range(n):
                    r[i] -= delta * x[i, j]
                beta[j] = new
                if abs(delta) > max_delta:
                    max_delta = abs(delta)
        return max_delta

    @njit(cache=True, nogil=True)
    def cd_solve_numba(x, r, beta, col_sq, pen, tol, max_sweeps):
        everything = np.arange(x.shape[1])
        sweeps = 0
        while sweeps < max_sweeps:
            delta = cd_sweep_numba(x, r, beta, col_sq, pen, everything)
            sweeps += 1
            if delta <= tol:
                return sweeps, True
            active = np.flatnonzero(beta)
            while sweeps < max_sweeps:
                delta = cd_sweep_numba(x, r, beta, col_sq, pen, active)
                sweeps += 1
                if delta <= tol:
                    break
        return sweeps, False

    @njit(cache=True, nogil=True)
    def ar1_matvec_numba(v, rho):
        p = v.shape[0]
        out = np.empty(p)
        acc = 0.0
        for i in range(p):
            acc = v[i] + rho * acc
            out[i] = acc
        acc = 0.0
        for i in range(p - 1, -1, -1):
            acc = v[i] + rho * acc
            out[i] += acc - v[i]
        return out

else:  # pragma: no cover
    cd_sweep_numba = cd_sweep_numpy
    cd_solve_numba = cd_solve_numpy
    ar1_matvec_numba = ar1_matvec_numpy


if USE_NUMBA:
    cd_sweep = cd_sweep_numba
    cd_solve = cd_solve_numba
    ar1_matvec = ar1_matvec_numba
else:
    cd_sweep = cd_sweep_numpy
    cd_solve = cd_solve_numpy
    ar1_matvec = ar1_matvec_numpy
