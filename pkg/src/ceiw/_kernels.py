"""Numba kernels for batched trigonometric sums at arbitrary points.

Mode sets are small integer lattices, so exp(i*k.x) is built from per-axis
power tables (one complex multiply per table entry) instead of per-mode
sin/cos calls. fastmath is restricted to FMA contraction to keep results
run-to-run deterministic.
"""

from __future__ import annotations

import math
import os

import numba
import numpy as np
from numba import njit, prange


def configure_threads():
    cap = os.environ.get("CEIW_THREADS")
    if cap:
        try:
            numba.set_num_threads(max(1, min(numba.config.NUMBA_NUM_THREADS,
                                             int(cap))))
        except ValueError:
            pass


configure_threads()

_FM = {"contract"}


@njit(cache=True, inline="always")
def _fill_axis_table(table, kmin, length, x):
    """table[j] = exp(1i*(kmin+j)*x) for j in [0, length)."""
    a = math.cos(kmin * x)
    b = math.sin(kmin * x)
    er = math.cos(x)
    ei = math.sin(x)
    for j in range(length):
        table[j] = complex(a, b)
        a, b = a * er - b * ei, a * ei + b * er


@njit(cache=True, parallel=True, fastmath=_FM)
def eval_trig(points, kvecs, coeffs, kscale, out, nchunk):
    """out[p, c] = sum_m Re(coeffs[m, c] * exp(1i*kscale*kvecs[m].points[p])).

    Half-space doubling must already be folded into coeffs. kvecs may be in
    any order; locality helps but is not required.
    """
    npts = points.shape[0]
    nmod = kvecs.shape[0]
    ncomp = coeffs.shape[1]
    if nmod == 0 or npts == 0:
        return
    kmin = np.empty(3, np.int64)
    kmax = np.empty(3, np.int64)
    for d in range(3):
        kmin[d] = kvecs[:, d].min()
        kmax[d] = kvecs[:, d].max()
    l0 = kmax[0] - kmin[0] + 1
    l1 = kmax[1] - kmin[1] + 1
    l2 = kmax[2] - kmin[2] + 1

    nchunk = min(npts, nchunk)
    csize = (npts + nchunk - 1) // nchunk
    for ch in prange(nchunk):
        i0 = ch * csize
        i1 = min(npts, i0 + csize)
        t0 = np.empty(l0, np.complex128)
        t1 = np.empty(l1, np.complex128)
        t2 = np.empty(l2, np.complex128)
        for p in range(i0, i1):
            x0 = kscale * points[p, 0]
            x1 = kscale * points[p, 1]
            x2 = kscale * points[p, 2]
            _fill_axis_table(t0, kmin[0], l0, x0)
            _fill_axis_table(t1, kmin[1], l1, x1)
            _fill_axis_table(t2, kmin[2], l2, x2)
            for c in range(ncomp):
                out[p, c] = 0.0
            for m in range(nmod):
                e01 = t0[kvecs[m, 0] - kmin[0]] * t1[kvecs[m, 1] - kmin[1]]
                e = e01 * t2[kvecs[m, 2] - kmin[2]]
                for c in range(ncomp):
                    out[p, c] += coeffs[m, c].real * e.real \
                        - coeffs[m, c].imag * e.imag


@njit(cache=True, parallel=True, fastmath=_FM)
def eval_trig_complex(points, kvecs, coeffs, kscale, out, nchunk):
    """Like eval_trig but keeps the complex sum (no realness assumption)."""
    npts = points.shape[0]
    nmod = kvecs.shape[0]
    ncomp = coeffs.shape[1]
    if nmod == 0 or npts == 0:
        return
    kmin = np.empty(3, np.int64)
    kmax = np.empty(3, np.int64)
    for d in range(3):
        kmin[d] = kvecs[:, d].min()
        kmax[d] = kvecs[:, d].max()
    l0 = kmax[0] - kmin[0] + 1
    l1 = kmax[1] - kmin[1] + 1
    l2 = kmax[2] - kmin[2] + 1
    nchunk = min(npts, nchunk)
    csize = (npts + nchunk - 1) // nchunk
    for ch in prange(nchunk):
        i0 = ch * csize
        i1 = min(npts, i0 + csize)
        t0 = np.empty(l0, np.complex128)
        t1 = np.empty(l1, np.complex128)
        t2 = np.empty(l2, np.complex128)
        for p in range(i0, i1):
            _fill_axis_table(t0, kmin[0], l0, kscale * points[p, 0])
            _fill_axis_table(t1, kmin[1], l1, kscale * points[p, 1])
            _fill_axis_table(t2, kmin[2], l2, kscale * points[p, 2])
            for c in range(ncomp):
                out[p, c] = 0.0 + 0.0j
            for m in range(nmod):
                e01 = t0[kvecs[m, 0] - kmin[0]] * t1[kvecs[m, 1] - kmin[1]]
                e = e01 * t2[kvecs[m, 2] - kmin[2]]
                for c in range(ncomp):
                    out[p, c] += coeffs[m, c] * e


@njit(cache=True, parallel=True, fastmath=_FM)
def eval_drift_jacobian(points, kvecs, coeffs, out_v, out_jac, nchunk):
    """Band-limited vector field and its Jacobian at arbitrary points.

    coeffs: (M, 3) complex with half-space doubling folded in; the Jacobian
    contribution of a mode is d_j v_i = -k_j * Im(c_i * e).
    """
    npts = points.shape[0]
    nmod = kvecs.shape[0]
    if npts == 0:
        return
    kmin = np.empty(3, np.int64)
    kmax = np.empty(3, np.int64)
    for d in range(3):
        kmin[d] = kvecs[:, d].min() if nmod else 0
        kmax[d] = kvecs[:, d].max() if nmod else 0
    l0 = kmax[0] - kmin[0] + 1
    l1 = kmax[1] - kmin[1] + 1
    l2 = kmax[2] - kmin[2] + 1
    nchunk = min(npts, nchunk)
    csize = (npts + nchunk - 1) // nchunk
    for ch in prange(nchunk):
        i0 = ch * csize
        i1 = min(npts, i0 + csize)
        t0 = np.empty(l0, np.complex128)
        t1 = np.empty(l1, np.complex128)
        t2 = np.empty(l2, np.complex128)
        for p in range(i0, i1):
            _fill_axis_table(t0, kmin[0], l0, points[p, 0])
            _fill_axis_table(t1, kmin[1], l1, points[p, 1])
            _fill_axis_table(t2, kmin[2], l2, points[p, 2])
            v0 = 0.0
            v1 = 0.0
            v2 = 0.0
            j00 = 0.0
            j01 = 0.0
            j02 = 0.0
            j10 = 0.0
            j11 = 0.0
            j12 = 0.0
            j20 = 0.0
            j21 = 0.0
            j22 = 0.0
            for m in range(nmod):
                k0 = kvecs[m, 0]
                k1 = kvecs[m, 1]
                k2 = kvecs[m, 2]
                e01 = t0[k0 - kmin[0]] * t1[k1 - kmin[1]]
                e = e01 * t2[k2 - kmin[2]]
                w0 = coeffs[m, 0].real * e.real - coeffs[m, 0].imag * e.imag
                i0m = coeffs[m, 0].real * e.imag + coeffs[m, 0].imag * e.real
                w1 = coeffs[m, 1].real * e.real - coeffs[m, 1].imag * e.imag
                i1m = coeffs[m, 1].real * e.imag + coeffs[m, 1].imag * e.real
                w2 = coeffs[m, 2].real * e.real - coeffs[m, 2].imag * e.imag
                i2m = coeffs[m, 2].real * e.imag + coeffs[m, 2].imag * e.real
                v0 += w0
                v1 += w1
                v2 += w2
                j00 -= k0 * i0m
                j01 -= k1 * i0m
                j02 -= k2 * i0m
                j10 -= k0 * i1m
                j11 -= k1 * i1m
                j12 -= k2 * i1m
                j20 -= k0 * i2m
                j21 -= k1 * i2m
                j22 -= k2 * i2m
            out_v[p, 0] = v0
            out_v[p, 1] = v1
            out_v[p, 2] = v2
            out_jac[p, 0, 0] = j00
            out_jac[p, 0, 1] = j01
            out_jac[p, 0, 2] = j02
            out_jac[p, 1, 0] = j10
            out_jac[p, 1, 1] = j11
            out_jac[p, 1, 2] = j12
            out_jac[p, 2, 0] = j20
            out_jac[p, 2, 1] = j21
            out_jac[p, 2, 2] = j22


def default_chunks() -> int:
    """Chunk count for the parallel kernels (4 per active thread)."""
    return max(1, 4 * numba.get_num_threads())
