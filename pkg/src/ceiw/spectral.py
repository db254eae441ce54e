"""Spectral operators on periodic fields: frequency projectors, derivatives,
inverse divergence, off-grid evaluation, and time-derivative stencils.

Derivative-type multipliers zero the unpaired Nyquist planes so that real
fields map to real fields; all constructed fields in the workbench keep
|k|_inf below n/2, where this is a no-op.
"""

from __future__ import annotations

import logging
import math

import numpy as np

from . import _kernels
from .errors import DomainError
from .fields import (Field, Grid3, ScalarField, SymTensorField,
                     TimeSampledField, VectorField, field_of_rank)

log = logging.getLogger(__name__)

# Cost bookkeeping for off-grid evaluation (points * modes of the last call).
last_eval_cost = {"points": 0, "modes": 0}


def smooth_step(s: np.ndarray) -> np.ndarray:
    """C^infty transition, 0 for s<=0 and 1 for s>=1, via exp(-1/s) blending."""
    s = np.asarray(s, dtype=np.float64)
    a = np.zeros_like(s)
    b = np.zeros_like(s)
    np.exp(np.divide(-1.0, s, out=np.full_like(s, -np.inf), where=s > 0),
           out=a)
    np.exp(np.divide(-1.0, 1.0 - s, out=np.full_like(s, -np.inf),
                     where=s < 1), out=b)
    return a / (a + b)


def lp_bump(r: np.ndarray) -> np.ndarray:
    """Radial frequency bump: 1 on [0,1], 0 on [2,inf), smooth in between."""
    return 1.0 - smooth_step(np.asarray(r, dtype=np.float64) - 1.0)


def dyadic_floor(cutoff: float) -> int:
    """Largest j with 2**j <= cutoff."""
    if cutoff <= 0:
        raise DomainError(f"cutoff={cutoff} must be positive")
    return math.floor(math.log2(cutoff) + 1e-12)


def lowpass(f: Field, cutoff: float) -> Field:
    """Project onto frequencies below the dyadic scale of `cutoff`.

    Multiplies mode k by bump(|k|/2^J) with 2^J the largest dyadic <= cutoff,
    so the result is untouched on |k| <= 2^J and empty beyond 2^(J+1).
    """
    j = dyadic_floor(cutoff)
    mult = lp_bump(f.grid.kabs / float(2 ** j))
    out = type(f)(f.grid, f.grid.ifftn_real(f.hat * mult))
    out._hat = f.hat * mult
    return out


def lowpass_time_sampled(F: TimeSampledField, cutoff: float) -> TimeSampledField:
    j = dyadic_floor(cutoff)
    mult = lp_bump(F.grid.kabs / float(2 ** j))
    out = np.empty_like(F.slices)
    for i in range(F.slices.shape[0]):
        out[i] = F.grid.ifftn_real(F.grid.fftn(F.slices[i]) * mult)
    return TimeSampledField(F.grid, F.t0, F.t1, F.nt, out, F.rank,
                            stationary=F.stationary)


def _ik(grid: Grid3, axis: int) -> np.ndarray:
    key = f"_ik_{axis}"
    arr = getattr(grid, key, None)
    if arr is None:
        k = grid.kmesh[axis].copy()
        k[grid.nyquist_mask] = 0.0
        arr = 1j * k
        setattr(grid, key, arr)
    return arr


def dx_hat(grid: Grid3, hat: np.ndarray, axis: int) -> np.ndarray:
    return hat * _ik(grid, axis)


def dx(f: Field, axis: int) -> Field:
    return type(f)(f.grid, f.grid.ifftn_real(dx_hat(f.grid, f.hat, axis)))


def gradient(f: ScalarField) -> VectorField:
    g = f.grid
    hat = f.hat
    return VectorField(g, np.stack(
        [g.ifftn_real(dx_hat(g, hat, a)) for a in range(3)]))


def gradient_values(grid: Grid3, values: np.ndarray) -> np.ndarray:
    """Gradient of a scalar sample array, returned as (3,n,n,n)."""
    hat = grid.fftn(values)
    return np.stack([grid.ifftn_real(dx_hat(grid, hat, a)) for a in range(3)])


def divergence(v: VectorField) -> ScalarField:
    g = v.grid
    hat = g.fftn(v.values)
    out = dx_hat(g, hat[0], 0) + dx_hat(g, hat[1], 1) + dx_hat(g, hat[2], 2)
    return ScalarField(g, g.ifftn_real(out))


def divergence_values(grid: Grid3, values: np.ndarray) -> np.ndarray:
    hat = grid.fftn(values)
    out = dx_hat(grid, hat[0], 0) + dx_hat(grid, hat[1], 1) \
        + dx_hat(grid, hat[2], 2)
    return grid.ifftn_real(out)


def curl_values(grid: Grid3, values: np.ndarray) -> np.ndarray:
    hat = grid.fftn(values)
    out = np.empty_like(hat)
    out[0] = dx_hat(grid, hat[2], 1) - dx_hat(grid, hat[1], 2)
    out[1] = dx_hat(grid, hat[0], 2) - dx_hat(grid, hat[2], 0)
    out[2] = dx_hat(grid, hat[1], 0) - dx_hat(grid, hat[0], 1)
    return grid.ifftn_real(out)


def curl(v: VectorField) -> VectorField:
    return VectorField(v.grid, curl_values(v.grid, v.values))


from .fields import SYM_IDX, SYM_OF  # noqa: E402  (component order helpers)


def div_sym_tensor_values(grid: Grid3, sym_values: np.ndarray) -> np.ndarray:
    """(div S)_i = d_j S_ij on 6-component symmetric storage."""
    hat = grid.fftn(sym_values)
    out = np.empty((3,) + sym_values.shape[1:], dtype=np.complex128)
    for i in range(3):
        acc = None
        for jax in range(3):
            term = dx_hat(grid, hat[SYM_OF[(i, jax)]], jax)
            acc = term if acc is None else acc + term
        out[i] = acc
    return grid.ifftn_real(out)


def div_sym_tensor(S: SymTensorField) -> VectorField:
    return VectorField(S.grid, div_sym_tensor_values(S.grid, S.values))


def _inv_k2(grid: Grid3) -> np.ndarray:
    arr = getattr(grid, "_inv_k2", None)
    if arr is None:
        k2 = grid.k2.copy()
        k2[0, 0, 0] = 1.0
        arr = 1.0 / k2
        arr[0, 0, 0] = 0.0
        setattr(grid, "_inv_k2", arr)
    return arr


def inverse_divergence_tensor(f: VectorField) -> SymTensorField:
    """Symmetric trace-free T with div T = f - <f>.

    Fourier symbol (k != 0, F = fhat):
        T_ij = -i [ (k_i F_j + k_j F_i)/|k|^2
                    - k_i k_j (k.F)/(2|k|^4) - delta_ij (k.F)/(2|k|^2) ]
    The mean mode is dropped, so the argument may have any mean.
    """
    g = f.grid
    hat = g.fftn(f.values)
    hat[:, g.nyquist_mask] = 0.0
    kx, ky, kz = g.kmesh
    inv2 = _inv_k2(g)
    kdotf = kx * hat[0] + ky * hat[1] + kz * hat[2]
    kk = (kx, ky, kz)
    out = np.empty((6,) + hat.shape[1:], dtype=np.complex128)
    for a, (i, j) in enumerate(SYM_IDX):
        t = (kk[i] * hat[j] + kk[j] * hat[i]) * inv2 \
            - 0.5 * kk[i] * kk[j] * kdotf * inv2 * inv2
        if i == j:
            t = t - 0.5 * kdotf * inv2
        out[a] = -1j * t
    out[:, 0, 0, 0] = 0.0
    res = SymTensorField(g, g.ifftn_real(out))
    res._hat = out
    return res


def inverse_divergence_vector(fsrc: ScalarField) -> VectorField:
    """Vector V with div V = g - <g>; V_i = -i k_i ghat / |k|^2."""
    g = fsrc.grid
    hat = fsrc.hat.copy()
    hat[g.nyquist_mask] = 0.0
    inv2 = _inv_k2(g)
    kx, ky, kz = g.kmesh
    out = np.stack([-1j * kx * hat * inv2, -1j * ky * hat * inv2,
                    -1j * kz * hat * inv2])
    out[:, 0, 0, 0] = 0.0
    res = VectorField(g, g.ifftn_real(out))
    res._hat = out
    return res


def extract_modes(f: Field, tol: float = 0.0):
    """Nonzero true Fourier modes of a field, folded onto a half-space.

    Returns (kvecs, coeffs) with kvecs (M,3) int64 and coeffs (M,C) complex,
    half-space entries doubled so sum_m Re(c e^{ik.x}) reproduces the field.
    Requires empty Nyquist planes (guaranteed for the workbench's
    band-limited constructions).
    """
    g = f.grid
    c = f.true_coefficients()
    if f.rank == 0:
        c = c[None, ...]
    ny_amp = np.abs(c[:, g.nyquist_mask]).max() if g.n >= 2 else 0.0
    scale = np.abs(c).max()
    if scale > 0 and ny_amp > 1e-12 * scale:
        raise DomainError(
            "field carries Nyquist-plane content; off-grid representation "
            "is only defined below |k| = n/2")
    amp = np.sqrt((np.abs(c) ** 2).sum(axis=0))
    amp[g.nyquist_mask] = 0.0
    thresh = tol * scale if scale > 0 else 0.0
    idx = np.argwhere(amp > thresh)
    if idx.size == 0:
        return (np.zeros((0, 3), np.int64),
                np.zeros((0, c.shape[0]), np.complex128))
    k1d = g.k1d
    kv = k1d[idx]                      # (M,3) integer wavenumbers
    keep_half = (kv[:, 0] > 0) | ((kv[:, 0] == 0) & (kv[:, 1] > 0)) \
        | ((kv[:, 0] == 0) & (kv[:, 1] == 0) & (kv[:, 2] >= 0))
    idx = idx[keep_half]
    kv = kv[keep_half]
    coeffs = c[:, idx[:, 0], idx[:, 1], idx[:, 2]].T.copy()
    nonzero = ~np.all(kv == 0, axis=1)
    coeffs[nonzero] *= 2.0
    order = np.lexsort((kv[:, 2], kv[:, 1], kv[:, 0]))
    return np.ascontiguousarray(kv[order]), np.ascontiguousarray(coeffs[order])


def eval_modes_at(kvecs: np.ndarray, coeffs: np.ndarray, points: np.ndarray,
                  kscale: float = 1.0) -> np.ndarray:
    """Evaluate a half-space mode set at points (N,3); returns (N,C)."""
    points = np.ascontiguousarray(np.atleast_2d(points), dtype=np.float64)
    out = np.zeros((points.shape[0], coeffs.shape[1]), dtype=np.float64)
    _kernels.eval_trig(points, kvecs, coeffs, float(kscale), out,
                       _kernels.default_chunks())
    last_eval_cost["points"] = points.shape[0]
    last_eval_cost["modes"] = kvecs.shape[0]
    return out


def evaluate_offgrid(f: Field, points) -> np.ndarray:
    """Trigonometric interpolation of f at arbitrary points.

    Exact (to rounding) for band-limited fields; points need not be wrapped.
    Returns (N,) for scalars, (N,C) otherwise.
    """
    kv, cf = extract_modes(f)
    pts = np.ascontiguousarray(np.atleast_2d(np.asarray(points, np.float64)))
    vals = eval_modes_at(kv, cf, pts)
    log.debug("evaluate_offgrid: %d points x %d modes", pts.shape[0],
              kv.shape[0])
    return vals[:, 0] if f.rank == 0 else vals


# 4th-order first-derivative stencils (offsets, weights/dt).
_INTERIOR = (np.array([-2, -1, 0, 1, 2]),
             np.array([1 / 12, -2 / 3, 0.0, 2 / 3, -1 / 12]))
_EDGE0 = (np.array([0, 1, 2, 3, 4]),
          np.array([-25 / 12, 4.0, -3.0, 4 / 3, -1 / 4]))
_EDGE1 = (np.array([-1, 0, 1, 2, 3]),
          np.array([-1 / 4, -5 / 6, 3 / 2, -1 / 2, 1 / 12]))


def fd_stencil(node: int, nt: int):
    """Offsets and weights of the 4th-order first-derivative stencil at node."""
    if nt < 5:
        raise DomainError(f"time derivative needs nt >= 5, got {nt}")
    if node < 0 or node >= nt:
        raise DomainError(f"node {node} outside [0, {nt})")
    if node == 0:
        return _EDGE0
    if node == 1:
        return _EDGE1
    if node == nt - 1:
        return -_EDGE0[0][::-1], -_EDGE0[1][::-1]
    if node == nt - 2:
        return -_EDGE1[0][::-1], -_EDGE1[1][::-1]
    return _INTERIOR


def time_derivative(F: TimeSampledField, node: int) -> Field:
    """4th-order finite-difference time derivative at one node."""
    offs, w = fd_stencil(node, F.nt)
    acc = None
    for o, wi in zip(offs, w):
        term = wi * F.slice(node + int(o))
        acc = term if acc is None else acc + term
    return field_of_rank(F.rank, F.grid, acc / F.dt)


def time_derivative_series(F: TimeSampledField) -> TimeSampledField:
    if F.stationary:
        return TimeSampledField(F.grid, F.t0, F.t1, F.nt,
                                np.zeros_like(F.slices), F.rank,
                                stationary=True)
    out = np.empty_like(F.slices)
    for j in range(F.nt):
        offs, w = fd_stencil(j, F.nt)
        acc = None
        for o, wi in zip(offs, w):
            term = wi * F.slices[j + int(o)]
            acc = term if acc is None else acc + term
        out[j] = acc / F.dt
    return TimeSampledField(F.grid, F.t0, F.t1, F.nt, out, F.rank)


def fd_series_1d(y: np.ndarray, dt: float) -> np.ndarray:
    """4th-order time derivative of a plain 1-D sample series."""
    nt = len(y)
    out = np.empty(nt)
    for j in range(nt):
        offs, w = fd_stencil(j, nt)
        out[j] = sum(wi * y[j + int(o)] for o, wi in zip(offs, w)) / dt
    return out


def parseval_gap(f: Field) -> float:
    """Relative gap between grid and Fourier L2 norms."""
    grid_l2 = f.l2()
    c = f.true_coefficients()
    spec_l2 = math.sqrt(float((np.abs(c) ** 2).sum()))
    return abs(grid_l2 - spec_l2) / max(grid_l2, 1e-300)


def random_band_limited(grid: Grid3, rank: int, kmax: int,
                        rng: np.random.Generator) -> Field:
    """Random real field with modes only in |k|_inf <= kmax."""
    comps = {0: 1, 1: 3, 2: 6}[rank]
    n = grid.n
    shape = (comps, n, n, n)
    hat = np.zeros(shape, dtype=np.complex128)
    m = 2 * kmax + 1
    block = rng.standard_normal((comps, m, m, m)) \
        + 1j * rng.standard_normal((comps, m, m, m))
    sel = np.arange(-kmax, kmax + 1)
    hat[np.ix_(range(comps), sel, sel, sel)] = block
    vals = grid.ifftn(hat).real
    vals = vals / max(np.abs(vals).max(), 1e-300)
    if rank == 0:
        return ScalarField(grid, vals[0])
    return field_of_rank(rank, grid, vals)
