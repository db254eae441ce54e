"""Regularized tuple: coarse momentum, trajectory-mollified errors, and the
quadratic low-pass commutator.

The error fields are first projected below the space scale and then
averaged along forward trajectories of the coarse drift with a compactly
supported even mollifier, which intertwines the averaging with the
material derivative. Stationary inputs with stationary drift use an
autonomous fast path (one trajectory family instead of one per node).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DomainError, WindowError
from .fields import Grid3, TimeSampledField, VectorField, field_of_rank
from .flows import DriftModes, drift_from, integrate_forward
from .schedule import ParameterSchedule
from .spectral import (divergence_values, extract_modes, lowpass,
                       lowpass_time_sampled)
from .tuples import EulerReynoldsTuple

_GLN = {}


def _gauss(n: int):
    if n not in _GLN:
        _GLN[n] = np.polynomial.legendre.leggauss(n)
    return _GLN[n]


def mollifier_weight(s: np.ndarray) -> np.ndarray:
    """Even smooth bump on (-1,1) with unit mass."""
    s = np.asarray(s, dtype=np.float64)
    out = np.zeros_like(s)
    inside = np.abs(s) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - s[inside] ** 2))
    return out / _MOLLIFIER_MASS


def _mass():
    x, w = _gauss(200)
    v = np.zeros_like(x)
    inside = np.abs(x) < 1
    v[inside] = np.exp(-1.0 / (1.0 - x[inside] ** 2))
    return float(v @ w)


_MOLLIFIER_MASS = 1.0
_MOLLIFIER_MASS = _mass()


class FieldModes:
    """Per-slice half-space mode data of a time-sampled field, for exact
    off-grid evaluation with linear interpolation in time."""

    def __init__(self, F: TimeSampledField):
        self.F = F
        self.ncomp = F.slices.shape[1] if F.rank else 1
        self.kvecs = None
        self.coeff_slices = []
        for j in range(F.slices.shape[0]):
            kv, cf = extract_modes(
                field_of_rank(F.rank, F.grid, F.slices[j]))
            if self.kvecs is None:
                self.kvecs = kv
                self.coeff_slices.append(cf)
            elif kv.shape == self.kvecs.shape and np.array_equal(kv, self.kvecs):
                self.coeff_slices.append(cf)
            else:
                self._merge(kv, cf)

    def _merge(self, kv, cf):
        union = {tuple(k) for k in self.kvecs} | {tuple(k) for k in kv}
        kv_all = np.array(sorted(union), dtype=np.int64)

        def lift(kvs, cfs):
            lut = {tuple(k): i for i, k in enumerate(kvs)}
            out = np.zeros((kv_all.shape[0], cfs.shape[1]), np.complex128)
            for i, k in enumerate(kv_all):
                j = lut.get(tuple(k))
                if j is not None:
                    out[i] = cfs[j]
            return out

        self.coeff_slices = [lift(self.kvecs, c) for c in self.coeff_slices]
        self.coeff_slices.append(lift(kv, cf))
        self.kvecs = kv_all

    def coeffs_at(self, t: float) -> np.ndarray:
        F = self.F
        if F.stationary:
            return self.coeff_slices[0]
        if t < F.t0 - 1e-12 or t > F.t1 + 1e-12:
            raise WindowError(f"field requested at t={t} outside window")
        srel = (t - F.t0) / F.dt
        j = int(np.clip(math.floor(srel), 0, F.nt - 2))
        w = srel - j
        if w == 0.0:
            return self.coeff_slices[j]
        return (1 - w) * self.coeff_slices[j] + w * self.coeff_slices[j + 1]

    def eval(self, t: float, pts: np.ndarray) -> np.ndarray:
        pts = np.ascontiguousarray(pts, dtype=np.float64)
        out = np.zeros((pts.shape[0], self.ncomp))
        _kernels.eval_trig(pts, self.kvecs, self.coeffs_at(t), 1.0, out,
                           _kernels.default_chunks())
        return out


def mollify_along_flow(F: TimeSampledField, drift: TimeSampledField,
                       delta: float, quad_order: int = 8,
                       h: float | None = None,
                       drift_modes: DriftModes | None = None,
                       out_nodes=None) -> TimeSampledField:
    """Average F along drift trajectories with the scaled even mollifier.

    (rho_delta * F)(t, x) = int F(t+s, Phi(t+s, x; t)) rho_delta(s) ds by
    Gauss quadrature over (-delta, delta), with trajectory points from the
    forward characteristics. Linear in F and exact on constants.

    The output lives on the sub-axis of nodes t with [t-delta, t+delta]
    inside both windows; WindowError if that range is empty.
    """
    if delta <= 0:
        raise DomainError("delta must be positive")
    if quad_order < 8:
        raise DomainError("quadrature order must be at least 8")
    lo = max(F.t0, drift.t0) + delta
    hi = min(F.t1, drift.t1) - delta
    times = F.times
    if out_nodes is None:
        sel = np.nonzero((times >= lo - 1e-12) & (times <= hi + 1e-12))[0]
    else:
        sel = np.asarray(out_nodes, dtype=int)
        bad = (times[sel] < lo - 1e-12) | (times[sel] > hi + 1e-12)
        if bad.any():
            raise WindowError(
                "requested output nodes need data outside the field window")
    if len(sel) == 0:
        raise WindowError("no admissible output nodes for this delta")

    # substituting s = delta*nu cancels the mollifier's 1/delta scaling,
    # so the quadrature runs on (-1,1) with the unscaled weight; the
    # discrete weights are normalized to unit mass so constants are exact
    nodes, weights = _gauss(quad_order)
    svals = delta * nodes
    wvals = weights * mollifier_weight(nodes)
    wvals = wvals / wvals.sum()

    grid = F.grid
    fm = FieldModes(F)
    dm = drift_modes if drift_modes is not None else DriftModes(drift)
    X, Y, Z = grid.meshes()
    pts0 = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)

    stationary = F.stationary and drift.stationary
    h = h if h is not None else delta / 24.0

    def averaged_at(t: float) -> np.ndarray:
        idx = np.argsort(svals)
        pos = [i for i in idx if svals[i] > 0]
        neg = [i for i in idx[::-1] if svals[i] < 0]
        acc = np.zeros((pts0.shape[0], fm.ncomp))
        for group in (pos, neg):
            if not group:
                continue
            rec, _ = integrate_forward(
                drift, t, pts0, t + svals[group[-1]], h, modes=dm,
                with_jacobian=False,
                record_times=[t + svals[i] for i in group])
            for i, positions in zip(group, rec):
                acc += wvals[i] * fm.eval(t + svals[i], positions)
        for i in np.nonzero(svals == 0.0)[0]:
            acc += wvals[i] * fm.eval(t, pts0)
        return acc

    shape_tail = F.slices.shape[1:]
    if stationary:
        vals = averaged_at(float(times[sel[0]]))
        out = vals.T.reshape(shape_tail)
        return TimeSampledField.stationary_from(
            grid, float(times[sel[0]]), float(times[sel[-1]]),
            len(sel), out, F.rank)
    slices = np.empty((len(sel),) + shape_tail)
    for a, j in enumerate(sel):
        slices[a] = averaged_at(float(times[j])).T.reshape(shape_tail)
    return TimeSampledField(grid, float(times[sel[0]]), float(times[sel[-1]]),
                            len(sel), slices, F.rank)


@dataclass
class MollifiedTuple:
    """Coarse-scale companion of a tuple on the shrunken window."""

    m_ell: TimeSampledField
    R_ell: TimeSampledField
    phi_ell: TimeSampledField
    p_ell: TimeSampledField        # low-passed pressure field
    drift: TimeSampledField        # m_ell / rho on the tuple axis
    drift_modes: DriftModes
    ell: float
    ell_t: float


def build_mollified(tup: EulerReynoldsTuple, s: ParameterSchedule,
                    quad_order: int = 8,
                    flow_h: float | None = None) -> MollifiedTuple:
    """Space low-pass below 1/ell, then trajectory mollification at ell_t.

    The output fields live on the node range whose mollification
    trajectories stay inside the input window; DomainError when the input
    window cannot even cover the target range [0,T]+2 tau_q.
    """
    cut = 1.0 / s.ell
    need_lo = -2.0 * s.tau_q - s.ell_t
    need_hi = s.T + 2.0 * s.tau_q + s.ell_t
    if tup.m.t0 > need_lo + 1e-12 or tup.m.t1 < need_hi - 1e-12:
        raise DomainError(
            f"input window [{tup.m.t0}, {tup.m.t1}] too short for "
            f"mollification range [{need_lo}, {need_hi}]")

    m_ell = lowpass_time_sampled(tup.m, cut)
    drift = drift_from(m_ell, tup.rho)
    dm = DriftModes(drift)
    R_low = lowpass_time_sampled(tup.R, cut)
    phi_low = lowpass_time_sampled(tup.phi, cut)
    R_ell = mollify_along_flow(R_low, drift, s.ell_t, quad_order=quad_order,
                               h=flow_h, drift_modes=dm)
    phi_ell = mollify_along_flow(phi_low, drift, s.ell_t,
                                 quad_order=quad_order, h=flow_h,
                                 drift_modes=dm)
    if tup.rho.stationary:
        pvals = tup.pressure.p(tup.rho.slices[0])
        from .fields import ScalarField
        p_low = lowpass(ScalarField(tup.grid, pvals), cut).values
        p_ell = TimeSampledField.stationary_from(
            tup.grid, tup.m.t0, tup.m.t1, tup.nt, p_low, 0)
    else:
        pvals = tup.pressure.p(tup.rho.materialized())
        p_ell = lowpass_time_sampled(
            TimeSampledField(tup.grid, tup.m.t0, tup.m.t1, tup.nt, pvals, 0),
            cut)
    return MollifiedTuple(m_ell=m_ell, R_ell=R_ell, phi_ell=phi_ell,
                          p_ell=p_ell, drift=drift, drift_modes=dm,
                          ell=s.ell, ell_t=s.ell_t)


def quadratic_commutator(m: TimeSampledField, rho: TimeSampledField,
                         s: ParameterSchedule) -> TimeSampledField:
    """Divergence of the low-pass commutator of the momentum self-product.

    Q = div( m_ell (x) m_ell / rho  -  P_below( m (x) m / rho ) ), assembled
    with the same projector and spectral divergence as every consumer.
    """
    cut = 1.0 / s.ell
    grid = m.grid
    m_ell = lowpass_time_sampled(m, cut)
    nsl = m.slices.shape[0]
    out = np.empty((nsl, 3) + m.slices.shape[2:])
    from .fields import SymTensorField
    from .spectral import div_sym_tensor_values, lowpass as lp_field
    for j in range(nsl):
        rho_j = rho.slice(j)
        ml = m_ell.slices[j]
        mm = m.slices[j]
        t_lo = _sym_outer(ml, ml) / rho_j
        t_full = _sym_outer(mm, mm) / rho_j
        t_proj = lp_field(SymTensorField(grid, t_full), cut).values
        out[j] = div_sym_tensor_values(grid, t_lo - t_proj)
    return TimeSampledField(grid, m.t0, m.t1, m.nt, out, 1,
                            stationary=m.stationary)


def _sym_outer(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Symmetric-component storage of the outer product a (x) b."""
    return np.stack([a[0] * b[0], a[1] * b[1], a[2] * b[2],
                     a[0] * b[1], a[0] * b[2], a[1] * b[2]])