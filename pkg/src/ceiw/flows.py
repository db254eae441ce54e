"""Forward characteristics and backward flow charts for a periodic drift.

The forward flow integrates per-point characteristics (classical RK4 with
the variational equation for the Jacobian), evaluating the band-limited
drift spectrally at off-grid positions. The backward flow chart of a time
slab solves the transport equation for the periodic displacement
omega = xi - x on the grid by method-of-lines RK4 with spectral gradients;
the anchor slice is exactly the identity and the Jacobian fields follow
spectrally from omega.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import DomainError, InvariantError, WindowError
from .fields import Grid3, TimeSampledField, VectorField
from .schedule import ParameterSchedule
from .spectral import dx_hat, extract_modes

_EPS = 1e-12


class DriftModes:
    """Half-space mode data of a time-sampled drift for off-grid evaluation."""

    def __init__(self, drift: TimeSampledField):
        if drift.rank != 1:
            raise DomainError("drift must be a vector field")
        self.drift = drift
        self.kvecs = None
        self.coeff_slices = []
        for j in range(drift.slices.shape[0]):
            kv, cf = extract_modes(VectorField(drift.grid, drift.slices[j]))
            if self.kvecs is None:
                self.kvecs = kv
            elif kv.shape != self.kvecs.shape or not np.array_equal(kv, self.kvecs):
                kv, cf = self._align(kv, cf, drift.grid, drift.slices[j])
            self.coeff_slices.append(cf)

    def _align(self, kv, cf, grid, values):
        """Re-extract with the union support so slices share one mode list."""
        union = {tuple(k) for k in self.kvecs} | {tuple(k) for k in kv}
        kv_all = np.array(sorted(union), dtype=np.int64)
        # rebuild every stored slice on the union list
        def on_union(kvs, cfs):
            lut = {tuple(k): i for i, k in enumerate(kvs)}
            out = np.zeros((kv_all.shape[0], cfs.shape[1]), dtype=np.complex128)
            for i, k in enumerate(kv_all):
                j = lut.get(tuple(k))
                if j is not None:
                    out[i] = cfs[j]
            return out
        self.coeff_slices = [on_union(self.kvecs, c) for c in self.coeff_slices]
        self.kvecs = kv_all
        return kv_all, on_union(kv, cf)

    def coeffs_at(self, t: float) -> np.ndarray:
        d = self.drift
        if d.stationary:
            return self.coeff_slices[0]
        if t < d.t0 - _EPS * max(1, abs(d.t0)) or \
           t > d.t1 + _EPS * max(1, abs(d.t1)):
            raise WindowError(f"drift requested at t={t} outside "
                              f"[{d.t0}, {d.t1}]")
        srel = (t - d.t0) / d.dt
        j = int(np.clip(math.floor(srel), 0, d.nt - 2))
        w = srel - j
        if w == 0.0:
            return self.coeff_slices[j]
        return (1.0 - w) * self.coeff_slices[j] + w * self.coeff_slices[j + 1]

    def eval(self, t: float, pts: np.ndarray):
        """Drift values and Jacobians at points (N,3)."""
        pts = np.ascontiguousarray(pts, dtype=np.float64)
        v = np.empty((pts.shape[0], 3))
        jac = np.empty((pts.shape[0], 3, 3))
        _kernels.eval_drift_jacobian(pts, self.kvecs, self.coeffs_at(t),
                                     v, jac, _kernels.default_chunks())
        return v, jac


def integrate_forward(drift: TimeSampledField, t_start: float, x0: np.ndarray,
                      t_end: float, h: float,
                      modes: DriftModes | None = None,
                      with_jacobian: bool = True,
                      record_times=None):
    """Characteristics of the drift from (t_start, x0) to t_end.

    Fixed-step RK4 with the variational Jacobian integrated alongside;
    positions are reported wrapped into [-pi, pi). When `record_times` is
    given, positions (and Jacobians) are recorded at those intermediate
    times, which must be monotone from t_start towards t_end.

    Raises WindowError when the requested range leaves the drift window.
    """
    if h <= 0:
        raise DomainError("step size must be positive")
    lo, hi = min(t_start, t_end), max(t_start, t_end)
    if lo < drift.t0 - _EPS * max(1, abs(drift.t0)) or \
       hi > drift.t1 + _EPS * max(1, abs(drift.t1)):
        raise WindowError(
            f"flow range [{lo}, {hi}] outside drift window "
            f"[{drift.t0}, {drift.t1}]")
    dm = modes if modes is not None else DriftModes(drift)
    x = np.array(np.atleast_2d(x0), dtype=np.float64)
    npts = x.shape[0]
    jac = np.tile(np.eye(3), (npts, 1, 1)) if with_jacobian else None

    targets = list(record_times) if record_times is not None else [t_end]
    out_x, out_j = [], []
    t = t_start
    for target in targets:
        span = target - t
        if abs(span) > 0:
            nstep = max(1, int(math.ceil(abs(span) / h - 1e-12)))
            dt = span / nstep
            for _ in range(nstep):
                x, jac = _rk4_step(dm, t, x, jac, dt)
                t += dt
            t = target
        out_x.append(np.mod(x + np.pi, 2 * np.pi) - np.pi)
        out_j.append(None if jac is None else jac.copy())
    if record_times is None:
        return out_x[0], out_j[0]
    return out_x, out_j


def _rk4_step(dm: DriftModes, t, x, jac, dt):
    def rhs(tt, xx, jj):
        v, g = dm.eval(tt, xx)
        if jj is None:
            return v, None
        return v, np.einsum("pij,pjk->pik", g, jj)

    k1x, k1j = rhs(t, x, jac)
    k2x, k2j = rhs(t + dt / 2, x + dt / 2 * k1x,
                   None if jac is None else jac + dt / 2 * k1j)
    k3x, k3j = rhs(t + dt / 2, x + dt / 2 * k2x,
                   None if jac is None else jac + dt / 2 * k2j)
    k4x, k4j = rhs(t + dt, x + dt * k3x,
                   None if jac is None else jac + dt * k3j)
    xn = x + dt / 6 * (k1x + 2 * k2x + 2 * k3x + k4x)
    jn = None if jac is None else jac + dt / 6 * (k1j + 2 * k2j + 2 * k3j + k4j)
    return xn, jn


def _batched_inv3(A: np.ndarray) -> np.ndarray:
    """Inverse of (..., 3, 3) by the adjugate formula."""
    a, b, c = A[..., 0, 0], A[..., 0, 1], A[..., 0, 2]
    d, e, f = A[..., 1, 0], A[..., 1, 1], A[..., 1, 2]
    g, h, i = A[..., 2, 0], A[..., 2, 1], A[..., 2, 2]
    co = np.empty_like(A)
    co[..., 0, 0] = e * i - f * h
    co[..., 0, 1] = c * h - b * i
    co[..., 0, 2] = b * f - c * e
    co[..., 1, 0] = f * g - d * i
    co[..., 1, 1] = a * i - c * g
    co[..., 1, 2] = c * d - a * f
    co[..., 2, 0] = d * h - e * g
    co[..., 2, 1] = b * g - a * h
    co[..., 2, 2] = a * e - b * d
    det = a * co[..., 0, 0] + b * co[..., 1, 0] + c * co[..., 2, 0]
    return co / det[..., None, None]


def _batched_det3(A: np.ndarray) -> np.ndarray:
    return (A[..., 0, 0] * (A[..., 1, 1] * A[..., 2, 2]
                            - A[..., 1, 2] * A[..., 2, 1])
            - A[..., 0, 1] * (A[..., 1, 0] * A[..., 2, 2]
                              - A[..., 1, 2] * A[..., 2, 0])
            + A[..., 0, 2] * (A[..., 1, 0] * A[..., 2, 1]
                              - A[..., 1, 1] * A[..., 2, 0]))


@dataclass
class FlowChart:
    """Backward flow of one time slab with Jacobian data at stored nodes."""

    u: int
    t_u: float
    grid: Grid3
    times: np.ndarray             # stored global time nodes in the window
    node_index: np.ndarray        # indices of those nodes in the tuple axis
    omega: np.ndarray             # (nt_w, 3, n, n, n) displacement xi - x
    grad_xi: np.ndarray           # (nt_w, n, n, n, 3, 3)
    grad_xi_inv: np.ndarray
    det_grad_xi: np.ndarray       # (nt_w, n, n, n)
    drift_modes: DriftModes = field(repr=False, default=None)
    flow_h: float = 0.0

    _mesh: np.ndarray = field(repr=False, default=None)

    def mesh(self) -> np.ndarray:
        if self._mesh is None:
            g = self.grid
            X, Y, Z = g.meshes()
            self._mesh = np.stack([X, Y, Z])
        return self._mesh

    def local(self, tuple_node: int) -> int:
        loc = np.nonzero(self.node_index == tuple_node)[0]
        if len(loc) == 0:
            raise WindowError(
                f"tuple node {tuple_node} not stored in slab {self.u}")
        return int(loc[0])

    def xi(self, j: int) -> np.ndarray:
        """Backward flow values at stored node j, wrapped to the torus."""
        out = self.mesh() + self.omega[j]
        return np.mod(out + np.pi, 2 * np.pi) - np.pi

    def xi_unwrapped(self, j: int) -> np.ndarray:
        return self.mesh() + self.omega[j]

    def forward(self, t: float, pts: np.ndarray, h: float | None = None):
        """Forward flow from the anchor time to t at the given points."""
        step = h if h is not None else self.flow_h
        return integrate_forward(self.drift_modes.drift, self.t_u, pts, t,
                                 step, modes=self.drift_modes)

    def max_jacobian_gap(self) -> float:
        gap = self.grad_xi - np.eye(3)
        return 3.0 * float(np.abs(gap).max())

    def max_displacement(self) -> float:
        return float(np.abs(self.omega).max())


def solve_backward(drift: TimeSampledField, u: int,
                   s: ParameterSchedule,
                   modes: DriftModes | None = None,
                   h: float | None = None,
                   jac_gap_limit: float = 0.2) -> FlowChart:
    """Backward flow chart of slab u on its window inside the drift domain.

    Solves the periodic displacement transport on the grid with RK4 in
    time and spectral space derivatives, anchored exactly at t_u = u*tau.
    The Jacobian gap invariant |Id - grad xi| <= 1/5 is asserted.
    """
    tau = s.tau_q
    t_u = u * tau
    win_lo = max(t_u - tau / 2.0, drift.t0)
    win_hi = min(t_u + 1.5 * tau, drift.t1)
    if not (drift.t0 - _EPS <= t_u <= drift.t1 + _EPS):
        raise WindowError(f"anchor t_u={t_u} outside drift window")
    h = h if h is not None else tau / 16.0

    times = drift.times
    sel = np.nonzero((times >= win_lo - _EPS) & (times <= win_hi + _EPS))[0]
    if len(sel) == 0:
        raise WindowError(f"no tuple nodes inside the window of slab {u}")
    node_times = times[sel]

    grid = drift.grid
    n = grid.n
    nt_w = len(sel)
    omega = np.zeros((nt_w, 3, n, n, n))

    # march from the anchor towards both window ends, recording at nodes
    order = np.argsort(np.abs(node_times - t_u))
    for sign in (-1.0, 1.0):
        targets = [(i, tt) for i, tt in enumerate(node_times)
                   if (tt - t_u) * sign > _EPS * max(1.0, tau)]
        targets.sort(key=lambda p: abs(p[1] - t_u))
        w = np.zeros((3, n, n, n))
        t = t_u
        for idx, tt in targets:
            span = tt - t
            nstep = max(1, int(math.ceil(abs(span) / h - 1e-12)))
            dt = span / nstep
            for _ in range(nstep):
                w = _transport_rk4(grid, drift, w, t, dt)
                t += dt
            t = tt
            omega[idx] = w
    # anchor node (if stored) stays exactly zero
    del order

    grad = np.empty((nt_w, n, n, n, 3, 3))
    for j in range(nt_w):
        hat = grid.fftn(omega[j])
        for a in range(3):
            for b in range(3):
                grad[j, ..., a, b] = (1.0 if a == b else 0.0) \
                    + grid.ifftn_real(dx_hat(grid, hat[a], b))
    gap = 3.0 * np.abs(grad - np.eye(3)).max()
    if gap > jac_gap_limit:
        raise InvariantError(
            f"slab {u}: |Id - grad xi| bound {gap:.3f} exceeds "
            f"{jac_gap_limit}; parameters leave the admissible regime")
    ginv = _batched_inv3(grad)
    det = _batched_det3(grad)

    dm = modes if modes is not None else DriftModes(drift)
    return FlowChart(u=u, t_u=t_u, grid=grid, times=node_times,
                     node_index=sel, omega=omega, grad_xi=grad,
                     grad_xi_inv=ginv, det_grad_xi=det,
                     drift_modes=dm, flow_h=h)


def _transport_rk4(grid: Grid3, drift: TimeSampledField, w, t, dt):
    def rhs(tt, ww):
        v = drift.values_at(tt)
        hat = grid.fftn(ww)
        out = np.empty_like(ww)
        for a in range(3):
            acc = None
            for b in range(3):
                term = v[b] * grid.ifftn_real(dx_hat(grid, hat[a], b))
                acc = term if acc is None else acc + term
            out[a] = -acc - v[a]
        return out

    k1 = rhs(t, w)
    k2 = rhs(t + dt / 2, w + dt / 2 * k1)
    k3 = rhs(t + dt / 2, w + dt / 2 * k2)
    k4 = rhs(t + dt, w + dt * k3)
    return w + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def advective_derivative(F: TimeSampledField,
                         drift: TimeSampledField) -> TimeSampledField:
    """Material derivative along the drift: FD time derivative plus
    spectral spatial gradient contracted with the drift."""
    from .spectral import time_derivative_series
    if not F.same_axis(drift):
        raise DomainError("field and drift must share the time axis")
    out = time_derivative_series(F).materialized().copy()
    grid = F.grid
    comps = F.slices.shape[1] if F.rank else 1
    for j in range(F.nt):
        v = drift.slice(j)
        fj = F.slice(j)
        fjc = fj[None, ...] if F.rank == 0 else fj
        hat = grid.fftn(fjc)
        for c in range(comps):
            adv = None
            for b in range(3):
                term = v[b] * grid.ifftn_real(dx_hat(grid, hat[c], b))
                adv = term if adv is None else adv + term
            if F.rank == 0:
                out[j] += adv
            else:
                out[j, c] += adv
    return TimeSampledField(F.grid, F.t0, F.t1, F.nt, out, F.rank)


def drift_from(m: TimeSampledField, rho: TimeSampledField) -> TimeSampledField:
    """Pointwise m/rho on the shared time axis."""
    if not m.same_axis(rho):
        raise DomainError("momentum and density must share the time axis")
    if m.stationary and rho.stationary:
        return TimeSampledField.stationary_from(
            m.grid, m.t0, m.t1, m.nt, m.slices[0] / rho.slices[0], 1)
    vals = m.materialized() / rho.materialized()[:, None, ...]
    return TimeSampledField(m.grid, m.t0, m.t1, m.nt, vals, 1)