"""Starting tuples: stationary density and time-dependent density variants.

The momentum seed is a curl (exactly divergence-free and mean-zero): three
disjoint tube profiles along the coordinate axes are written through their
vector potentials, multiplied by the slow amplitude, and curled spectrally.
Every inverse-divergence argument is the exact discrete defect it must
cancel, so the relaxed system holds to rounding for stationary data; the
printed split forms are recovered up to tube-overlap leakage, which is
reported rather than assumed away.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (CompatibilityError, DomainError, ParameterError,
                     PositivityError)
from .fields import (Grid3, ScalarField, SymTensorField, TimeSampledField,
                     VectorField)
from .mikado import MikadoProfile, build_profile, mikado_field, mikado_modes
from .mollify import _sym_outer
from .schedule import ParameterSchedule
from .spectral import (curl_values, div_sym_tensor_values, divergence_values,
                       dx_hat, gradient_values, inverse_divergence_tensor,
                       inverse_divergence_vector, time_derivative_series)
from .tuples import EulerReynoldsTuple, Pressure

SEED_SHIFTS = (np.array([0.0, 0.0, 0.0]),
               np.array([0.0, 0.0, np.pi]),
               np.array([np.pi, np.pi, 0.0]))
AXES = ((1, 0, 0), (0, 1, 0), (0, 0, 1))


@dataclass
class EnergyLoss:
    """Prescribed nonincreasing energy-loss profile with exact derivative."""

    amplitude: float     # asymptotic loss magnitude
    rate: float

    def E(self, t):
        t = np.asarray(t, dtype=np.float64)
        return -self.amplitude * (1.0 - np.exp(-self.rate * t))

    def dE(self, t):
        t = np.asarray(t, dtype=np.float64)
        return -self.amplitude * self.rate * np.exp(-self.rate * t)

    @staticmethod
    def zero() -> "EnergyLoss":
        return EnergyLoss(amplitude=0.0, rate=1.0)


def energy_loss_profile(s: ParameterSchedule, C_seed: float) -> EnergyLoss:
    """Decaying-exponential loss profile at the scale the ladder allows.

    E(0) = 0, E' < 0 everywhere, sup|E| = lambda0^(-3 gamma) delta_1^(3/2)
    / (8 C_seed), decay rate lambda0 delta_0^(1/2).
    """
    if C_seed <= 0:
        raise DomainError("C_seed must be positive")
    s0 = s
    if s.q != 0:
        from .schedule import build_schedule
        s0 = build_schedule(s.lambda0, s.b, s.alpha, 0, constants=s.constants,
                            T=s.T)
    amp = s0.lambda0 ** (-3.0 * s0.gamma) * s0.delta_qp1 ** 1.5 / (8.0 * C_seed)
    rate = s0.lambda0 * math.sqrt(s0.delta_q)
    return EnergyLoss(amplitude=amp, rate=rate)


@dataclass
class StartingTuple:
    tup: EulerReynoldsTuple
    m_bar: np.ndarray            # preponderant momentum part
    nu: np.ndarray               # curl corrector
    lam_bar: int
    C_seed: float                # measured constant of the seed inequalities
    lam_bar_window: tuple[float, float]
    lam_bar_ok: bool
    profiles: tuple[MikadoProfile, ...]
    energy: EnergyLoss
    notes: tuple[str, ...] = ()


def _seed_axis(s: ParameterSchedule, nt: int, margin_scale: float = 1.05):
    """Time axis [0,T] + margin covering flow and mollification needs."""
    margin = max(s.tau_qm1, 2.0 * s.tau_q + s.ell_t) * margin_scale
    return -margin, s.T + margin, nt


def _vector_potential(profiles, lam_bar: int, grid: Grid3) -> np.ndarray:
    """Sum of tube vector potentials W with curl W = sum_i psi_i e_i."""
    n = grid.n
    spec = np.zeros((3, n, n, n), dtype=np.complex128)
    for prof, shift, axis in zip(profiles, SEED_SHIFTS, AXES):
        kv, cf = mikado_modes(prof, shift, lam_bar)
        if np.abs(kv).max() >= n // 2:
            raise DomainError("seed oscillation exceeds the grid Nyquist")
        keep = np.any(kv != 0, axis=1)
        kv, cf = kv[keep], cf[keep]
        e = np.array(axis, dtype=np.float64)
        kxe = np.cross(kv.astype(np.float64), np.broadcast_to(e, kv.shape))
        k2 = (kv.astype(np.float64) ** 2).sum(axis=1)
        # kv already carries the oscillation scale; curl of these modes
        # reproduces psi_i e_i exactly because e.k = 0 on the sublattice
        coeff = 1j * cf[:, None] * kxe / k2[:, None]
        for c in range(3):
            np.add.at(spec[c], (kv[:, 0], kv[:, 1], kv[:, 2]), coeff[:, c])
    spec *= grid.phase_sign * n ** 3
    return grid.ifftn(spec).real


def stationary_seed(rho0: ScalarField, pressure: Pressure,
                    s: ParameterSchedule, energy: EnergyLoss | None = None,
                    lam_bar: int = 1, nt: int = 33,
                    r0: float = 1.1, mode_cut: int = 6,
                    eps0: float = 1e-3,
                    demo_mode: bool = True) -> StartingTuple:
    """Starting tuple with stationary density.

    The relaxed system holds to rounding by construction: the momentum is
    an exact spectral curl and both inverse-divergence arguments are the
    discrete defects of the equations they solve.
    """
    grid = rho0.grid
    rho_vals = rho0.values
    if rho_vals.min() < eps0:
        raise PositivityError(
            f"density floor {rho_vals.min():.3e} below {eps0}")
    if lam_bar < 1 or int(lam_bar) != lam_bar:
        raise ParameterError("lam_bar must be a positive integer")
    energy = energy if energy is not None else EnergyLoss.zero()
    notes = []

    c0 = s.c_q if s.q == 0 else None
    if c0 is None:
        raise DomainError("stationary seed is a step-0 object; pass q=0")

    p_vals = pressure.p(rho_vals)
    cbar = 2.0 * (np.abs(p_vals).max() + c0 * np.abs(rho_vals).max())
    sq_arg = cbar - p_vals - c0 * rho_vals
    if sq_arg.min() <= 0:
        raise PositivityError("pressure-dominance argument dipped below zero")
    amp = np.sqrt(rho_vals) * np.sqrt(sq_arg)

    profiles = tuple(build_profile(ax, "R", r0, mode_cut) for ax in AXES)
    psi_fields = [mikado_field(p, sh, lam_bar, grid).values
                  for p, sh in zip(profiles, SEED_SHIFTS)]
    # psi_fields[i] = e_i * psi_i; the scalar rides on component i
    osc = np.stack([psi_fields[i][i] for i in range(3)])
    m_bar = amp[None, ...] * osc

    W = _vector_potential(profiles, lam_bar, grid)
    m0 = curl_values(grid, amp[None, ...] * W)
    nu = m0 - m_bar

    t0, t1, nt = _seed_axis(s, nt)
    times = np.linspace(t0, t1, nt)
    E_series = energy.E(times)
    dE_series = energy.dE(times)

    # stress: exact momentum defect of the preponderant part under the
    # inverse divergence, plus the direct corrector cross terms and the
    # energy-loss trace carrier
    defect = div_sym_tensor_values(grid,
                                   _sym_outer(m_bar, m_bar) / rho_vals) \
        + gradient_values(grid, p_vals + c0 * rho_vals)
    cross = (_sym_cross(m_bar, nu) + _sym_outer(nu, nu)) / rho_vals
    Rbar = inverse_divergence_tensor(VectorField(grid, defect)).values + cross
    id6 = np.zeros((6,) + rho_vals.shape)
    id6[0] = id6[1] = id6[2] = 1.0
    R_slices = np.stack([
        (Rbar - (2.0 / 3.0) * E_series[j] * id6) / rho_vals
        for j in range(nt)])

    # flux: kinetic flux of the preponderant part under the inverse
    # divergence, direct cubic remainder, pressure-potential transport,
    # and the trace/stress back-reactions
    m2 = (m0 ** 2).sum(axis=0)
    m2_bar = (m_bar ** 2).sum(axis=0)
    dP = pressure.dpotential(rho_vals)
    flux_bar = m_bar * (m2_bar / (2.0 * rho_vals ** 2))
    g2 = divergence_values(grid, flux_bar)
    phi_g2 = inverse_divergence_vector(ScalarField(grid, g2)).values
    phi_rest = (m0 * m2 - m_bar * m2_bar) / (2.0 * rho_vals ** 2)
    mgradP = (m0 * gradient_values(grid, dP)).sum(axis=0)
    phi_grad = inverse_divergence_vector(ScalarField(grid, mgradP)).values

    phi_slices = np.empty((nt, 3) + rho_vals.shape)
    for j in range(nt):
        kappa0 = 0.5 * (R_slices[j][0] + R_slices[j][1] + R_slices[j][2])
        Rm = _symvec_dot(R_slices[j], m0)
        phi_slices[j] = (phi_g2 + phi_rest + phi_grad
                         - kappa0[None] * m0 - Rm) / rho_vals

    rho_t = TimeSampledField.stationary_from(grid, t0, t1, nt, rho_vals, 0)
    m_t = TimeSampledField.stationary_from(grid, t0, t1, nt, m0, 1)
    stationary_R = not np.any(dE_series) and not np.any(E_series)
    if stationary_R:
        R_t = TimeSampledField.stationary_from(grid, t0, t1, nt, R_slices[0], 2)
        phi_t = TimeSampledField.stationary_from(grid, t0, t1, nt,
                                                 phi_slices[0], 1)
    else:
        R_t = TimeSampledField(grid, t0, t1, nt, R_slices, 2)
        phi_t = TimeSampledField(grid, t0, t1, nt, phi_slices, 1)

    tup = EulerReynoldsTuple(grid=grid, rho=rho_t, m=m_t, c_q=c0, R=R_t,
                             phi=phi_t, E=E_series, dE=dE_series,
                             pressure=pressure, q=0,
                             provenance={"kind": "stationary_seed",
                                         "lam_bar": int(lam_bar)})

    C_seed, window, ok = _measure_seed_constant(tup, s, lam_bar, m_bar, nu)
    if not ok:
        msg = (f"lam_bar={lam_bar} outside the admissible window "
               f"[{window[0]:.3g}, {window[1]:.3g}]; proceeding in "
               "demonstration mode (identity checks still enforced)")
        if not demo_mode:
            raise ParameterError(msg)
        notes.append(msg)

    return StartingTuple(tup=tup, m_bar=m_bar, nu=nu, lam_bar=int(lam_bar),
                         C_seed=C_seed, lam_bar_window=window,
                         lam_bar_ok=ok, profiles=profiles, energy=energy,
                         notes=tuple(notes))


def _sym_cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Symmetric storage of a (x) b + b (x) a."""
    return np.stack([2 * a[0] * b[0], 2 * a[1] * b[1], 2 * a[2] * b[2],
                     a[0] * b[1] + a[1] * b[0],
                     a[0] * b[2] + a[2] * b[0],
                     a[1] * b[2] + a[2] * b[1]])


def _symvec_dot(S6: np.ndarray, v: np.ndarray) -> np.ndarray:
    """(S v) for symmetric 6-component storage."""
    return np.stack([
        S6[0] * v[0] + S6[3] * v[1] + S6[4] * v[2],
        S6[3] * v[0] + S6[1] * v[1] + S6[5] * v[2],
        S6[4] * v[0] + S6[5] * v[1] + S6[2] * v[2]])


def _cn_norm(grid: Grid3, values: np.ndarray, N: int) -> float:
    """Sup norm of the N-th spectral derivative tensor."""
    if N == 0:
        return float(np.abs(values).max())
    vals = values if values.ndim == 4 else values[None]
    worst = 0.0
    hats = [grid.fftn(vals[c]) for c in range(vals.shape[0])]
    import itertools as it
    for combo in it.product(range(3), repeat=N):
        for hat in hats:
            h = hat
            for ax in combo:
                h = dx_hat(grid, h, ax)
            worst = max(worst, float(np.abs(grid.ifftn(h).real).max()))
    return worst


def _measure_seed_constant(tup: EulerReynoldsTuple, s: ParameterSchedule,
                           lam_bar: int, m_bar, nu):
    """Largest implicit constant over the seed inequality list, and the
    resulting admissible oscillation window."""
    grid = tup.grid
    ratios = [1.0]
    for N in (1, 2):
        ratios.append(_cn_norm(grid, tup.m.slices[0], N) / lam_bar ** N)
    E0 = float(np.abs(tup.E).max())
    for N in (0, 1, 2):
        r_n = _cn_norm(grid, tup.R.slices[0], N)
        ratios.append(r_n / (lam_bar ** (N - 1) + E0 + 1e-300))
        p_n = _cn_norm(grid, tup.phi.slices[0], N)
        ratios.append(p_n / (lam_bar ** (N - 1) + E0 * lam_bar ** N + 1e-300))
    C = max(ratios)
    lo = 2.0 * C * s.lambda0 ** (3.0 * s.gamma) * s.delta_qp1 ** (-1.5)
    hi = s.lambda0 * math.sqrt(s.delta_q) / (2.0 * C)
    ok = (lo <= lam_bar <= hi)
    return float(C), (float(lo), float(hi)), bool(ok)