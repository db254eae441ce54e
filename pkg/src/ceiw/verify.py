"""Independent verification: relaxed-system residuals, the inductive norm
ledger, energy accounting, and bifurcation audits.

Residuals use spectral space derivatives and the same 4th-order time
stencils as the assembly, so construction identities cancel to rounding
and the reported numbers isolate genuine discretization error. Inequality
rows are reported with the configured constants and never asserted;
identity rows carry tolerances.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError
from .fields import Grid3, ScalarField, TimeSampledField, VectorField
from .flows import drift_from
from .mollify import _sym_outer
from .schedule import ParameterSchedule
from .seeding import _symvec_dot
from .spectral import (div_sym_tensor_values, divergence_values, dx_hat,
                       fd_stencil, gradient_values)
from .tuples import EulerReynoldsTuple


@dataclass
class ResidualReport:
    continuity_sup: np.ndarray     # per node
    momentum_sup: np.ndarray
    energy_sup: np.ndarray
    continuity_l2: np.ndarray
    momentum_l2: np.ndarray
    energy_l2: np.ndarray
    times: np.ndarray
    scales: dict

    def worst(self) -> dict:
        return {"continuity": float(self.continuity_sup.max()),
                "momentum": float(self.momentum_sup.max()),
                "energy": float(self.energy_sup.max())}

    def as_dict(self) -> dict:
        return {"worst": self.worst(),
                "times": self.times.tolist(),
                "continuity_sup": self.continuity_sup.tolist(),
                "momentum_sup": self.momentum_sup.tolist(),
                "energy_sup": self.energy_sup.tolist(),
                "scales": self.scales}


def _fd_at(F: TimeSampledField, j: int) -> np.ndarray:
    offs, w = fd_stencil(j, F.nt)
    acc = None
    for o, wi in zip(offs, w):
        term = wi * F.slice(j + int(o))
        acc = term if acc is None else acc + term
    return acc / F.dt


def _fd_values(slices_fn, j: int, nt: int, dt: float) -> np.ndarray:
    """FD of a derived nodal quantity given by slices_fn(node)."""
    offs, w = fd_stencil(j, nt)
    acc = None
    for o, wi in zip(offs, w):
        term = wi * slices_fn(j + int(o))
        acc = term if acc is None else acc + term
    return acc / dt


def system_residual(tup: EulerReynoldsTuple, s: ParameterSchedule | None = None,
                    nodes=None) -> ResidualReport:
    """Pointwise residuals of the three relaxed equations at every node.

    The energy equation's advective trace term is evaluated in the
    conservative form d_t(rho kappa) + div(kappa m), which is what the
    continuity equation makes of it.
    """
    grid = tup.grid
    nt = tup.nt
    dt = tup.m.dt
    rho, m, R, phi = tup.rho, tup.m, tup.R, tup.phi
    pr = tup.pressure
    all_stationary = (rho.stationary and m.stationary and R.stationary
                      and phi.stationary and not np.any(tup.E)
                      and not np.any(tup.dE))
    node_list = list(range(nt)) if nodes is None else list(nodes)
    if all_stationary:
        node_list = [nt // 2]

    def kinetic(j):
        return 0.5 * (m.slice(j) ** 2).sum(axis=0) / rho.slice(j) \
            + pr.potential(rho.slice(j))

    def rho_kappa(j):
        Rj = R.slice(j)
        return 0.5 * rho.slice(j) * (Rj[0] + Rj[1] + Rj[2])

    c_sup = np.zeros(len(node_list))
    m_sup = np.zeros(len(node_list))
    e_sup = np.zeros(len(node_list))
    c_l2 = np.zeros(len(node_list))
    m_l2 = np.zeros(len(node_list))
    e_l2 = np.zeros(len(node_list))
    scales = {"m": float(np.abs(m.slices).max()),
              "R": float(np.abs(R.slices).max()),
              "phi": float(np.abs(phi.slices).max())}

    for a, j in enumerate(node_list):
        rho_j = rho.slice(j)
        m_j = m.slice(j)
        R_j = R.slice(j)
        phi_j = phi.slice(j)

        r1 = _fd_at(rho, j) + divergence_values(grid, m_j)

        flux_m = _sym_outer(m_j, m_j) / rho_j
        pres = gradient_values(grid, pr.p(rho_j))
        stress = div_sym_tensor_values(
            grid, rho_j * R_j - tup.c_q * rho_j * _id6(grid, rho_j))
        r2 = _fd_at(m, j) + div_sym_tensor_values(grid, flux_m) \
            + pres - stress

        kap = 0.5 * (R_j[0] + R_j[1] + R_j[2])
        flux_e = m_j * ((0.5 * (m_j ** 2).sum(axis=0) / rho_j
                         + rho_j * pr.dpotential(rho_j)) / rho_j)
        lhs = _fd_values(kinetic, j, nt, dt) \
            + divergence_values(grid, flux_e)
        Rm = _symvec_dot(R_j, m_j) - tup.c_q * m_j
        rhs = _fd_values(rho_kappa, j, nt, dt) \
            + divergence_values(grid, kap * m_j) \
            + divergence_values(grid, Rm) \
            + divergence_values(grid, rho_j * phi_j) \
            + tup.dE[j]
        r3 = lhs - rhs

        c_sup[a] = np.abs(r1).max()
        m_sup[a] = np.abs(r2).max()
        e_sup[a] = np.abs(r3).max()
        c_l2[a] = np.sqrt((r1 ** 2).mean())
        m_l2[a] = np.sqrt((r2 ** 2).sum(axis=0).mean())
        e_l2[a] = np.sqrt((r3 ** 2).mean())

    times = tup.times[node_list]
    return ResidualReport(continuity_sup=c_sup, momentum_sup=m_sup,
                          energy_sup=e_sup, continuity_l2=c_l2,
                          momentum_l2=m_l2, energy_l2=e_l2, times=times,
                          scales=scales)


_ID6 = {}


def _id6(grid: Grid3, like: np.ndarray) -> np.ndarray:
    if grid.n not in _ID6:
        arr = np.zeros((6, grid.n, grid.n, grid.n))
        arr[0] = arr[1] = arr[2] = 1.0
        _ID6[grid.n] = arr
    return _ID6[grid.n]


@dataclass
class LedgerRow:
    name: str
    value: float
    bound: float

    @property
    def ratio(self) -> float:
        return self.value / self.bound if self.bound > 0 else np.inf

    @property
    def passed(self) -> bool:
        return self.value <= self.bound


def _cn_sup(grid: Grid3, values: np.ndarray, N: int) -> float:
    if N == 0:
        return float(np.abs(values).max())
    vals = values if values.ndim == 4 else values[None]
    worst = 0.0
    for c in range(vals.shape[0]):
        hat = grid.fftn(vals[c])
        for combo in itertools.combinations_with_replacement(range(3), N):
            h = hat
            for ax in combo:
                h = dx_hat(grid, h, ax)
            worst = max(worst, float(np.abs(grid.ifftn(h).real).max()))
    return worst


def inductive_ledger(tup: EulerReynoldsTuple, s: ParameterSchedule,
                     max_nodes: int = 5) -> list[LedgerRow]:
    """Measured inductive norms against the configured ladder bounds.

    Outcomes are data; nothing is asserted. For long axes the spatial
    derivative norms are sampled on up to max_nodes evenly spaced nodes.
    """
    grid = tup.grid
    lam, dq, dqp = s.lambda_q, s.delta_q, s.delta_qp1
    Mb, Mu = s.constants.M_big, s.constants.M_under
    g3 = 3.0 * s.gamma
    if tup.m.stationary:
        sample = [0]
    else:
        sample = sorted({int(round(x)) for x in
                         np.linspace(0, tup.nt - 1,
                                     min(max_nodes, tup.nt))})

    def norm_n(F: TimeSampledField, N: int) -> float:
        return max(_cn_sup(grid, F.slice(j), N) for j in
                   (sample if not F.stationary else [0]))

    rows = [LedgerRow("m_C0", norm_n(tup.m, 0), Mu - math_sqrt(dq))]
    for N in (1, 2):
        rows.append(LedgerRow(f"m_C{N}", norm_n(tup.m, N),
                              Mb * lam ** N * np.sqrt(dq)))
    for N in (0, 1, 2):
        rows.append(LedgerRow(f"R_C{N}", norm_n(tup.R, N),
                              lam ** (N - g3) * dqp))
        rows.append(LedgerRow(f"phi_C{N}", norm_n(tup.phi, N),
                              lam ** (N - g3) * dqp ** 1.5))

    drift = drift_from(tup.m, tup.rho)
    from .flows import advective_derivative
    for label, F, damp in (("R", tup.R, dqp), ("phi", tup.phi, dqp ** 1.5)):
        dF = advective_derivative(F, drift)
        for N in (1, 2):
            rows.append(LedgerRow(
                f"Dt_{label}_C{N - 1}", norm_n(dF, N - 1),
                lam ** (N - g3) * np.sqrt(dq) * damp))
    return rows


def math_sqrt(x: float) -> float:
    return float(np.sqrt(x))


@dataclass
class EnergyAccount:
    times: np.ndarray
    total_energy: np.ndarray       # kinetic + internal
    effective_energy: np.ndarray   # minus the stress-trace ledger
    E: np.ndarray
    strictly_decreasing: bool      # of the effective series
    increments_vs_loss: np.ndarray

    def as_dict(self):
        return {"times": self.times.tolist(),
                "total_energy": self.total_energy.tolist(),
                "effective_energy": self.effective_energy.tolist(),
                "E": self.E.tolist(),
                "strictly_decreasing": bool(self.strictly_decreasing),
                "increments_vs_loss": self.increments_vs_loss.tolist()}


def energy_account(tup: EulerReynoldsTuple) -> EnergyAccount:
    """Energy series of the tuple against the prescribed loss.

    A relaxed tuple stores future dissipation in the stress trace, so the
    plain kinetic + internal series is flat by construction; the effective
    series subtracts the trace ledger int(rho kappa) and is the quantity
    whose increments follow the prescribed loss and whose monotonicity is
    flagged.
    """
    vol = (2.0 * np.pi) ** 3
    total = np.empty(tup.nt)
    ledger = np.empty(tup.nt)
    for j in range(tup.nt):
        rho_j = tup.rho.slice(j)
        dens = 0.5 * (tup.m.slice(j) ** 2).sum(axis=0) / rho_j \
            + rho_j * tup.pressure.e(rho_j)
        total[j] = dens.mean() * vol
        R_j = tup.R.slice(j)
        ledger[j] = (0.5 * rho_j * (R_j[0] + R_j[1] + R_j[2])).mean() * vol
    effective = total - ledger
    inc = np.diff(effective)
    dE_inc = np.diff(tup.E) * vol
    return EnergyAccount(times=tup.times, total_energy=total,
                         effective_energy=effective, E=tup.E.copy(),
                         strictly_decreasing=bool((inc < 0).all()),
                         increments_vs_loss=inc - dE_inc)


@dataclass
class BifurcationReport:
    initial_gap: float
    separation_l2: float
    support_nodes: np.ndarray
    support_window: tuple[float, float]
    allowed_window: tuple[float, float]
    support_ok: bool

    def as_dict(self):
        return {"initial_gap": self.initial_gap,
                "separation_l2": self.separation_l2,
                "support_window": list(self.support_window),
                "allowed_window": list(self.allowed_window),
                "support_ok": bool(self.support_ok)}


def bifurcation_audit(tup_a: EulerReynoldsTuple, tup_b: EulerReynoldsTuple,
                      interval: tuple[float, float],
                      s: ParameterSchedule | None = None,
                      rel_tol: float = 1e-13) -> BifurcationReport:
    """Temporal support of the pair differences and their L2 separation.

    The allowed support window is the interval enlarged by the inherited
    time scale 1/(lambda_q delta_q^(1/2)) when a schedule is given.
    """
    if tup_a.grid != tup_b.grid or not tup_a.m.same_axis(tup_b.m):
        raise ShapeError("tuples must share grid and time axis")
    vol = (2.0 * np.pi) ** 3
    nt = tup_a.nt
    sup_gap = np.zeros(nt)
    sep = np.zeros(nt)
    for j in range(nt):
        dm = tup_a.m.slice(j) - tup_b.m.slice(j)
        dR = tup_a.R.slice(j) - tup_b.R.slice(j)
        dphi = tup_a.phi.slice(j) - tup_b.phi.slice(j)
        sup_gap[j] = max(np.abs(dm).max(), np.abs(dR).max(),
                         np.abs(dphi).max())
        sep[j] = np.sqrt((dm ** 2).sum(axis=0).mean() * vol)
    scale = max(np.abs(tup_a.m.slices).max(), np.abs(tup_a.R.slices).max(),
                np.abs(tup_a.phi.slices).max(), 1e-300)
    active = sup_gap > rel_tol * scale
    times = tup_a.times
    if active.any():
        lo, hi = float(times[active].min()), float(times[active].max())
    else:
        lo, hi = np.nan, np.nan
    slack = 0.0
    if s is not None:
        slack = 1.0 / (s.lambda_q * np.sqrt(s.delta_q))
    allowed = (interval[0] - slack, interval[1] + slack)
    ok = (not active.any()) or (allowed[0] <= lo and hi <= allowed[1])
    j0 = int(np.argmin(np.abs(times)))
    init_gap = float(np.abs(tup_a.m.slice(j0) - tup_b.m.slice(j0)).max())
    return BifurcationReport(
        initial_gap=init_gap, separation_l2=float(sep.max()),
        support_nodes=np.nonzero(active)[0],
        support_window=(lo, hi), allowed_window=allowed, support_ok=bool(ok))