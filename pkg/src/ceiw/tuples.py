"""The relaxed-flow state object: density, momentum, trace shift, stress,
unsolved flux, and the prescribed energy-loss series, all on one time axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from .errors import DomainError, ShapeError
from .fields import Grid3, TimeSampledField


class Pressure:
    """Pressure law p(rho) with its potential.

    The potential satisfies rho * e'(rho) = p(rho) / rho ... in the form
    used here: P(rho) = rho * e(rho) with rho P'(rho) = P(rho) + p(rho).
    Polytropic laws use closed forms; a generic callable falls back to
    numerical quadrature for e(rho).
    """

    def __init__(self, kind: str = "zero", kappa: float = 1.0,
                 exponent: float = 2.0, func=None, rho_ref: float = 1.0):
        self.kind = kind
        self.kappa = kappa
        self.exponent = exponent
        self.func = func
        self.rho_ref = rho_ref
        if kind not in ("zero", "polytropic", "custom"):
            raise DomainError(f"unknown pressure kind {kind!r}")
        if kind == "custom" and func is None:
            raise DomainError("custom pressure needs a callable")
        if kind == "polytropic" and abs(exponent - 1.0) < 1e-12:
            raise DomainError("isothermal exponent 1 not supported")

    def p(self, rho):
        rho = np.asarray(rho, dtype=np.float64)
        if self.kind == "zero":
            return np.zeros_like(rho)
        if self.kind == "polytropic":
            return self.kappa * rho ** self.exponent
        return np.vectorize(self.func)(rho)

    def e(self, rho):
        """Specific internal energy, rho^2 e'(rho) = p(rho), e(rho_ref)=0."""
        rho = np.asarray(rho, dtype=np.float64)
        if self.kind == "zero":
            return np.zeros_like(rho)
        if self.kind == "polytropic":
            g = self.exponent
            return self.kappa * (rho ** (g - 1.0)
                                 - self.rho_ref ** (g - 1.0)) / (g - 1.0)
        flat = rho.ravel()
        out = np.array([quad(lambda r: self.func(r) / r ** 2,
                             self.rho_ref, x, limit=200)[0] for x in flat])
        return out.reshape(rho.shape)

    def potential(self, rho):
        """P(rho) = rho e(rho)."""
        return np.asarray(rho) * self.e(rho)

    def dpotential(self, rho):
        """P'(rho) = (P(rho) + p(rho)) / rho."""
        rho = np.asarray(rho, dtype=np.float64)
        return (self.potential(rho) + self.p(rho)) / rho

    def describe(self) -> dict:
        return {"kind": self.kind, "kappa": self.kappa,
                "exponent": self.exponent, "rho_ref": self.rho_ref}


@dataclass
class EulerReynoldsTuple:
    """Time-sampled relaxed-flow tuple with its energy-loss ledger.

    E is sampled on the same axis as the fields; dE is its prescribed
    derivative (kept exact rather than differenced when available).
    """

    grid: Grid3
    rho: TimeSampledField        # scalar
    m: TimeSampledField          # vector
    c_q: float
    R: TimeSampledField          # symmetric tensor
    phi: TimeSampledField        # vector
    E: np.ndarray                # (nt,)
    dE: np.ndarray               # (nt,)
    pressure: Pressure
    q: int = 0
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        for f, rk in ((self.rho, 0), (self.m, 1), (self.R, 2), (self.phi, 1)):
            if f.rank != rk:
                raise ShapeError("tuple field ranks are (0,1,2,1)")
            if not f.same_axis(self.m):
                raise ShapeError("tuple fields must share one time axis")
        if len(self.E) != self.m.nt or len(self.dE) != self.m.nt:
            raise ShapeError("energy series must match the time axis")

    @property
    def nt(self) -> int:
        return self.m.nt

    @property
    def times(self) -> np.ndarray:
        return self.m.times

    @property
    def window(self) -> tuple[float, float]:
        return self.m.t0, self.m.t1

    def density_floor(self) -> float:
        return float(self.rho.slices.min())

    def restricted(self, t0: float, t1: float) -> "EulerReynoldsTuple":
        """Sub-tuple on the contiguous node range covering [t0, t1]."""
        times = self.times
        sel = np.nonzero((times >= t0 - 1e-12) & (times <= t1 + 1e-12))[0]
        if len(sel) < 5:
            raise DomainError("restriction leaves fewer than 5 nodes")
        a, b = int(sel[0]), int(sel[-1])

        def cut(F: TimeSampledField) -> TimeSampledField:
            if F.stationary:
                return TimeSampledField.stationary_from(
                    F.grid, times[a], times[b], b - a + 1, F.slices[0], F.rank)
            return TimeSampledField(F.grid, times[a], times[b], b - a + 1,
                                    F.slices[a:b + 1], F.rank)

        return EulerReynoldsTuple(
            grid=self.grid, rho=cut(self.rho), m=cut(self.m), c_q=self.c_q,
            R=cut(self.R), phi=cut(self.phi), E=self.E[a:b + 1].copy(),
            dE=self.dE[a:b + 1].copy(), pressure=self.pressure, q=self.q,
            provenance=dict(self.provenance))
