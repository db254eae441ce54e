"""Space-time cutoff system whose sixth powers partition unity.

The 1-D time bump equals 1 on [1/8, 7/8] and vanishes outside (-1/8, 9/8);
the 3-D space bump is a per-axis product equal to 1 on the closed cube of
half-width 7pi/8 and supported in the open cube of half-width 9pi/8,
periodized over 2pi Z^3. Each family is normalized by the sixth root of the
sixth-power sum, which leaves the plateaus untouched and makes the
partition identity exact.
"""

from __future__ import annotations

import numpy as np

from .schedule import ParameterSchedule
from .spectral import smooth_step


def time_bump_raw(t: np.ndarray) -> np.ndarray:
    """Unnormalized time bump: 1 on [1/8,7/8], support (-1/8, 9/8)."""
    t = np.asarray(t, dtype=np.float64)
    up = smooth_step((t + 0.125) / 0.25)
    down = smooth_step((1.125 - t) / 0.25)
    return np.minimum(up, down)


def theta_u(u: int, t: np.ndarray) -> np.ndarray:
    """Normalized time bump theta_u(t) = theta_0(t - u), sixth-power partition."""
    t = np.asarray(t, dtype=np.float64)
    num = time_bump_raw(t - u)
    den = np.zeros_like(t)
    base = np.floor(t).astype(int)
    for off in (-1, 0, 1):
        den += time_bump_raw(t - (base + off)) ** 6
    return num / den ** (1.0 / 6.0)


def space_bump_raw_1d(y: np.ndarray) -> np.ndarray:
    """Unnormalized per-axis bump: 1 on |y| <= 7pi/8, support |y| < 9pi/8."""
    w = np.pi / 4.0
    y = np.abs(np.asarray(y, dtype=np.float64))
    return smooth_step((9.0 * np.pi / 8.0 - y) / w)


def chi_1d(y: np.ndarray, period: float) -> np.ndarray:
    """Axis bump periodized over `period` (the cell-lattice span 2*pi*mu_inv),
    normalized so the sixth powers of all 2*pi-translates sum to 1."""
    y = np.asarray(y, dtype=np.float64)
    ywrap = np.mod(y + period / 2.0, period) - period / 2.0
    num = space_bump_raw_1d(ywrap)
    base = np.floor(y / (2.0 * np.pi)).astype(int)
    den = np.zeros_like(y)
    for off in (-1, 0, 1):
        den += space_bump_raw_1d(y - 2.0 * np.pi * (base + off)) ** 6
    return num / den ** (1.0 / 6.0)


class CutoffSystem:
    """Evaluators for the time and space cutoffs of one inductive step.

    Reynolds indices use the cube of the normalized bumps (power 3), flux
    indices the square (power 2), so that squares and cubes respectively
    recombine into the sixth-power partition of unity.
    """

    def __init__(self, s: ParameterSchedule):
        self.tau = s.tau_q
        self.mu = s.mu_q
        self.mu_inv = s.mu_inv

    # -- time ---------------------------------------------------------------

    def theta(self, u: int, t, power: int) -> np.ndarray:
        return theta_u(u, np.asarray(t, dtype=np.float64) / self.tau) ** power

    def theta_support(self, u: int) -> tuple[float, float]:
        return ((u - 0.125) * self.tau, (u + 1.125) * self.tau)

    def active_slabs(self, t0: float, t1: float) -> list[int]:
        """Slab indices whose time bump meets [t0, t1]."""
        lo = int(np.floor(t0 / self.tau - 1.125))
        hi = int(np.ceil(t1 / self.tau + 0.125))
        out = []
        for u in range(lo, hi + 1):
            a, b = self.theta_support(u)
            if b > t0 and a < t1:
                out.append(u)
        return out

    def theta_partition_sum(self, t) -> np.ndarray:
        ts = np.asarray(t, dtype=np.float64) / self.tau
        base = np.floor(ts).astype(int)
        total = np.zeros_like(ts)
        for off in (-1, 0, 1):
            total += theta_u(0, ts - (base + off)) ** 6
        return total

    # -- space --------------------------------------------------------------

    def chi(self, v, points: np.ndarray, power: int) -> np.ndarray:
        """chi_v(x/mu)^power at points (N, 3); v is an integer triple."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64)) / self.mu
        period = 2.0 * np.pi * self.mu_inv
        out = np.ones(pts.shape[0])
        for d in range(3):
            out = out * chi_1d(pts[:, d] - 2.0 * np.pi * v[d], period)
        return out ** power

    def chi_grid(self, v, grid, power: int) -> np.ndarray:
        """chi_v(x/mu)^power on the full grid, tensor-factorized per axis."""
        ax = grid.axis / self.mu
        period = 2.0 * np.pi * self.mu_inv
        fac = [chi_1d(ax - 2.0 * np.pi * v[d], period) for d in range(3)]
        return (fac[0][:, None, None] * fac[1][None, :, None]
                * fac[2][None, None, :]) ** power

    def chi_partition_sum(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64)) / self.mu
        total = np.ones(pts.shape[0])
        for d in range(3):
            y = pts[:, d]
            cells = np.floor(y / (2.0 * np.pi)).astype(int)
            axis_sum = np.zeros_like(y)
            period = 2.0 * np.pi * self.mu_inv
            for off in (-1, 0, 1):
                axis_sum += chi_1d(y - 2.0 * np.pi * (cells + off), period) ** 6
            total = total * axis_sum
        return total

    def cell_center(self, v) -> np.ndarray:
        return 2.0 * np.pi * self.mu * np.asarray(v, dtype=np.float64)

    def cell_box(self, v, pad: float = 0.0) -> tuple[np.ndarray, float]:
        """Center and half-width of the support box of chi_v(x/mu)."""
        return self.cell_center(v), 9.0 * np.pi / 8.0 * self.mu + pad

    def cells(self) -> list[tuple[int, int, int]]:
        r = range(self.mu_inv)
        return [(i, j, k) for i in r for j in r for k in r]


def cutoffs(s: ParameterSchedule) -> CutoffSystem:
    """Cutoff system for the schedule's (tau_q, mu_q)."""
    return CutoffSystem(s)
