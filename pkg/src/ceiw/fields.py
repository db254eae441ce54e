"""Periodic fields on the cube [-pi, pi)^3 with dual grid/Fourier storage.

Grid values are authoritative; Fourier coefficients are a cached view in
the numpy fftn layout. The helper `true_coefficients` converts to the
coefficients of exp(i k.x) with respect to the actual node coordinates
x_j = -pi + 2*pi*j/n.
"""

from __future__ import annotations

import os
from functools import cached_property

import numpy as np
from scipy import fft as sfft

from .errors import DomainError, ShapeError


def fft_workers() -> int:
    """Worker count for FFTs, capped by the CEIW_THREADS environment variable."""
    cap = os.environ.get("CEIW_THREADS")
    n = os.cpu_count() or 1
    if cap:
        try:
            n = max(1, min(n, int(cap)))
        except ValueError:
            pass
    return n


class Grid3:
    """Uniform n^3 grid on the periodic cube, n a power of two, n >= 8."""

    def __init__(self, n: int):
        if n < 8 or (n & (n - 1)) != 0:
            raise DomainError(f"grid size n={n} must be a power of two >= 8")
        self.n = int(n)
        self.spacing = 2.0 * np.pi / self.n

    def __eq__(self, other):
        return isinstance(other, Grid3) and other.n == self.n

    def __hash__(self):
        return hash(("Grid3", self.n))

    def __repr__(self):
        return f"Grid3(n={self.n})"

    @cached_property
    def axis(self) -> np.ndarray:
        """Node coordinates along one axis: -pi + j*2*pi/n."""
        return -np.pi + self.spacing * np.arange(self.n)

    @cached_property
    def k1d(self) -> np.ndarray:
        """Integer wavenumbers in fftn layout."""
        return np.rint(np.fft.fftfreq(self.n) * self.n).astype(np.int64)

    @cached_property
    def kmesh(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        k = self.k1d.astype(np.float64)
        return np.meshgrid(k, k, k, indexing="ij")

    @cached_property
    def k2(self) -> np.ndarray:
        kx, ky, kz = self.kmesh
        return kx * kx + ky * ky + kz * kz

    @cached_property
    def kabs(self) -> np.ndarray:
        return np.sqrt(self.k2)

    @cached_property
    def phase_sign(self) -> np.ndarray:
        """(-1)^(k1+k2+k3): converts fftn output to exp(i k.x) coefficients."""
        s1 = np.where(self.k1d % 2 == 0, 1.0, -1.0)
        return s1[:, None, None] * s1[None, :, None] * s1[None, None, :]

    @cached_property
    def nyquist_mask(self) -> np.ndarray:
        """True on the unpaired Nyquist planes (k = -n/2 along any axis)."""
        ny = -self.n // 2
        kx, ky, kz = self.kmesh
        return (kx == ny) | (ky == ny) | (kz == ny)

    def meshes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        a = self.axis
        return np.meshgrid(a, a, a, indexing="ij")

    def fftn(self, values: np.ndarray) -> np.ndarray:
        return sfft.fftn(values, axes=(-3, -2, -1), workers=fft_workers())

    def ifftn(self, spectrum: np.ndarray) -> np.ndarray:
        return sfft.ifftn(spectrum, axes=(-3, -2, -1), workers=fft_workers())

    def ifftn_real(self, spectrum: np.ndarray) -> np.ndarray:
        return np.ascontiguousarray(self.ifftn(spectrum).real)


_COMP = {0: 1, 1: 3, 2: 6}
# Symmetric-tensor component order: (0,0),(1,1),(2,2),(0,1),(0,2),(1,2).
SYM_IDX = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))
SYM_OF = {(i, j): a for a, (i, j) in enumerate(SYM_IDX)}
SYM_OF.update({(j, i): a for a, (i, j) in enumerate(SYM_IDX)})


class Field:
    """Grid samples of a rank-0/1/2 periodic field.

    rank 0: values (n,n,n); rank 1: (3,n,n,n); rank 2 symmetric: (6,n,n,n)
    in the component order of SYM_IDX.
    """

    rank = None

    def __init__(self, grid: Grid3, values: np.ndarray):
        values = np.asarray(values, dtype=np.float64)
        comps = _COMP[self.rank]
        want = (comps,) * (self.rank > 0) + (grid.n,) * 3
        if values.shape != want:
            raise ShapeError(
                f"rank-{self.rank} field on n={grid.n} needs shape {want}, "
                f"got {values.shape}")
        self.grid = grid
        self.values = values
        self._hat = None

    @property
    def hat(self) -> np.ndarray:
        """Cached spectrum in numpy fftn layout."""
        if self._hat is None:
            self._hat = self.grid.fftn(self.values)
        return self._hat

    def true_coefficients(self) -> np.ndarray:
        """Coefficients of exp(i k.x) for nodes at -pi + 2*pi*j/n."""
        return self.hat * (self.grid.phase_sign / self.grid.n ** 3)

    def mean(self) -> np.ndarray | float:
        axes = (-3, -2, -1)
        m = self.values.mean(axis=axes)
        return float(m) if self.rank == 0 else m

    def l2(self) -> float:
        """L2 norm with unit-mass normalization, sqrt(<|f|^2>)."""
        if self.rank:
            return float(np.sqrt((self.values ** 2).sum(axis=0).mean()))
        return float(np.sqrt((self.values ** 2).mean()))

    def sup(self) -> float:
        return float(np.abs(self.values).max())

    def copy(self):
        return type(self)(self.grid, self.values.copy())


class ScalarField(Field):
    rank = 0


class VectorField(Field):
    rank = 1


class SymTensorField(Field):
    rank = 2

    def full(self) -> np.ndarray:
        """Expand to a (3,3,n,n,n) array."""
        v = self.values
        out = np.empty((3, 3) + v.shape[1:])
        for a, (i, j) in enumerate(SYM_IDX):
            out[i, j] = v[a]
            out[j, i] = v[a]
        return out

    def trace(self) -> ScalarField:
        return ScalarField(self.grid, self.values[0] + self.values[1]
                           + self.values[2])

    @staticmethod
    def from_full(grid: Grid3, full: np.ndarray) -> "SymTensorField":
        v = np.stack([full[i, j] for (i, j) in SYM_IDX])
        return SymTensorField(grid, v)


def field_of_rank(rank: int, grid: Grid3, values: np.ndarray) -> Field:
    return {0: ScalarField, 1: VectorField, 2: SymTensorField}[rank](grid, values)


class TimeSampledField:
    """Uniformly time-sampled field on a window [t0, t1].

    slices: array of shape (nt, ...spatial...). A stationary field may be
    built from a single slice; it is then broadcast on access without
    storing copies.
    """

    def __init__(self, grid: Grid3, t0: float, t1: float, nt: int,
                 slices: np.ndarray, rank: int, stationary: bool = False):
        if nt < 5:
            raise DomainError(f"time sampling needs nt >= 5, got {nt}")
        if not t1 > t0:
            raise DomainError("empty time window")
        self.grid = grid
        self.t0 = float(t0)
        self.t1 = float(t1)
        self.nt = int(nt)
        self.rank = rank
        self.stationary = bool(stationary)
        want_tail = ((_COMP[rank],) if rank else ()) + (grid.n,) * 3
        want = ((1 if stationary else nt),) + want_tail
        slices = np.asarray(slices, dtype=np.float64)
        if slices.shape != want:
            raise ShapeError(f"expected slices of shape {want}, got {slices.shape}")
        self.slices = slices

    @property
    def dt(self) -> float:
        return (self.t1 - self.t0) / (self.nt - 1)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.nt)

    def slice(self, j: int) -> np.ndarray:
        return self.slices[0] if self.stationary else self.slices[j]

    def field(self, j: int) -> Field:
        return field_of_rank(self.rank, self.grid, self.slice(j))

    def values_at(self, t: float) -> np.ndarray:
        """Linear interpolation between bracketing slices."""
        if t < self.t0 - 1e-12 * max(1.0, abs(self.t0)) or \
           t > self.t1 + 1e-12 * max(1.0, abs(self.t1)):
            from .errors import WindowError
            raise WindowError(f"t={t} outside [{self.t0}, {self.t1}]")
        if self.stationary:
            return self.slices[0]
        s = (t - self.t0) / self.dt
        j = int(np.clip(np.floor(s), 0, self.nt - 2))
        w = s - j
        if w == 0.0:
            return self.slices[j]
        return (1.0 - w) * self.slices[j] + w * self.slices[j + 1]

    @staticmethod
    def stationary_from(grid: Grid3, t0: float, t1: float, nt: int,
                        values: np.ndarray, rank: int) -> "TimeSampledField":
        return TimeSampledField(grid, t0, t1, nt, values[None, ...], rank,
                                stationary=True)

    @staticmethod
    def from_slices(grid: Grid3, t0: float, t1: float,
                    slices: np.ndarray, rank: int) -> "TimeSampledField":
        return TimeSampledField(grid, t0, t1, slices.shape[0], slices, rank)

    def materialized(self) -> np.ndarray:
        """Dense (nt, ...) array regardless of the stationary optimization."""
        if self.stationary:
            return np.broadcast_to(
                self.slices, (self.nt,) + self.slices.shape[1:])
        return self.slices

    def window_contains(self, a: float, b: float, slack: float = 0.0) -> bool:
        return self.t0 <= a - slack + 1e-15 and b + slack - 1e-15 <= self.t1

    def same_axis(self, other: "TimeSampledField") -> bool:
        return (self.grid == other.grid and self.nt == other.nt
                and abs(self.t0 - other.t0) < 1e-13
                and abs(self.t1 - other.t1) < 1e-13)
