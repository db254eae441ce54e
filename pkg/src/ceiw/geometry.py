"""Direction families and the two decomposition lemmas behind the weights.

A Reynolds family is six integer vectors with sum f_i (x) f_i a multiple of
the identity and {f_i (x) f_i} a basis of symmetric 3x3 matrices; it
decomposes matrices near a multiple of the identity with positive squared
weights. A flux family is an integer orthogonal frame f_1,f_2,f_3 closed by
f_4 = -(f_1+f_2+f_3); it decomposes small vectors with affine weights
bounded below.

27 pairwise disjoint family pairs are generated from the base pair by
integer scaled-orthogonal transformations (quaternion construction) and
validated against the structural invariants.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConstructionError, DomainError

BASE_R = ((1, 1, 0), (1, -1, 0), (1, 0, 1), (1, 0, -1), (0, 1, 1), (0, 1, -1))
BASE_PHI = ((1, 2, 0), (-2, 1, 0), (0, 0, 1), (1, -3, -1))

# Component order used to coordinatize symmetric matrices.
_VEC_IDX = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))


def vec6(S: np.ndarray) -> np.ndarray:
    """Coordinates of a symmetric matrix: (S11,S22,S33,S12,S13,S23)."""
    S = np.asarray(S, dtype=np.float64)
    return np.stack([S[..., i, j] for (i, j) in _VEC_IDX], axis=-1)


def unvec6(c: np.ndarray) -> np.ndarray:
    c = np.asarray(c, dtype=np.float64)
    S = np.empty(c.shape[:-1] + (3, 3))
    for a, (i, j) in enumerate(_VEC_IDX):
        S[..., i, j] = c[..., a]
        S[..., j, i] = c[..., a]
    return S


@dataclass(frozen=True)
class DirectionFamilyR:
    j: tuple[int, int, int]
    vectors: tuple[tuple[int, int, int], ...]
    C: float                  # sum f (x) f = C Id
    N0_R: float               # admissible neighborhood radius
    basis_inv: np.ndarray     # inverse of the {f (x) f} coordinate matrix

    def __post_init__(self):
        if len(self.vectors) != 6:
            raise ConstructionError("Reynolds family needs 6 vectors")


@dataclass(frozen=True)
class DirectionFamilyPhi:
    j: tuple[int, int, int]
    vectors: tuple[tuple[int, int, int], ...]

    def __post_init__(self):
        object.__setattr__(self, "vectors",
                           tuple(tuple(int(x) for x in v) for v in self.vectors))
        if len(self.vectors) != 4:
            raise ConstructionError("flux family needs 4 vectors")
        f = [np.array(v) for v in self.vectors]
        for a, b in itertools.combinations(range(3), 2):
            if int(f[a] @ f[b]) != 0:
                raise ConstructionError(
                    f"family {self.j}: vectors {a},{b} not orthogonal")
        if not np.array_equal(f[3], -(f[0] + f[1] + f[2])):
            raise ConstructionError(
                f"family {self.j}: closing vector is not minus the frame sum")


def _basis_matrix(vectors) -> np.ndarray:
    cols = [vec6(np.outer(f, f)) for f in np.asarray(vectors, dtype=np.float64)]
    return np.stack(cols, axis=-1)


def _positivity_margin(basis_inv: np.ndarray, N: float) -> float:
    """Worst-case min coefficient of Id - K over the box |K|_inf <= N.

    The solve is linear in K, so the minimum over the box is attained at a
    vertex and equals base_i - N * sum_j |inv_ij| componentwise.
    """
    base = basis_inv @ vec6(np.eye(3))
    rowabs = np.abs(basis_inv).sum(axis=1)
    return float((base - N * rowabs).min())


def _compute_n0r(basis_inv: np.ndarray) -> float:
    lo, hi = 0.0, 1.0
    if _positivity_margin(basis_inv, hi) > 0:
        while _positivity_margin(basis_inv, hi) > 0:
            hi *= 2.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if _positivity_margin(basis_inv, mid) > 0:
            lo = mid
        else:
            hi = mid
    return lo * (1.0 - 1e-12)


def _make_r_family(j, vectors) -> DirectionFamilyR:
    vectors = tuple(tuple(int(x) for x in f) for f in vectors)
    ff_sum = sum(np.outer(f, f) for f in np.asarray(vectors, dtype=np.int64))
    diag = ff_sum[0, 0]
    if not np.array_equal(ff_sum, diag * np.eye(3, dtype=np.int64)):
        raise ConstructionError(
            f"family {j}: sum of f (x) f is not a multiple of the identity")
    A = _basis_matrix(vectors)
    if np.linalg.matrix_rank(A) != 6:
        raise ConstructionError(f"family {j}: f (x) f do not span")
    inv = np.linalg.inv(A)
    return DirectionFamilyR(j=tuple(j), vectors=vectors, C=float(diag),
                            N0_R=_compute_n0r(inv), basis_inv=inv)


def quaternion_matrix(q: tuple[int, int, int, int]) -> np.ndarray:
    """Integer matrix M with M^T M = |q|^4 Id from a Lipschitz quaternion."""
    a, b, c, d = q
    return np.array([
        [a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)],
        [2 * (b * c + a * d), a * a - b * b + c * c - d * d, 2 * (c * d - a * b)],
        [2 * (b * d - a * c), 2 * (c * d + a * b), a * a - b * b - c * c + d * d],
    ], dtype=np.int64)


def _signed_permutations():
    out = []
    for perm in itertools.permutations(range(3)):
        for signs in itertools.product((1, -1), repeat=3):
            M = np.zeros((3, 3), dtype=np.int64)
            for row, col in enumerate(perm):
                M[row, col] = signs[row]
            out.append(M)
    return out


def _candidate_transformations():
    """Deterministic stream of integer scaled-orthogonal matrices.

    Scaled signed permutations keep every image direction on one of the
    base primitive lines, so the 270 tubes share a small pool of closed
    lines and differ by cross-section offsets; that is what makes the
    disjoint-shift search geometrically easy.
    """
    perms = _signed_permutations()
    for scale in range(1, 40):
        for M in perms:
            yield scale * M


_Z33 = [(i, j, k) for i in range(3) for j in range(3) for k in range(3)]


class FamilyCatalog:
    """27 disjoint family pairs indexed by labels in Z_3^3."""

    def __init__(self, r_families, phi_families):
        self.r_families: dict = dict(r_families)
        self.phi_families: dict = dict(phi_families)
        self.validate()

    def validate(self):
        if set(self.r_families) != set(_Z33) or set(self.phi_families) != set(_Z33):
            raise ConstructionError("catalog must cover all 27 labels")
        allv = []
        for j in _Z33:
            allv.extend(self.r_families[j].vectors)
            allv.extend(self.phi_families[j].vectors)
        if len(set(allv)) != 270:
            raise ConstructionError("the 270 direction vectors must be distinct")

    def family(self, j, kind: str):
        j = tuple(int(x) % 3 for x in j)
        return self.r_families[j] if kind == "R" else self.phi_families[j]

    def all_directions(self):
        out = []
        for j in _Z33:
            out.extend(self.r_families[j].vectors)
            out.extend(self.phi_families[j].vectors)
        return out

    def to_json(self) -> str:
        doc = {"labels": [list(j) for j in _Z33],
               "R": {str(j): [list(v) for v in self.r_families[j].vectors]
                     for j in _Z33},
               "R_N0": {str(j): self.r_families[j].N0_R for j in _Z33},
               "R_C": {str(j): self.r_families[j].C for j in _Z33},
               "phi": {str(j): [list(v) for v in self.phi_families[j].vectors]
                       for j in _Z33}}
        return json.dumps(doc, indent=1, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "FamilyCatalog":
        doc = json.loads(text)
        r, phi = {}, {}
        for j in _Z33:
            key = str(j)
            r[j] = _make_r_family(j, doc["R"][key])
            phi[j] = DirectionFamilyPhi(j=j, vectors=tuple(
                tuple(int(x) for x in v) for v in doc["phi"][key]))
        return FamilyCatalog(r, phi)


_CATALOG = None


def family_catalog() -> FamilyCatalog:
    """Build (once) the 27 disjoint family pairs.

    The base pair is carried to the other 26 labels by the first integer
    scaled-orthogonal transformations, in a fixed enumeration order, that
    keep all accumulated vectors distinct.
    """
    global _CATALOG
    if _CATALOG is not None:
        return _CATALOG
    labels = list(_Z33)
    r_families = {labels[0]: _make_r_family(labels[0], BASE_R)}
    phi_families = {labels[0]: DirectionFamilyPhi(labels[0], BASE_PHI)}
    used = set(BASE_R) | set(BASE_PHI)
    li = 1
    base_r = np.array(BASE_R, dtype=np.int64).T
    base_phi = np.array(BASE_PHI, dtype=np.int64).T
    for M in _candidate_transformations():
        if li >= 27:
            break
        rv = [tuple(int(x) for x in (M @ base_r)[:, i]) for i in range(6)]
        pv = [tuple(int(x) for x in (M @ base_phi)[:, i]) for i in range(4)]
        fresh = set(rv) | set(pv)
        if len(fresh) != 10 or fresh & used:
            continue
        j = labels[li]
        r_families[j] = _make_r_family(j, rv)
        phi_families[j] = DirectionFamilyPhi(j, pv)
        used |= fresh
        li += 1
    if li < 27:
        raise ConstructionError(
            "transformation stream exhausted before 27 disjoint families")
    _CATALOG = FamilyCatalog(r_families, phi_families)
    return _CATALOG


def gamma_R_batch(family: DirectionFamilyR, S: np.ndarray) -> np.ndarray:
    """Squared-weight solve for a batch of symmetric matrices (..., 3, 3).

    Returns gammas of shape (..., 6). Raises DomainError (with the worst
    offending weight index) if any squared weight is nonpositive.
    """
    coeff = vec6(S) @ family.basis_inv.T
    worst = coeff.min(axis=-1) if coeff.ndim else coeff
    if np.min(worst) <= 0.0:
        flat = coeff.reshape(-1, 6)
        bad = int(np.argmin(flat.min(axis=1)))
        idx = int(np.argmin(flat[bad]))
        raise DomainError(
            f"matrix outside the admissible neighborhood of family "
            f"{family.j}: squared weight {idx} is {flat[bad, idx]:.3e}")
    return np.sqrt(coeff)


def gamma_R(family: DirectionFamilyR, S: np.ndarray) -> np.ndarray:
    """Six positive weights with S = sum_i gamma_i^2 f_i (x) f_i."""
    S = np.asarray(S, dtype=np.float64)
    if np.abs(S - S.T).max() > 0:
        raise DomainError("argument must be symmetric")
    if np.abs(np.eye(3) - S).max() > family.N0_R:
        raise DomainError(
            f"|Id - S|_inf = {np.abs(np.eye(3) - S).max():.3e} exceeds "
            f"N0 = {family.N0_R:.3e} of family {family.j}")
    return gamma_R_batch(family, S)


def phi_offset(family: DirectionFamilyPhi, N0: float) -> float:
    """Common affine offset making all four flux weights >= N0 on |m| <= N0."""
    norms = [math.sqrt(sum(x * x for x in f)) for f in family.vectors[:3]]
    return N0 * (1.0 + 1.0 / min(norms))


def gamma_phi_batch(family: DirectionFamilyPhi, m: np.ndarray,
                    N0: float) -> np.ndarray:
    """Affine flux weights for a batch of vectors (..., 3) -> (..., 4)."""
    m = np.asarray(m, dtype=np.float64)
    c = phi_offset(family, N0)
    out = np.empty(m.shape[:-1] + (4,))
    for k in range(3):
        f = np.asarray(family.vectors[k], dtype=np.float64)
        out[..., k] = (m @ f) / (f @ f) + c
    out[..., 3] = c
    return out


def gamma_phi(family: DirectionFamilyPhi, m: np.ndarray,
              N0: float) -> np.ndarray:
    """Four weights >= N0 with m = sum_k gamma_k f_k, affine in m."""
    if N0 <= 0:
        raise DomainError("N0 must be positive")
    m = np.asarray(m, dtype=np.float64)
    if math.sqrt(float(m @ m)) > N0:
        raise DomainError(f"|m| = {math.sqrt(float(m @ m)):.3e} exceeds N0 = {N0}")
    return gamma_phi_batch(family, m, N0)


def reconstruct_R(family: DirectionFamilyR, gammas: np.ndarray) -> np.ndarray:
    F = np.array(family.vectors, dtype=np.float64)
    return np.einsum("...i,ij,ik->...jk", np.asarray(gammas) ** 2, F, F)


def reconstruct_phi(family: DirectionFamilyPhi, gammas: np.ndarray) -> np.ndarray:
    F = np.array(family.vectors, dtype=np.float64)
    return np.asarray(gammas) @ F
