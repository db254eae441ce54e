import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ceiw import geometry as geo
from ceiw.errors import ConstructionError, DomainError


@pytest.fixture(scope="module")
def cat():
    return geo.family_catalog()


class TestCatalog:
    def test_base_families_as_printed(self, cat):
        r = cat.family((0, 0, 0), "R")
        assert set(r.vectors) == {(1, 1, 0), (1, -1, 0), (1, 0, 1),
                                  (1, 0, -1), (0, 1, 1), (0, 1, -1)}
        p = cat.family((0, 0, 0), "phi")
        assert p.vectors == ((1, 2, 0), (-2, 1, 0), (0, 0, 1), (1, -3, -1))

    def test_base_sum_is_4_id(self, cat):
        r = cat.family((0, 0, 0), "R")
        total = sum(np.outer(f, f) for f in np.array(r.vectors))
        assert np.array_equal(total, 4 * np.eye(3, dtype=np.int64))
        assert r.C == 4.0

    def test_270_distinct_vectors(self, cat):
        allv = cat.all_directions()
        assert len(allv) == 270
        assert len(set(allv)) == 270

    def test_all_families_satisfy_invariants(self, cat):
        for j in itertools.product(range(3), repeat=3):
            r = cat.family(j, "R")
            total = sum(np.outer(f, f) for f in np.array(r.vectors, dtype=np.int64))
            assert np.array_equal(total, total[0, 0] * np.eye(3, dtype=np.int64))
            A = np.stack([geo.vec6(np.outer(f, f)) for f in
                          np.array(r.vectors, float)], axis=-1)
            assert np.linalg.matrix_rank(A) == 6
            p = cat.family(j, "phi")   # validity enforced in the constructor
            f = [np.array(v) for v in p.vectors]
            assert f[0] @ f[1] == 0 and f[0] @ f[2] == 0 and f[1] @ f[2] == 0
            assert np.array_equal(f[3], -(f[0] + f[1] + f[2]))

    def test_json_roundtrip(self, cat, tmp_path):
        text = cat.to_json()
        back = geo.FamilyCatalog.from_json(text)
        for j in itertools.product(range(3), repeat=3):
            assert back.family(j, "R").vectors == cat.family(j, "R").vectors
            assert back.family(j, "phi").vectors == cat.family(j, "phi").vectors

    def test_bad_rotation_rejected(self):
        with pytest.raises(ConstructionError):
            geo._make_r_family((0, 0, 0), [(1, 0, 0)] * 6)


class TestGammaR:
    def test_identity_gives_half(self, cat):
        r = cat.family((0, 0, 0), "R")
        g = geo.gamma_R(r, np.eye(3))
        assert np.abs(g - 0.5).max() < 1e-15

    def test_domain_violation_raises(self, cat):
        r = cat.family((0, 0, 0), "R")
        K = np.eye(3) * (1.5 * r.N0_R)
        with pytest.raises(DomainError):
            geo.gamma_R(r, np.eye(3) - K)

    def test_reconstruction_residual(self, cat):
        rng = np.random.default_rng(42)
        r = cat.family((0, 0, 0), "R")
        for _ in range(100):
            K = rng.uniform(-1, 1, (3, 3))
            K = 0.5 * (K + K.T)
            K *= (r.N0_R / 2) / np.abs(K).max()
            S = np.eye(3) - K
            g = geo.gamma_R(r, S)
            assert (g > 0).all()
            err = np.abs(geo.reconstruct_R(r, g) - S).max()
            assert err <= 1e-12 * np.abs(S).max()

    def test_batch_matches_single(self, cat):
        rng = np.random.default_rng(1)
        r = cat.family((1, 2, 0), "R")
        Ks = rng.uniform(-1, 1, (10, 3, 3))
        Ks = 0.5 * (Ks + np.swapaxes(Ks, -1, -2))
        Ks *= (r.N0_R / 3) / np.abs(Ks).max()
        S = np.eye(3) - Ks
        batch = geo.gamma_R_batch(r, S)
        for i in range(10):
            assert np.allclose(batch[i], geo.gamma_R(r, S[i]), rtol=1e-14)

    def test_n0_radius_stress(self, cat):
        # weights must solve positively everywhere inside the stored radius
        rng = np.random.default_rng(3)
        for j in [(0, 0, 0), (2, 1, 1)]:
            r = cat.family(j, "R")
            K = rng.uniform(-1, 1, (10_000, 3, 3))
            K = 0.5 * (K + np.swapaxes(K, -1, -2))
            scale = np.abs(K).max(axis=(1, 2), keepdims=True)
            K = K / scale * r.N0_R * rng.uniform(0, 1, (10_000, 1, 1))
            g = geo.gamma_R_batch(r, np.eye(3) - K)
            assert (g > 0).all()


class TestGammaPhi:
    def test_zero_vector_offsets(self, cat):
        p = cat.family((0, 0, 0), "phi")
        N0 = 2.0
        g = geo.gamma_phi(p, np.zeros(3), N0)
        assert (g >= N0).all()
        # frame sums to zero so pure offsets reconstruct zero
        assert np.abs(geo.reconstruct_phi(p, g)).max() < 1e-13

    def test_direction_vector_reconstruction(self, cat):
        p = cat.family((0, 0, 0), "phi")
        f1 = np.array(p.vectors[2], dtype=float)  # (0,0,1), |f|=1
        N0 = 2.0
        g = geo.gamma_phi(p, f1, N0)
        assert np.abs(geo.reconstruct_phi(p, g) - f1).max() < 1e-13

    def test_outside_ball_raises(self, cat):
        p = cat.family((0, 0, 0), "phi")
        with pytest.raises(DomainError):
            geo.gamma_phi(p, np.array([1.01, 0, 0]), 1.0)

    def test_reconstruction_random(self, cat):
        rng = np.random.default_rng(7)
        p = cat.family((1, 0, 2), "phi")
        N0 = 3.0
        for _ in range(1000):
            m = rng.normal(size=3)
            m *= rng.uniform(0, N0) / np.linalg.norm(m)
            g = geo.gamma_phi(p, m, N0)
            assert (g >= N0 - 1e-12).all()
            assert np.abs(geo.reconstruct_phi(p, g) - m).max() \
                <= 1e-13 * (1 + np.linalg.norm(m))

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.floats(-1, 1), min_size=6, max_size=6),
           st.floats(0.1, 0.9))
    def test_affinity_property(self, coords, lam):
        p = geo.family_catalog().family((0, 0, 0), "phi")
        N0 = 4.0
        m1 = np.array(coords[:3])
        m2 = np.array(coords[3:])
        g1 = geo.gamma_phi(p, m1, N0)
        g2 = geo.gamma_phi(p, m2, N0)
        gm = geo.gamma_phi(p, lam * m1 + (1 - lam) * m2, N0)
        assert np.abs(gm - (lam * g1 + (1 - lam) * g2)).max() < 1e-13
