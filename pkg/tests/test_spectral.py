import numpy as np
import pytest

from ceiw import spectral as sp
from ceiw.errors import DomainError, ShapeError
from ceiw.fields import Grid3, ScalarField, SymTensorField, TimeSampledField, VectorField


@pytest.fixture(scope="module")
def g32():
    return Grid3(32)


def zeros_vec(g):
    return np.zeros((3, g.n, g.n, g.n))


class TestGrid:
    def test_grid_validation(self):
        with pytest.raises(DomainError):
            Grid3(24)
        with pytest.raises(DomainError):
            Grid3(4)

    def test_nodes(self, g32):
        assert g32.axis[0] == -np.pi
        assert g32.axis[1] - g32.axis[0] == pytest.approx(2 * np.pi / 32)

    def test_shape_guard(self, g32):
        with pytest.raises(ShapeError):
            ScalarField(g32, np.zeros((3, 32, 32, 32)))


class TestLowpass:
    def test_constant_unchanged(self, g32):
        f = ScalarField(g32, np.full((32, 32, 32), 3.25))
        out = sp.lowpass(f, 5.0)
        assert np.abs(out.values - 3.25).max() < 1e-14

    def test_shoulder_value_exact_half(self, g32):
        # cos(3 x1) against dyadic scale 2: bump(3/2) = 1/2 by symmetry of
        # the exp blend.
        X, _, _ = g32.meshes()
        f = ScalarField(g32, np.cos(3 * X))
        out = sp.lowpass(f, 2.0)
        assert np.abs(out.values - 0.5 * f.values).max() < 1e-13

    def test_low_mode_unchanged(self, g32):
        X, _, _ = g32.meshes()
        f = ScalarField(g32, np.cos(X))
        out = sp.lowpass(f, 8.0)
        assert np.abs(out.values - f.values).max() < 1e-13

    def test_projection_on_core_supported_fields(self, g32):
        rng = np.random.default_rng(7)
        # |k|_inf <= 2 keeps the radial norm below 2^J = 4, off the shoulder
        f = sp.random_band_limited(g32, 0, 2, rng)
        once = sp.lowpass(f, 4.0)
        twice = sp.lowpass(once, 4.0)
        assert np.abs(once.values - f.values).max() < 1e-13
        assert np.abs(twice.values - once.values).max() < 1e-13


class TestInverseDivergence:
    def test_constant_maps_to_zero(self, g32):
        v = VectorField(g32, np.ones((3, 32, 32, 32)))
        T = sp.inverse_divergence_tensor(v)
        assert np.abs(T.values).max() < 1e-14

    def test_single_mode_closed_form(self, g32):
        # f = (sin x3, 0, 0): with F = fhat at k=(0,0,1), the symbol gives
        # T = -i [ (k_i F_j + k_j F_i)/1 ] for i,j != diag-corrections; the
        # only surviving components are T_13 = T_31. Hand evaluation:
        # k=(0,0,1), F=(1/(2i),0,0) for e^{i x3} plus conjugate
        # => T_13 = -i * F_1 * k_3 = -i/(2i) = -1/2 coefficient of e^{i x3},
        # total T_13 = -cos(x3). All other components vanish.
        X, Y, Z = g32.meshes()
        v = VectorField(g32, np.stack([np.sin(Z), np.zeros_like(Z),
                                       np.zeros_like(Z)]))
        T = sp.inverse_divergence_tensor(v)
        expect_13 = -np.cos(Z)
        assert np.abs(T.values[4] - expect_13).max() < 1e-13  # comp (0,2)
        for comp in (0, 1, 2, 3, 5):
            assert np.abs(T.values[comp]).max() < 1e-13

    def test_divergence_recovered_and_tracefree(self, g32):
        rng = np.random.default_rng(5)
        f = sp.random_band_limited(g32, 1, 6, rng)
        T = sp.inverse_divergence_tensor(f)
        mean = f.values.mean(axis=(1, 2, 3))
        resid = sp.div_sym_tensor(T).values - (f.values - mean[:, None, None, None])
        assert np.abs(resid).max() < 1e-11 * np.abs(f.values).max()
        tr = T.values[0] + T.values[1] + T.values[2]
        assert np.abs(tr).max() <= 1e-13 * max(np.abs(T.values).max(), 1e-300)

    def test_scalar_inverse_divergence(self, g32):
        X, Y, Z = g32.meshes()
        gfield = ScalarField(g32, np.full((32, 32, 32), 5.0))
        out = sp.inverse_divergence_vector(gfield)
        assert np.abs(out.values).max() < 1e-14
        # g = sin x2: V = (0, -cos x2, 0) from the -i k /|k|^2 symbol
        gf = ScalarField(g32, np.sin(Y))
        V = sp.inverse_divergence_vector(gf)
        assert np.abs(V.values[1] + np.cos(Y)).max() < 1e-13
        assert np.abs(V.values[0]).max() < 1e-14
        assert np.abs(V.values[2]).max() < 1e-14

    def test_scalar_residual_random(self, g32):
        rng = np.random.default_rng(11)
        gf = sp.random_band_limited(g32, 0, 6, rng)
        V = sp.inverse_divergence_vector(gf)
        resid = sp.divergence(V).values - (gf.values - gf.values.mean())
        assert np.abs(resid).max() < 1e-11 * np.abs(gf.values).max()


class TestOffgrid:
    def test_node_reproduction(self, g32):
        rng = np.random.default_rng(3)
        f = sp.random_band_limited(g32, 0, 5, rng)
        pts = np.array([[g32.axis[i], g32.axis[j], g32.axis[k]]
                        for i, j, k in [(0, 0, 0), (5, 7, 9), (31, 1, 16)]])
        vals = sp.evaluate_offgrid(f, pts)
        stored = np.array([f.values[0, 0, 0], f.values[5, 7, 9],
                           f.values[31, 1, 16]])
        assert np.abs(vals - stored).max() < 1e-13

    def test_closed_form_point(self, g32):
        X, Y, _ = g32.meshes()
        f = ScalarField(g32, np.cos(2 * X + Y))
        val = sp.evaluate_offgrid(f, [[0.3, -1.1, 2.0]])[0]
        assert val == pytest.approx(np.cos(2 * 0.3 - 1.1), abs=1e-14)

    def test_quarter_period_zero(self, g32):
        X, _, _ = g32.meshes()
        f = ScalarField(g32, np.cos(X))
        val = sp.evaluate_offgrid(f, [[np.pi / 2, 0.0, 0.0]])[0]
        assert abs(val) < 1e-14

    def test_wrapping_is_automatic(self, g32):
        rng = np.random.default_rng(8)
        f = sp.random_band_limited(g32, 0, 4, rng)
        p = np.array([[0.4, -2.0, 1.0]])
        v1 = sp.evaluate_offgrid(f, p)
        v2 = sp.evaluate_offgrid(f, p + 2 * np.pi)
        assert abs(v1[0] - v2[0]) < 1e-12


class TestTimeDerivative:
    def test_constant_in_time(self, g32):
        vals = np.ones((7, g32.n, g32.n, g32.n))
        F = TimeSampledField(g32, 0.0, 1.0, 7, vals, 0)
        for node in range(7):
            d = sp.time_derivative(F, node)
            assert np.abs(d.values).max() < 1e-13

    def test_sine_in_time(self, g32):
        rng = np.random.default_rng(1)
        gshape = sp.random_band_limited(g32, 0, 3, rng).values
        dt = 0.01
        nt = 9
        t = dt * np.arange(nt) - 0.04  # node 4 sits at t=0
        vals = np.sin(t)[:, None, None, None] * gshape
        F = TimeSampledField(g32, t[0], t[-1], nt, vals, 0)
        d = sp.time_derivative(F, 4)
        # derivative at t=0 is exactly gshape; stencil error O(dt^4)
        err = np.abs(d.values - gshape).max() / np.abs(gshape).max()
        assert err < 1e-8

    def test_exact_on_quartics(self, g32):
        rng = np.random.default_rng(2)
        gshape = sp.random_band_limited(g32, 0, 3, rng).values
        nt, dt = 9, 0.173
        t = dt * np.arange(nt)
        vals = (t ** 4)[:, None, None, None] * gshape
        F = TimeSampledField(g32, t[0], t[-1], nt, vals, 0)
        for node in [0, 1, 4, 7, 8]:
            d = sp.time_derivative(F, node)
            expect = 4 * t[node] ** 3 * gshape
            scale = max(np.abs(expect).max(), 1.0)
            assert np.abs(d.values - expect).max() < 1e-10 * scale

    def test_nt_guard(self, g32):
        with pytest.raises(DomainError):
            TimeSampledField(g32, 0.0, 1.0, 4,
                             np.zeros((4, g32.n, g32.n, g32.n)), 0)


class TestInvariants:
    def test_parseval(self, g32):
        rng = np.random.default_rng(4)
        for rank in (0, 1):
            f = sp.random_band_limited(g32, rank, 9, rng)
            assert sp.parseval_gap(f) < 1e-12

    def test_symmetric_storage_is_exact(self, g32):
        rng = np.random.default_rng(6)
        S = sp.random_band_limited(g32, 2, 4, rng)
        full = S.full()
        assert np.array_equal(full[0, 1], full[1, 0])
        assert np.array_equal(full[0, 2], full[2, 0])
        assert np.array_equal(full[1, 2], full[2, 1])
        back = SymTensorField.from_full(g32, full)
        assert np.array_equal(back.values, S.values)

    def test_roundtrip_fft(self, g32):
        rng = np.random.default_rng(9)
        f = sp.random_band_limited(g32, 0, 10, rng)
        back = g32.ifftn_real(f.hat)
        assert np.abs(back - f.values).max() < 1e-12 * np.abs(f.values).max()


class TestStationaryOptimization:
    def test_stationary_slices_share_storage(self, g32):
        vals = np.zeros((g32.n,) * 3)
        F = TimeSampledField.stationary_from(g32, 0.0, 1.0, 9, vals, 0)
        assert np.shares_memory(F.slice(0), F.slice(8))
        assert sp.time_derivative_series(F).slices.shape[0] == 1

    def test_values_at_interpolates(self, g32):
        nt = 5
        vals = np.arange(nt, dtype=float)[:, None, None, None] \
            * np.ones((nt, g32.n, g32.n, g32.n))
        F = TimeSampledField(g32, 0.0, 1.0, nt, vals, 0)
        mid = F.values_at(0.375)
        assert np.abs(mid - 1.5).max() < 1e-13
