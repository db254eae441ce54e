import numpy as np
import pytest

from ceiw import flows as fl
from ceiw import spectral as sp
from ceiw.errors import WindowError
from ceiw.fields import Grid3, TimeSampledField, VectorField
from ceiw.schedule import Constants, build_schedule

# constants chosen so tau is order 0.2: flow windows produce visible
# deformation while staying inside the Jacobian-gap regime
SLOW = Constants(M_big=1.01, C_rho_dot=0.02, eta=0.9)


@pytest.fixture(scope="module")
def g():
    return Grid3(32)


@pytest.fixture(scope="module")
def smooth_drift(g):
    X, Y, Z = g.meshes()
    v = 0.22 * np.stack([np.sin(Y), np.cos(Z), np.sin(X + Y)])
    return TimeSampledField.stationary_from(g, -1.0, 1.0, 9, v, 1)


@pytest.fixture(scope="module")
def slow_schedule():
    return build_schedule(2, 1.5, 1 / 14, 0, constants=SLOW)


class TestForward:
    def test_zero_drift_identity(self, g):
        zero = TimeSampledField.stationary_from(
            g, 0.0, 1.0, 5, np.zeros((3, g.n, g.n, g.n)), 1)
        x0 = np.array([[0.1, -0.5, 2.0]])
        X, J = fl.integrate_forward(zero, 0.0, x0, 0.7, 0.05)
        assert np.abs(X - x0).max() < 1e-15
        assert np.abs(J - np.eye(3)).max() == 0.0

    def test_constant_drift_translation(self, g):
        c = np.array([0.3, -0.2, 0.45])
        vals = np.broadcast_to(c[:, None, None, None],
                               (3, g.n, g.n, g.n)).copy()
        drift = TimeSampledField.stationary_from(g, -1.0, 1.0, 9, vals, 1)
        x0 = np.array([[0.0, 0.0, 0.0], [1.0, 2.0, -2.0]])
        X, J = fl.integrate_forward(drift, 0.1, x0, 0.6, 0.01)
        expect = np.mod(x0 + 0.5 * c + np.pi, 2 * np.pi) - np.pi
        assert np.abs(X - expect).max() < 1e-13
        assert np.abs(J - np.eye(3)).max() < 1e-14

    def test_window_guard(self, g, smooth_drift):
        with pytest.raises(WindowError):
            fl.integrate_forward(smooth_drift, 0.0, np.zeros((1, 3)),
                                 2.0, 0.01)

    def test_step_halving_slope(self, g, smooth_drift):
        # 4th-order convergence against a step-halved reference
        x0 = np.array([[0.2, 0.4, -0.7], [1.5, -1.0, 0.3]])
        T = 0.4
        ref, jref = fl.integrate_forward(smooth_drift, 0.0, x0, T, T / 256)
        errs = []
        for h in (T / 8, T / 16, T / 32):
            X, J = fl.integrate_forward(smooth_drift, 0.0, x0, T, h)
            errs.append(np.abs(X - ref).max() + np.abs(J - jref).max())
        slopes = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
        assert slopes.min() >= 3.7

    def test_jacobian_vs_finite_difference(self, g, smooth_drift):
        x0 = np.array([[0.3, -0.2, 0.9]])
        T = 0.3
        eps = 1e-5
        _, J = fl.integrate_forward(smooth_drift, 0.0, x0, T, T / 64)
        fd = np.empty((3, 3))
        for d in range(3):
            dx = np.zeros(3)
            dx[d] = eps
            Xp, _ = fl.integrate_forward(smooth_drift, 0.0, x0 + dx, T,
                                         T / 64, with_jacobian=False)
            Xm, _ = fl.integrate_forward(smooth_drift, 0.0, x0 - dx, T,
                                         T / 64, with_jacobian=False)
            diff = Xp[0] - Xm[0]
            diff = np.mod(diff + np.pi, 2 * np.pi) - np.pi
            fd[:, d] = diff / (2 * eps)
        assert np.abs(J[0] - fd).max() < 1e-8


class TestBackward:
    def test_zero_drift_identity_chart(self, g, slow_schedule):
        zero = TimeSampledField.stationary_from(
            g, -1.0, 1.0, 9, np.zeros((3, g.n, g.n, g.n)), 1)
        ch = fl.solve_backward(zero, 0, slow_schedule)
        assert np.abs(ch.omega).max() == 0.0
        assert np.abs(ch.grad_xi - np.eye(3)).max() == 0.0
        assert np.abs(ch.det_grad_xi - 1).max() == 0.0

    def test_anchor_is_identity(self, g, smooth_drift, slow_schedule):
        # t_u = 0 is a stored node of this axis
        ch = fl.solve_backward(smooth_drift, 0, slow_schedule)
        j = int(np.argmin(np.abs(ch.times)))
        if abs(ch.times[j]) < 1e-14:
            assert np.abs(ch.omega[j]).max() == 0.0

    def test_roundtrip_composition(self, g, smooth_drift, slow_schedule):
        ch = fl.solve_backward(smooth_drift, 0, slow_schedule,
                               h=slow_schedule.tau_q / 16)
        rng = np.random.default_rng(3)
        pts = rng.uniform(-np.pi, np.pi, (40, 3))
        j = int(np.argmax(np.abs(ch.times)))  # farthest stored node
        t = float(ch.times[j])
        fwd, _ = ch.forward(t, pts)
        xi_interp = sp.evaluate_offgrid(VectorField(g, ch.omega[j]), fwd) + fwd
        err = np.abs(xi_interp - pts)
        err = np.minimum(err, 2 * np.pi - err)
        assert err.max() < 1e-8

    def test_jacobian_identity_inverse(self, g, smooth_drift, slow_schedule):
        ch = fl.solve_backward(smooth_drift, 0, slow_schedule)
        prod = np.einsum("txyzij,txyzjk->txyzik", ch.grad_xi, ch.grad_xi_inv)
        assert np.abs(prod - np.eye(3)).max() < 1e-10

    def test_jacobian_gap_and_det_window(self, g, smooth_drift, slow_schedule):
        ch = fl.solve_backward(smooth_drift, 0, slow_schedule)
        assert ch.max_jacobian_gap() <= 0.2 + 1e-12
        assert ch.det_grad_xi.min() > 0.5 and ch.det_grad_xi.max() < 1.5

    def test_backward_inverse_jacobian_is_forward_jacobian(
            self, g, smooth_drift, slow_schedule):
        # grad_xi_inv at (t, x) equals the forward-flow Jacobian evaluated
        # at the backward image of x
        ch = fl.solve_backward(smooth_drift, 0, slow_schedule,
                               h=slow_schedule.tau_q / 16)
        j = int(np.argmax(ch.times))
        t = float(ch.times[j])
        idx = (5, 9, 17)
        x = np.array([[ch.grid.axis[idx[0]], ch.grid.axis[idx[1]],
                       ch.grid.axis[idx[2]]]])
        y = ch.xi(j)[:, idx[0], idx[1], idx[2]][None, :]
        _, Jf = ch.forward(t, y)
        Ji = ch.grad_xi_inv[j, idx[0], idx[1], idx[2]]
        assert np.abs(Jf[0] - Ji).max() < 1e-6


class TestAdvective:
    def test_transported_chart_has_zero_material_derivative(
            self, g, smooth_drift, slow_schedule):
        # a fine axis so the slab window holds enough nodes for the stencil
        fine = TimeSampledField.stationary_from(
            g, -1.0, 1.0, 65, smooth_drift.slices[0], 1)
        ch = fl.solve_backward(fine, 0, slow_schedule,
                               h=slow_schedule.tau_q / 16)
        assert len(ch.times) >= 5
        # D_t xi = D_t omega + v must vanish for the transported chart
        F = TimeSampledField(g, float(ch.times[0]), float(ch.times[-1]),
                             len(ch.times), ch.omega, 1)
        sub = TimeSampledField.stationary_from(
            g, F.t0, F.t1, F.nt, smooth_drift.slices[0], 1)
        dF = fl.advective_derivative(F, sub)
        resid = dF.materialized() + smooth_drift.slices[0][None]
        scale = max(np.abs(smooth_drift.slices).max(), 1.0)
        assert np.abs(resid).max() < 1e-5 * scale

    def test_zero_drift_reduces_to_time_derivative(self, g):
        rng = np.random.default_rng(0)
        shape = sp.random_band_limited(g, 0, 3, rng).values
        nt = 7
        t = np.linspace(0.0, 0.3, nt)
        vals = np.sin(t)[:, None, None, None] * shape
        F = TimeSampledField(g, 0.0, 0.3, nt, vals, 0)
        zero = TimeSampledField.stationary_from(
            g, 0.0, 0.3, nt, np.zeros((3, g.n, g.n, g.n)), 1)
        dF = fl.advective_derivative(F, zero)
        ref = sp.time_derivative_series(F)
        assert np.abs(dF.materialized() - ref.materialized()).max() < 1e-15

    def test_constant_drift_static_field(self, g):
        rng = np.random.default_rng(1)
        shape = sp.random_band_limited(g, 0, 4, rng).values
        c = np.array([0.5, -0.25, 0.8])
        vals = np.broadcast_to(c[:, None, None, None],
                               (3, g.n, g.n, g.n)).copy()
        nt = 5
        drift = TimeSampledField.stationary_from(g, 0.0, 1.0, nt, vals, 1)
        F = TimeSampledField.stationary_from(g, 0.0, 1.0, nt, shape, 0)
        dF = fl.advective_derivative(F, drift)
        grad = sp.gradient_values(g, shape)
        expect = c[0] * grad[0] + c[1] * grad[1] + c[2] * grad[2]
        err = np.abs(dF.slice(2) - expect).max()
        assert err < 1e-11 * max(np.abs(expect).max(), 1.0)
