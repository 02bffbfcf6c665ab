"""Polynomial extrapolation exactness and state-MLP mechanics."""

import numpy as np
import pytest

from bowlroll import baselines as bl
from bowlroll.autodiff import finite_difference_check


def track(fn, n=10):
    t = np.arange(n, dtype=float)
    return np.stack([fn(t), fn(t)], axis=1)


class TestPolyfit:
    def test_exact_line(self):
        pred = bl.polyfit_extrapolate(track(lambda t: 2.0 * t), 1, 4)
        assert abs(pred[3, 0] - 6.0) <= 1e-12

    def test_exact_quadratic(self):
        pred = bl.polyfit_extrapolate(track(lambda t: t ** 2), 2, 6)
        assert abs(pred[5, 0] - 25.0) <= 1e-9

    def test_line_fit_of_parabola_hand_values(self):
        # normal equations over t = 0..9: slope = cov/var = 9, intercept = -12
        fit = bl.fit_polynomial(track(lambda t: t ** 2), 1)
        assert abs(fit.coeffs[1, 0] - 9.0) <= 1e-9
        assert abs(fit.coeffs[0, 0] + 12.0) <= 1e-9
        pred = bl.polyfit_extrapolate(track(lambda t: t ** 2), 1, 11)
        assert abs(pred[10, 0] - 78.0) <= 1e-9

    def test_reproduces_low_degree_polynomials(self):
        rng = np.random.default_rng(0)
        t = np.arange(10, dtype=float)
        for degree in (1, 2):
            for _ in range(25):
                coeffs = rng.normal(size=(degree + 1, 2)) * 3
                obs = np.stack([t ** k for k in range(degree + 1)], axis=-1) @ coeffs
                pred = bl.polyfit_extrapolate(obs, degree, 41)
                t_all = np.arange(41, dtype=float)
                exact = np.stack([t_all ** k for k in range(degree + 1)], axis=-1) @ coeffs
                assert np.max(np.abs(pred - exact)) <= 1e-9

    def test_normal_equation_optimality(self):
        rng = np.random.default_rng(1)
        obs = rng.normal(size=(10, 2))
        for degree in (1, 2):
            fit = bl.fit_polynomial(obs, degree)
            t = np.arange(10.0)
            vand = np.stack([t ** k for k in range(degree + 1)], axis=-1)
            residual = vand.T @ (vand @ fit.coeffs - obs)
            assert np.max(np.abs(residual)) <= 1e-9

    def test_affine_in_observations(self):
        rng = np.random.default_rng(2)
        y1, y2 = rng.normal(size=(10, 2)), rng.normal(size=(10, 2))
        a, b = 0.7, -1.3
        lhs = bl.polyfit_extrapolate(a * y1 + b * y2, 2, 20)
        rhs = a * bl.polyfit_extrapolate(y1, 2, 20) + b * bl.polyfit_extrapolate(y2, 2, 20)
        assert np.max(np.abs(lhs - rhs)) <= 1e-8

    def test_too_few_points_rejected(self):
        with pytest.raises(ValueError):
            bl.fit_polynomial(np.zeros((2, 2)), 2)

    def test_window_enforced(self):
        with pytest.raises(ValueError):
            bl.polyfit_extrapolate(np.zeros((8, 2)), 1, 20)


def make_context(velocity=(0.0, 0.0, 0.0), px=(24.0, 24.0), with_angular=False):
    states = []
    for _ in range(4):
        states.append(bl.StateVector(
            screen_px=np.array(px, dtype=float),
            velocity=np.array(velocity, dtype=float),
            bowl_a=0.8, bowl_gamma=0.2,
            omega=np.zeros(3) if with_angular else None,
            euler=np.zeros(3) if with_angular else None))
    return states


def zeroed_params(with_angular=False):
    params = bl.init_state_mlp(np.random.default_rng(0), with_angular)
    for _, p in params.items():
        p.data[:] = 0.0
    return params


class TestStateMLP:
    def test_zeroed_output_layer_persists_velocity(self):
        params = bl.init_state_mlp(np.random.default_rng(3), False)
        params["mlp.l2.w"].data[:] = 0.0
        params["mlp.l2.b"].data[:] = 0.0
        context = make_context(velocity=(1.0, 2.0, 3.0))
        v_next, om = bl.state_mlp_step(context, params, False)
        assert np.array_equal(v_next, [1.0, 2.0, 3.0])
        assert om is None

    def test_output_layout(self):
        assert bl.state_output_dim(False) == 3
        assert bl.state_output_dim(True) == 6
        params = bl.init_state_mlp(np.random.default_rng(4), True)
        v_next, om = bl.state_mlp_step(make_context(with_angular=True), params, True)
        assert v_next.shape == (3,) and om.shape == (3,)

    def test_context_length_enforced(self):
        params = zeroed_params()
        with pytest.raises(ValueError):
            bl.state_mlp_step(make_context()[:3], params, False)

    def test_zeroed_network_zero_velocity_is_static(self):
        pos, _ = bl.state_mlp_rollout(make_context(), zeroed_params(), 12, 48, 1.1)
        assert np.max(np.abs(pos - pos[0])) <= 1e-12

    def test_ballistic_straight_line(self):
        # v = (40, 0, 0) world/s advances 1.0 world per 1/40 s frame,
        # i.e. W / (2E) pixels per frame
        params = zeroed_params()
        context = make_context(velocity=(40.0, 0.0, 0.0), px=(0.0, 24.0))
        pos, _ = bl.state_mlp_rollout(context, params, 10, 48, 1.1)
        px_per_world = 48 / 2.2
        for t in range(4, 10):
            expected = (t - 3) * px_per_world
            assert abs(pos[t, 0] - expected) <= 1e-9
            assert abs(pos[t, 1] - 24.0) <= 1e-9

    def test_first_four_outputs_echo_context(self):
        rng = np.random.default_rng(5)
        params = bl.init_state_mlp(rng, False)
        context = make_context(velocity=(3.0, -1.0, 0.5), px=(10.0, 30.0))
        for k, st in enumerate(context):
            st.screen_px = st.screen_px + k
        pos, _ = bl.state_mlp_rollout(context, params, 9, 48, 1.1)
        for k in range(4):
            assert np.array_equal(pos[k], context[k].screen_px)

    def test_one_step_training_loss_gradients(self):
        rng = np.random.default_rng(6)
        params = bl.init_state_mlp(rng, False, init_std=0.1)
        feats = rng.normal(size=(3, 28))
        target = rng.normal(size=(3, 3))

        def loss():
            d = bl.state_mlp_forward(feats, params) - target
            return (d * d).sum(axis=1).mean()

        assert finite_difference_check(loss, params, h=1e-5) <= 1e-4

    def test_feature_layout(self):
        sv = bl.StateVector(screen_px=np.array([1.0, 2.0]),
                            velocity=np.array([3.0, 4.0, 5.0]),
                            bowl_a=0.7, bowl_gamma=-0.1,
                            omega=np.array([6.0, 7.0, 8.0]),
                            euler=np.array([9.0, 10.0, 11.0]))
        assert np.array_equal(sv.features(False), [1, 2, 3, 4, 5, 0.7, -0.1])
        assert np.array_equal(sv.features(True),
                              [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 0.7, -0.1])
