"""Predictor family: layouts, covariance head, rollout semantics, and
end-to-end gradients through every variant's loss."""

import numpy as np
import pytest

from bowlroll import models
from bowlroll.autodiff import finite_difference_check
from bowlroll.losses import RolloutTargets, sequence_loss

TINY = dict(resolution=8, encoder_channels=(4,), state_channels=2,
            transition_hidden=4)


def tiny_cfg(variant):
    return models.VariantConfig(variant=variant, **TINY)


def random_frames(rng, cfg, n=2):
    k = cfg.t0 + (1 if cfg.variant == "anchored" else 0)
    return rng.uniform(0.0, 0.7, size=(n, k, cfg.resolution, cfg.resolution, 3))


class TestEncoder:
    def test_four_stage_downsampling_shape(self):
        cfg = models.VariantConfig(variant="position", resolution=64,
                                   encoder_channels=(8, 8, 8), state_channels=4,
                                   transition_hidden=4)
        params = models.init_params(cfg, np.random.default_rng(0))
        frames = np.zeros((1, 4, 64, 64, 3))
        h = models.encode_frames(frames, params, cfg)
        assert h.s.data.shape == (1, 4, 4, 4)

    def test_p0_lengths_per_variant(self):
        rng = np.random.default_rng(1)
        for variant, dim in [("position", 2), ("position_av", 5),
                             ("gaussian", 5), ("gaussian_av", 8), ("anchored", 2)]:
            cfg = tiny_cfg(variant)
            params = models.init_params(cfg, np.random.default_rng(1))
            h = models.encode_frames(random_frames(rng, cfg), params, cfg)
            assert h.p.data.shape == (2, dim)

    def test_anchored_input_channel_count(self):
        cfg = tiny_cfg("anchored")
        assert cfg.input_channels == 15   # 3 * (4 + 1)

    def test_wrong_channel_count_rejected(self):
        cfg = tiny_cfg("position")
        params = models.init_params(cfg, np.random.default_rng(2))
        bad = np.zeros((1, 5, 8, 8, 3))
        with pytest.raises(ValueError, match="channels"):
            models.encode_frames(bad, params, cfg)

    def test_same_seed_bit_identical_init(self):
        cfg = tiny_cfg("gaussian")
        p1 = models.init_params(cfg, np.random.default_rng(9))
        p2 = models.init_params(cfg, np.random.default_rng(9))
        assert p1.names() == p2.names()
        for name in p1.names():
            assert np.array_equal(p1[name].data, p2[name].data)


class TestTransition:
    def test_zeroed_p_head_keeps_p_constant(self):
        cfg = tiny_cfg("position")
        params = models.init_params(cfg, np.random.default_rng(3))
        params["trans.p.w"].data[:] = 0.0
        params["trans.p.b"].data[:] = 0.0
        h = models.encode_frames(random_frames(np.random.default_rng(4), cfg),
                                 params, cfg)
        p0 = h.p.data.copy()
        for _ in range(5):
            h = models.transition_step(h, params, cfg)
            assert np.array_equal(h.p.data, p0)

    def test_state_shape_preserved(self):
        for channels in (2, 3):
            cfg = models.VariantConfig(variant="position", resolution=8,
                                       encoder_channels=(4,), state_channels=channels,
                                       transition_hidden=4)
            params = models.init_params(cfg, np.random.default_rng(5))
            h = models.encode_frames(
                np.zeros((2, 4, 8, 8, 3)), params, cfg)
            h2 = models.transition_step(h, params, cfg)
            assert h2.s.data.shape == h.s.data.shape

    def test_zeroed_second_conv_fills_state_with_bias(self):
        cfg = tiny_cfg("position")
        params = models.init_params(cfg, np.random.default_rng(6))
        params["trans.conv2.w"].data[:] = 0.0
        bias = np.array([0.37, -1.2])
        params["trans.conv2.b"].data[:] = bias
        h = models.encode_frames(random_frames(np.random.default_rng(7), cfg),
                                 params, cfg)
        h = models.transition_step(models.transition_step(h, params, cfg), params, cfg)
        assert np.allclose(h.s.data, np.broadcast_to(bias, h.s.data.shape))

    def test_layout_mismatch_rejected(self):
        cfg = tiny_cfg("position")
        params = models.init_params(cfg, np.random.default_rng(8))
        h = models.encode_frames(random_frames(np.random.default_rng(8), cfg),
                                 params, cfg)
        bad = models.LatentState(s=h.s, p=h.p[:, 0:1])
        with pytest.raises(ValueError):
            models.transition_step(bad, params, cfg)


class TestCovariance:
    def test_axis_aligned(self):
        b1, b2 = models.eigen_logit(2.0), models.eigen_logit(0.5)
        cov = models.build_covariance(b1, b2, 0.0)
        assert np.allclose(cov, [[2.0, 0.0], [0.0, 0.5]], atol=1e-9)

    def test_quarter_turn_swaps_axes(self):
        b1, b2 = models.eigen_logit(2.0), models.eigen_logit(0.5)
        cov = models.build_covariance(b1, b2, np.pi / 2)
        assert np.allclose(cov, [[0.5, 0.0], [0.0, 2.0]], atol=1e-9)

    def test_zero_logits_isotropic(self):
        for theta in (0.0, 0.3, 2.0):
            cov = models.build_covariance(0.0, 0.0, theta)
            assert np.allclose(cov, 50.005 * np.eye(2), atol=1e-9)

    def test_spd_and_spectrum_bulk(self):
        rng = np.random.default_rng(10)
        n = 100_000
        b1 = rng.uniform(-30, 30, n)
        b2 = rng.uniform(-30, 30, n)
        theta = rng.uniform(-10, 10, n)
        cov = models.build_covariance(b1, b2, theta)
        assert np.max(np.abs(cov[:, 0, 1] - cov[:, 1, 0])) <= 1e-12
        eigs = np.linalg.eigvalsh(cov)
        assert eigs.min() > 0.01 and eigs.max() < 100.0
        expected = np.sort(np.stack([
            models._scaled_sigmoid_np(b1, 99.99, 0.01),
            models._scaled_sigmoid_np(b2, 99.99, 0.01)], axis=1), axis=1)
        assert np.max(np.abs(np.sort(eigs, axis=1) - expected)) <= 1e-9

    def test_eigen_relabel_symmetry(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            b1, b2, theta = rng.uniform(-5, 5, 3)
            a = models.build_covariance(b1, b2, theta)
            b = models.build_covariance(b2, b1, theta + np.pi / 2)
            assert np.max(np.abs(a - b)) <= 1e-10

    def test_eigen_logit_inverse(self):
        for lam in (0.02, 1.0, 50.0, 99.0):
            beta = models.eigen_logit(lam)
            assert abs(models._scaled_sigmoid_np(np.array(beta), 99.99, 0.01)
                       - lam) <= 1e-9
        with pytest.raises(ValueError):
            models.eigen_logit(100.5)


class TestDecode:
    def test_position_extraction(self):
        cfg = tiny_cfg("position")
        h = models.LatentState(s=None, p=models.Tensor(np.array([[3.2, 7.1]])))
        pred = models.decode_state(h, cfg)
        assert np.allclose(pred.mu.data, [[3.2, 7.1]])
        assert pred.belief is None and pred.omega is None

    def test_gaussian_belief_isotropic_at_zero_logits(self):
        cfg = tiny_cfg("gaussian")
        h = models.LatentState(s=None,
                               p=models.Tensor(np.array([[1.0, 2.0, 0.0, 0.0, 0.7]])))
        pred = models.decode_state(h, cfg)
        assert abs(pred.belief.lam1.data[0] - 50.005) <= 1e-12
        assert abs(pred.belief.lam2.data[0] - 50.005) <= 1e-12
        cov = models.build_covariance(0.0, 0.0, 0.7)
        assert np.allclose(cov, 50.005 * np.eye(2), atol=1e-9)

    def test_position_av_layout(self):
        cfg = tiny_cfg("position_av")
        p = np.array([[4.0, 5.0, 0.1, 0.2, 0.3]])
        pred = models.decode_state(models.LatentState(s=None, p=models.Tensor(p)), cfg)
        assert np.allclose(pred.mu.data, [[4.0, 5.0]])
        assert np.allclose(pred.omega.data, [[0.1, 0.2, 0.3]])

    def test_layout_mismatch_rejected(self):
        cfg = tiny_cfg("gaussian_av")
        with pytest.raises(ValueError):
            models.decode_state(models.LatentState(
                s=None, p=models.Tensor(np.zeros((1, 5)))), cfg)


class TestRollout:
    def _setup(self, variant="position", seed=12):
        cfg = tiny_cfg(variant)
        params = models.init_params(cfg, np.random.default_rng(seed))
        h0 = models.encode_frames(random_frames(np.random.default_rng(seed + 1), cfg),
                                  params, cfg)
        return cfg, params, h0

    def test_horizon_one_is_plain_decode(self):
        cfg, params, h0 = self._setup()
        preds = models.rollout(h0, 1, params, cfg)
        assert len(preds) == 1
        assert np.array_equal(preds[0].mu.data, h0.p.data)

    def test_zero_p_head_freezes_positions(self):
        cfg, params, h0 = self._setup()
        params["trans.p.w"].data[:] = 0.0
        params["trans.p.b"].data[:] = 0.0
        preds = models.rollout(h0, 6, params, cfg)
        for pred in preds:
            assert np.array_equal(pred.mu.data, h0.p.data)

    def test_prefix_consistency_bit_for_bit(self):
        cfg, params, h0 = self._setup(seed=13)
        long = models.rollout(h0, 8, params, cfg)
        h0b = models.encode_frames(
            random_frames(np.random.default_rng(14), cfg), params, cfg)
        # same encoder input stream: rebuild identical h0 to compare runs
        cfg2, params2, h0c = self._setup(seed=13)
        short = models.rollout(h0c, 4, params2, cfg2)
        for t in range(4):
            assert np.array_equal(long[t].mu.data, short[t].mu.data)

    def test_rejects_empty_horizon(self):
        cfg, params, h0 = self._setup()
        with pytest.raises(ValueError):
            models.rollout(h0, 0, params, cfg)


class TestInterp:
    def test_outputs_and_sensitivity(self):
        cfg = tiny_cfg("anchored")
        params = models.init_params(cfg, np.random.default_rng(15))
        rng = np.random.default_rng(16)
        context = rng.uniform(0, 0.7, size=(1, 4, 8, 8, 3))
        final = rng.uniform(0, 0.7, size=(1, 8, 8, 3))
        h0, final_mu = models.interp_encode(context, final, params, cfg)
        assert h0.p.data.shape == (1, 2)           # position-shaped state
        assert final_mu.data.shape == (1, 2)
        # channel order matters: swapping the final frame into slot 0 changes
        # the activations
        swapped = np.concatenate([final[:, None], context[:, 1:]], axis=1)
        h0s = models.encode_frames(
            np.concatenate([swapped, context[:, :1]], axis=1), params, cfg)
        assert not np.allclose(h0.s.data, h0s.s.data)

    def test_requires_anchored_variant(self):
        cfg = tiny_cfg("position")
        params = models.init_params(cfg, np.random.default_rng(17))
        with pytest.raises(ValueError):
            models.interp_encode(np.zeros((1, 4, 8, 8, 3)),
                                 np.zeros((1, 8, 8, 3)), params, cfg)


class TestEndToEndGradients:
    @pytest.mark.parametrize("variant", ["position_av", "gaussian_av", "anchored"])
    def test_full_loss_matches_finite_differences(self, variant):
        # position and gaussian run in the acceptance suite; the remaining
        # variants are covered here on the same tiny geometry
        cfg = tiny_cfg(variant)
        rng = np.random.default_rng(18)
        params = models.init_params(cfg, rng, init_std=0.1)
        frames = random_frames(np.random.default_rng(19), cfg, n=2)
        horizon = 3
        targets = RolloutTargets(
            positions=np.random.default_rng(20).uniform(0, 8, size=(2, horizon, 2)),
            omegas=np.random.default_rng(21).normal(size=(2, horizon, 3)))

        def loss():
            if variant == "anchored":
                h0, final_mu = models.interp_encode(frames[:, :4], frames[:, 4],
                                                    params, cfg)
            else:
                h0, final_mu = models.encode_frames(frames, params, cfg), None
            preds = models.rollout(h0, horizon, params, cfg)
            return sequence_loss(preds, targets, cfg, lam_reg=0.01,
                                 final_mu=final_mu).total

        assert finite_difference_check(loss, params, h=1e-5) <= 1e-4
