import numpy as np
import pytest

from ncssd import oracles
from ncssd.config import BlockConfig, MatchConfig, ModelConfig
from ncssd.errors import DimensionError
from ncssd.matching import (
    CorrelationPyramid,
    FieldEstimate,
    GruState,
    argmax_disparity,
    argmax_flow,
    build_disparity_volume,
    build_flow_volume,
    build_pyramid,
    conv_gru,
    convex_upsample,
    gru_update,
    iterate_disparity_multires,
    iterate_flow,
    lookup_argmax_disparity,
    lookup_argmax_flow,
    lookup_disparity,
    lookup_flow,
    split_context,
)
from ncssd.tensor import avg_pool
from ncssd.weights import init_weights


def one_hot_flow_features(H, W, du, dv):
    """Left pixel p carries e_p; right pixel p + (dv, du) carries the same vector."""
    D = H * W
    fl = np.eye(D).reshape(D, H, W)
    fr = np.zeros((D, H, W))
    for i in range(H):
        for j in range(W):
            k, l = i + dv, j + du
            if 0 <= k < H and 0 <= l < W:
                fr[i * W + j, k, l] = 1.0
    return fl, fr


def one_hot_disparity_features(H, W, d):
    f = np.zeros((W, H, W))
    g = np.zeros((W, H, W))
    for j in range(W):
        f[j, :, j] = 1.0
        if j - d >= 0:
            g[j, :, j - d] = 1.0
    return f, g


def small_cfg(p=4, scales=3, levels=2, radius=1):
    return ModelConfig(
        BlockConfig(patch_size=p, embed_dim=8, state_dim=3, num_heads=2, num_blocks=1),
        MatchConfig(context_dim=10, hidden_dim=4, motion_dim=5, corr_levels=levels, radius=radius,
                    disparity_scales=scales),
    )


def randomized(cfg, rng, scale=0.2):
    w = init_weights(cfg, seed=0, dtype=np.float64)
    for k in w.entries:
        w.entries[k] = w.entries[k] + rng.normal(0, scale, w.entries[k].shape)
    return w


class TestVolumes:
    def test_zero_right(self, rng):
        assert not build_flow_volume(rng.standard_normal((3, 4, 5)), np.zeros((3, 4, 5))).any()

    def test_one_hot_identity(self):
        fl, _ = one_hot_flow_features(4, 5, 0, 0)
        vol = build_flow_volume(fl, fl)
        ref = np.eye(20).reshape(4, 5, 4, 5)
        np.testing.assert_array_equal(vol, ref)

    def test_flow_loop_oracle(self, rng):
        fl, fr = rng.standard_normal((2, 8, 6, 6))
        assert np.max(np.abs(build_flow_volume(fl, fr) - oracles.flow_volume_loop(fl, fr))) < 1e-10

    def test_disparity_orthonormal_rows(self):
        f, _ = one_hot_disparity_features(3, 5, 0)
        vol = build_disparity_volume(f, f)
        np.testing.assert_array_equal(vol, np.broadcast_to(np.eye(5), (3, 5, 5)))

    def test_disparity_unit_feature(self, rng):
        g = rng.standard_normal((1, 3, 5))
        vol = build_disparity_volume(np.ones((1, 3, 5)), g)
        np.testing.assert_allclose(vol, np.broadcast_to(g[0][:, None, :], (3, 5, 5)))

    def test_disparity_loop_oracle(self, rng):
        f, g = rng.standard_normal((2, 8, 5, 7))
        assert np.max(np.abs(build_disparity_volume(f, g) - oracles.disparity_volume_loop(f, g))) < 1e-10

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            build_flow_volume(np.ones((2, 3, 3)), np.ones((2, 3, 4)))
        with pytest.raises(DimensionError):
            build_disparity_volume(np.ones((2, 3, 3)), np.ones((3, 3, 3)))


class TestPyramid:
    def test_shapes(self, rng):
        pyr = build_pyramid(rng.standard_normal((4, 6, 16, 24)), "flow")
        assert [l.shape for l in pyr.levels] == [(4, 6, 16 // 2**k, 24 // 2**k) for k in range(4)]
        dp = build_pyramid(rng.standard_normal((4, 16, 16)), "disparity")
        assert [l.shape for l in dp.levels] == [(4, 16, 16 // 2**k) for k in range(4)]

    def test_constant(self):
        pyr = build_pyramid(np.full((2, 2, 8, 8), 3.25), "flow")
        for lvl in pyr.levels:
            np.testing.assert_array_equal(lvl, 3.25)

    def test_global_mean_at_top(self, rng):
        vol = rng.standard_normal((2, 3, 8, 8))
        top = build_pyramid(vol, "flow").levels[3]
        assert top.shape == (2, 3, 1, 1)
        np.testing.assert_allclose(top[..., 0, 0], vol.mean(axis=(2, 3)), atol=1e-14)

    def test_composition(self, rng):
        vol = rng.standard_normal((3, 3, 16, 16))
        lvl2 = build_pyramid(vol, "flow").levels[2]
        direct = vol.reshape(3, 3, 4, 4, 4, 4).mean(axis=(3, 5))
        assert np.max(np.abs(lvl2 - direct)) < 1e-12

    def test_mean_consistency(self, rng):
        vol = rng.standard_normal((2, 16, 32))
        for lvl in build_pyramid(vol, "disparity").levels:
            np.testing.assert_allclose(lvl.mean(-1), vol.mean(-1), atol=1e-14)

    def test_too_small(self):
        with pytest.raises(DimensionError):
            build_pyramid(np.ones((2, 2, 4, 4)), "flow")


class TestLookup:
    def test_identity_volume_zero_flow(self):
        fl, _ = one_hot_flow_features(8, 8, 0, 0)
        pyr = build_pyramid(build_flow_volume(fl, fl), "flow")
        feats = lookup_flow(pyr, FieldEstimate("flow", np.zeros((2, 8, 8))), 0)
        np.testing.assert_array_equal(feats[..., 0], 1.0)

    def test_channel_counts(self, rng):
        pyr = build_pyramid(rng.standard_normal((8, 8, 8, 8)), "flow")
        assert lookup_flow(pyr, FieldEstimate("flow", np.zeros((2, 8, 8))), 4).shape == (8, 8, 324)
        dp = build_pyramid(rng.standard_normal((8, 8, 8)), "disparity")
        assert lookup_disparity(dp, FieldEstimate("disparity", np.zeros((1, 8, 8))), 4).shape == (8, 8, 36)

    def test_flow_oracle(self, rng):
        pyr = build_pyramid(rng.standard_normal((6, 7, 12, 16)), "flow", 3)
        flow = rng.uniform(-5, 5, (2, 6, 7))
        got = lookup_flow(pyr, FieldEstimate("flow", flow), 1)
        ref = oracles.lookup_flow_loop(pyr.levels, flow, 1)
        assert np.max(np.abs(got - ref)) < 1e-10

    def test_disparity_oracle(self, rng):
        pyr = build_pyramid(rng.standard_normal((5, 16, 16)), "disparity")
        disp = rng.uniform(-2, 10, (1, 5, 16))
        got = lookup_disparity(pyr, FieldEstimate("disparity", disp), 2)
        ref = oracles.lookup_disparity_loop(pyr.levels, disp, 2)
        assert np.max(np.abs(got - ref)) < 1e-10

    def test_zero_disparity_r0(self, rng):
        vol = rng.standard_normal((3, 8, 8))
        pyr = build_pyramid(vol, "disparity", 2)
        got = lookup_disparity(pyr, FieldEstimate("disparity", np.zeros((1, 3, 8))), 0)
        ii, jj = np.meshgrid(range(3), range(8), indexing="ij")
        np.testing.assert_array_equal(got[..., 0], vol[ii, jj, jj])
        for i in range(3):
            for j in range(8):
                assert got[i, j, 1] == pytest.approx(oracles.linear_point(pyr.levels[1][i, j], j / 2))

    def test_level0_aligned_entries(self, rng):
        vol = rng.standard_normal((5, 6, 5, 6))
        pyr = build_pyramid(vol, "flow", 2)
        got = lookup_flow(pyr, FieldEstimate("flow", np.zeros((2, 5, 6))), 0)
        ii, jj = np.meshgrid(range(5), range(6), indexing="ij")
        np.testing.assert_array_equal(got[..., 0], vol[ii, jj, ii, jj])


class TestRecovery:
    @pytest.mark.parametrize("du,dv", [(3, -2), (-6, 5), (0, 4), (6, 6)])
    def test_flow_shift(self, du, dv):
        H = W = 32
        fl, fr = one_hot_flow_features(H, W, du, dv)
        vol = build_flow_volume(fl, fr)
        flow = argmax_flow(vol)
        ii, jj = np.meshgrid(range(H), range(W), indexing="ij")
        interior = (ii + dv >= 0) & (ii + dv < H) & (jj + du >= 0) & (jj + du < W)
        assert np.all(flow[0][interior] == du) and np.all(flow[1][interior] == dv)
        pyr = build_pyramid(vol, "flow")
        dec = lookup_argmax_flow(pyr, FieldEstimate("flow", np.zeros((2, H, W))), 6)
        assert np.all(dec[0][interior] == du) and np.all(dec[1][interior] == dv)

    @pytest.mark.parametrize("d", [1, 3, 6])
    def test_disparity(self, d):
        f, g = one_hot_disparity_features(8, 32, d)
        vol = build_disparity_volume(f, g)
        disp = argmax_disparity(vol)
        assert np.all(disp[0, :, d:] == d)
        pyr = build_pyramid(vol, "disparity")
        dec = lookup_argmax_disparity(pyr, FieldEstimate("disparity", np.zeros((1, 8, 32))), 6)
        assert np.all(dec[0, :, d:] == d)


class TestGru:
    def _weights(self, rng, Dh, Dx):
        return {f"g.conv{g}.{p}": rng.standard_normal(s) * 0.3
                for g in "zrq" for p, s in (("weight", (Dh, Dh + Dx, 3, 3)), ("bias", (Dh,)))}

    def test_loop_oracle(self, rng):
        h = np.tanh(rng.standard_normal((3, 5, 4)))
        x = rng.standard_normal((2, 5, 4))
        w = self._weights(rng, 3, 2)
        got = conv_gru(h, x, w, "g")
        ref = oracles.conv_gru_loop(h, x, *(w[f"g.conv{g}.{p}"] for g in "zrq" for p in ("weight", "bias")))
        assert np.max(np.abs(got - ref)) < 1e-10

    def test_saturated_update_gate(self, rng):
        h = rng.standard_normal((3, 4, 4))
        x = rng.standard_normal((2, 4, 4))
        w = self._weights(rng, 3, 2)
        w["g.convz.weight"][:] = 0
        w["g.convz.bias"][:] = 50.0
        from ncssd.tensor import conv2d, sigmoid

        r = sigmoid(conv2d(np.concatenate([h, x]), w["g.convr.weight"], w["g.convr.bias"], padding=1))
        q = np.tanh(conv2d(np.concatenate([r * h, x]), w["g.convq.weight"], w["g.convq.bias"], padding=1))
        np.testing.assert_array_equal(conv_gru(h, x, w, "g"), q)

    def test_zero_weights_halves(self, rng):
        h = rng.standard_normal((3, 4, 4))
        w = {k: np.zeros_like(v) for k, v in self._weights(rng, 3, 2).items()}
        np.testing.assert_array_equal(conv_gru(h, rng.standard_normal((2, 4, 4)), w, "g"), 0.5 * h)

    def test_bounded(self, rng):
        for _ in range(20):
            h = rng.uniform(-3, 3, (3, 4, 4))
            out = conv_gru(h, rng.standard_normal((2, 4, 4)) * 5, self._weights(rng, 3, 2), "g")
            assert np.abs(out).max() <= max(np.abs(h).max(), 1.0) + 1e-12

    def test_update_shapes_and_alignment(self, rng):
        cfg = small_cfg()
        w = randomized(cfg, rng)
        look = rng.standard_normal((4, 6, 2 * 9))
        state = GruState([np.zeros((4, 4, 6))])
        est = FieldEstimate("flow", np.zeros((2, 4, 6)))
        st2, delta, mask = gru_update(state, look, rng.standard_normal((6, 4, 6)), est, w, "update_flow")
        assert st2.hidden[0].shape == (4, 4, 6) and delta.shape == (2, 4, 6) and mask.shape == (144, 4, 6)
        with pytest.raises(DimensionError):
            gru_update(state, look, rng.standard_normal((6, 4, 5)), est, w, "update_flow")


class TestConvexUpsample:
    def test_constant_preserved(self, rng):
        out = convex_upsample(np.full((2, 3, 4), 1.25), rng.standard_normal((36, 3, 4)), 2, False)
        np.testing.assert_allclose(out, 1.25, atol=1e-14)

    def test_uniform_weights_box_filter(self, rng):
        f = rng.standard_normal((1, 4, 5))
        out = convex_upsample(f, np.zeros((9 * 4, 4, 5)), 2, False)
        pad = np.pad(f, ((0, 0), (1, 1), (1, 1)), mode="edge")
        box = sum(pad[:, 1 + dy : 5 + dy, 1 + dx : 6 + dx] for dy in (-1, 0, 1) for dx in (-1, 0, 1)) / 9
        np.testing.assert_allclose(out, np.repeat(np.repeat(box, 2, 1), 2, 2), atol=1e-14)

    @pytest.mark.parametrize("s,scale", [(2, True), (4, False)])
    def test_loop_oracle(self, rng, s, scale):
        f = rng.standard_normal((2, 4, 3))
        lg = rng.standard_normal((9 * s * s, 4, 3))
        ref = oracles.convex_upsample_loop(f, lg, s, scale)
        assert np.max(np.abs(convex_upsample(f, lg, s, scale) - ref)) < 1e-10

    def test_logit_shift_invariance(self, rng):
        f = rng.standard_normal((2, 3, 3))
        lg = rng.standard_normal((36, 3, 3))
        np.testing.assert_allclose(convex_upsample(f, lg + 7.5, 2), convex_upsample(f, lg, 2), atol=1e-7)

    def test_value_scaling(self, rng):
        f = rng.standard_normal((1, 3, 3))
        lg = rng.standard_normal((144, 3, 3))
        np.testing.assert_allclose(convex_upsample(f, lg, 4, True), 4 * convex_upsample(f, lg, 4, False))

    def test_channel_mismatch(self):
        with pytest.raises(DimensionError):
            convex_upsample(np.zeros((1, 2, 2)), np.zeros((35, 2, 2)), 2)


def _zero_heads(w, prefix):
    for k in list(w.entries):
        if k.startswith(f"{prefix}.delta."):
            w.entries[k] = np.zeros_like(w.entries[k])


class TestIterate:
    def test_flow_zero_heads(self, rng):
        cfg = small_cfg()
        w = randomized(cfg, rng)
        _zero_heads(w, "update_flow")
        pyr = build_pyramid(rng.standard_normal((4, 4, 4, 4)), "flow", 2)
        outs = iterate_flow(pyr, rng.standard_normal((10, 4, 4)), 3, 1, w, cfg)
        assert len(outs) == 3
        for o in outs:
            assert o.values.shape == (2, 16, 16)
            assert not o.values.any()

    def test_flow_one_iteration(self, rng):
        cfg = small_cfg()
        w = randomized(cfg, rng)
        pyr = build_pyramid(rng.standard_normal((4, 4, 4, 4)), "flow", 2)
        ctx = rng.standard_normal((10, 4, 4))
        out = iterate_flow(pyr, ctx, 1, 1, w, cfg)
        h, c = split_context(ctx, cfg)
        est = FieldEstimate("flow", np.zeros((2, 4, 4)))
        _, delta, mask = gru_update(GruState([h]), lookup_flow(pyr, est, 1), c, est, w, "update_flow")
        np.testing.assert_array_equal(out[0].values, convex_upsample(delta, mask, 4, True))

    @pytest.mark.parametrize("scales", [1, 2, 3])
    def test_disparity_zero_heads(self, rng, scales):
        cfg = small_cfg(scales=scales)
        w = randomized(cfg, rng)
        _zero_heads(w, "update_disp")
        pyr = build_pyramid(rng.standard_normal((8, 8, 8)), "disparity", 2)
        outs = iterate_disparity_multires(pyr, rng.standard_normal((10, 8, 8)), 3, 1, w, cfg)
        assert len(outs) == 3
        for o in outs:
            assert o.values.shape == (1, 32, 32) and not o.values.any()

    def test_disparity_nonnegative(self, rng):
        cfg = small_cfg()
        w = randomized(cfg, rng, 0.5)
        pyr = build_pyramid(rng.standard_normal((8, 8, 8)), "disparity", 2)
        outs = iterate_disparity_multires(pyr, rng.standard_normal((10, 8, 8)), 4, 1, w, cfg)
        assert all(o.values.min() >= 0 for o in outs)
        assert any(o.values.max() > 0 for o in outs)

    def test_single_scale_matches_flow_style_loop(self, rng):
        cfg = small_cfg(scales=1)
        w = randomized(cfg, rng, 0.5)
        pyr = build_pyramid(rng.standard_normal((8, 8, 8)), "disparity", 2)
        ctx = rng.standard_normal((10, 8, 8))
        outs = iterate_disparity_multires(pyr, ctx, 3, 1, w, cfg)
        h, c = split_context(ctx, cfg)
        state = GruState([h])
        disp = np.zeros((1, 8, 8))
        for o in outs:
            est = FieldEstimate("disparity", disp)
            state, delta, mask = gru_update(state, lookup_disparity(pyr, est, 1), c, est, w, "update_disp")
            disp = disp + delta
            np.testing.assert_array_equal(o.values, np.maximum(convex_upsample(disp, mask, 4, True), 0))

    def test_multires_divisibility(self, rng):
        cfg = small_cfg(scales=3)
        w = randomized(cfg, rng)
        pyr = build_pyramid(rng.standard_normal((6, 6, 6)), "disparity", 2)
        with pytest.raises(DimensionError):
            iterate_disparity_multires(pyr, rng.standard_normal((10, 6, 6)), 1, 1, w, cfg)

    def test_multires_coarse_states_matter(self, rng):
        # changing only a coarse GRU's weights must change the output
        cfg = small_cfg(scales=3)
        w = randomized(cfg, rng, 0.5)
        pyr = build_pyramid(rng.standard_normal((8, 8, 8)), "disparity", 2)
        ctx = rng.standard_normal((10, 8, 8))
        a = iterate_disparity_multires(pyr, ctx, 2, 1, w, cfg)[-1].values
        w.entries["update_disp.gru2.convq.bias"] = w["update_disp.gru2.convq.bias"] + 1.0
        b = iterate_disparity_multires(pyr, ctx, 2, 1, w, cfg)[-1].values
        assert np.abs(a - b).max() > 0
        assert avg_pool(ctx, 2).shape == (10, 4, 4)
