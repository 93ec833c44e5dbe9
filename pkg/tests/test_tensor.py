import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ncssd import oracles
from ncssd.errors import DimensionError
from ncssd.tensor import (
    as_tensor,
    avg_pool,
    bilinear_sample,
    concat,
    conv2d,
    layer_norm,
    linear_sample,
    matmul,
    sigmoid,
    silu,
    softmax,
    split,
    upsample2x_bilinear,
    upsample_replicate,
)


class TestMatmul:
    def test_identity(self, rng):
        a = rng.standard_normal((3, 3))
        np.testing.assert_array_equal(matmul(np.eye(3), a), a)

    def test_hand(self):
        out = matmul(np.array([[1.0, 2], [3, 4]]), np.array([[1.0], [1]]))
        np.testing.assert_array_equal(out, [[3], [7]])

    def test_loop_oracle(self, rng):
        a, b = rng.standard_normal((7, 5)), rng.standard_normal((5, 3))
        assert np.max(np.abs(matmul(a, b) - oracles.matmul_loop(a, b))) < 1e-12

    def test_errors(self):
        with pytest.raises(DimensionError):
            matmul(np.ones((2, 3)), np.ones((2, 3)))
        with pytest.raises(DimensionError):
            matmul(np.ones((2, 3)), np.ones((3, 2), dtype=np.float32))

    def test_associativity(self, rng):
        for _ in range(10):
            a, b, c = (rng.standard_normal((6, 6)) for _ in range(3))
            lhs, rhs = matmul(matmul(a, b), c), matmul(a, matmul(b, c))
            assert np.max(np.abs(lhs - rhs)) <= 1e-9 * np.max(np.abs(lhs))


class TestConv2d:
    def test_identity_1x1(self, rng):
        x = rng.standard_normal((1, 4, 5))
        np.testing.assert_array_equal(conv2d(x, np.ones((1, 1, 1, 1)), np.zeros(1)), x)

    def test_box_sum(self):
        out = conv2d(np.ones((1, 5, 5)), np.ones((1, 1, 3, 3)), np.zeros(1), padding=1)
        assert out[0, 2, 2] == 9 and out[0, 0, 0] == 4

    @pytest.mark.parametrize("stride,padding", [(1, 1), (2, 1), (1, 0), (2, 0)])
    def test_loop_oracle(self, rng, stride, padding):
        x = rng.standard_normal((2, 8, 8))
        wt = rng.standard_normal((4, 2, 3, 3))
        b = rng.standard_normal(4)
        got = conv2d(x, wt, b, stride, padding)
        assert np.max(np.abs(got - oracles.conv2d_loop(x, wt, b, stride, padding))) < 1e-10

    def test_depthwise_matches_per_channel(self, rng):
        x = rng.standard_normal((3, 6, 6))
        wt = rng.standard_normal((3, 1, 3, 3))
        got = conv2d(x, wt, None, padding=1, groups=3)
        for c in range(3):
            ref = oracles.conv2d_loop(x[c : c + 1], wt[c : c + 1], None, padding=1)
            np.testing.assert_allclose(got[c], ref[0], atol=1e-12)

    def test_linearity(self, rng):
        x, y = rng.standard_normal((2, 2, 7, 7))
        wt = rng.standard_normal((3, 2, 3, 3))
        a, b = 1.7, -0.3
        lhs = conv2d(a * x + b * y, wt, None, padding=1)
        rhs = a * conv2d(x, wt, None, padding=1) + b * conv2d(y, wt, None, padding=1)
        assert np.max(np.abs(lhs - rhs)) < 1e-9

    def test_too_small(self):
        with pytest.raises(DimensionError):
            conv2d(np.ones((1, 2, 2)), np.ones((1, 1, 5, 5)))

    def test_float32_preserved(self, rng):
        x = rng.standard_normal((2, 5, 5)).astype(np.float32)
        wt = rng.standard_normal((2, 2, 3, 3)).astype(np.float32)
        assert conv2d(x, wt, np.zeros(2, np.float32), padding=1).dtype == np.float32


class TestLayerNorm:
    def test_constant_vector(self):
        out = layer_norm(np.full((1, 4), 3.0), np.ones(4), np.zeros(4))
        np.testing.assert_array_equal(out, 0)

    def test_symmetric_pair(self):
        out = layer_norm(np.array([1.0, 3.0]), np.ones(2), np.zeros(2), eps=1e-12)
        np.testing.assert_allclose(out, [-1, 1], atol=1e-9)

    def test_statistics(self, rng):
        out = layer_norm(rng.standard_normal((4, 16)) * 5 + 2, np.ones(16), np.zeros(16))
        assert np.all(np.abs(out.mean(-1)) < 1e-7)
        assert np.all(np.abs(out.var(-1) - 1) < 1e-4)

    def test_bad_eps(self):
        with pytest.raises(ValueError):
            layer_norm(np.ones(2), np.ones(2), np.zeros(2), eps=0)


class TestElementwise:
    def test_fixed_points(self):
        assert silu(np.array([0.0]))[0] == 0
        assert sigmoid(np.array([0.0]))[0] == 0.5
        np.testing.assert_allclose(softmax(np.full(5, 2.0)), 0.2)

    def test_sigmoid_extremes_finite(self):
        out = sigmoid(np.array([-1000.0, 1000.0]))
        np.testing.assert_array_equal(out, [0.0, 1.0])

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-50, 50), min_size=1, max_size=20), st.floats(-100, 100))
    def test_softmax_properties(self, xs, c):
        x = np.array(xs)
        p = softmax(x)
        assert abs(p.sum() - 1) < 1e-7
        assert np.max(np.abs(softmax(x + c) - p)) < 1e-7

    def test_softmax_bad_axis(self):
        with pytest.raises(DimensionError):
            softmax(np.ones((2, 2)), axis=2)

    def test_concat_split_roundtrip(self, rng):
        x = rng.standard_normal((5, 3))
        parts = split(x, [2, 3], axis=0)
        np.testing.assert_array_equal(concat(parts, axis=0), x)
        with pytest.raises(DimensionError):
            split(x, [2, 2])

    def test_as_tensor(self):
        t = as_tensor([1, 2])
        assert t.dtype == np.float64 and t.flags.c_contiguous
        with pytest.raises(DimensionError):
            as_tensor(np.ones((0, 2)))


class TestPooling:
    def test_two_by_two(self):
        np.testing.assert_array_equal(avg_pool(np.array([[1.0, 2], [3, 4]]), 2), [[2.5]])

    def test_floor_on_odd(self):
        assert avg_pool(np.ones((5, 7)), 2).shape == (2, 3)

    def test_empty_extent(self):
        with pytest.raises(DimensionError):
            avg_pool(np.ones((1, 4)), 2)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 4), st.integers(1, 4), st.integers(0, 2**31 - 1))
    def test_pool_replicate_preserves_mean(self, h, w, seed):
        # dyadic values keep every sum exact
        x = np.random.default_rng(seed).integers(-64, 64, size=(2 * h, 2 * w)) / 8.0
        up = upsample_replicate(avg_pool(x, 2), 2)
        assert up.mean() == x.mean()


class TestSampling:
    def test_integer_coordinate(self, rng):
        m = rng.standard_normal((2, 4, 5))
        got = bilinear_sample(m, np.array([[2.0, 3.0]]))
        np.testing.assert_array_equal(got[0], m[:, 2, 3])

    def test_midpoint(self, rng):
        m = rng.standard_normal((1, 4, 5))
        got = bilinear_sample(m, np.array([[1.0, 2.5]]))
        assert got[0, 0] == pytest.approx((m[0, 1, 2] + m[0, 1, 3]) / 2)

    def test_border_clamp(self, rng):
        m = rng.standard_normal((1, 3, 3))
        got = bilinear_sample(m, np.array([[-5.0, -5.0], [10.0, 1.0]]))
        assert got[0, 0] == m[0, 0, 0] and got[1, 0] == m[0, 2, 1]

    def test_against_point_oracle(self, rng):
        m = rng.standard_normal((1, 6, 7))
        pts = rng.uniform(-2, 9, size=(40, 2))
        got = bilinear_sample(m, pts)[:, 0]
        ref = [oracles.bilinear_point(m[0], y, x) for y, x in pts]
        np.testing.assert_allclose(got, ref, atol=1e-12)

    def test_linear_sample(self, rng):
        line = rng.standard_normal((3, 9))
        c = rng.uniform(-2, 11, size=(3, 5))
        got = linear_sample(line, c)
        for i in range(3):
            for k in range(5):
                assert got[i, k] == pytest.approx(oracles.linear_point(line[i], c[i, k]), abs=1e-12)

    def test_upsample2x_constant(self):
        out = upsample2x_bilinear(np.full((2, 3, 4), 1.5))
        assert out.shape == (2, 6, 8)
        np.testing.assert_allclose(out, 1.5)
