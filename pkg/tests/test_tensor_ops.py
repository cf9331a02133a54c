"""Forward-op contracts: worked examples, loop-nest oracles, adjointness."""

import numpy as np
import pytest

from noduleforge.nn import ops
from noduleforge.nn.layers import (LayerParams, batchnorm_params,
                                   fully_connected_params)
from noduleforge.nn.tensor import Tensor


def conv_params(w, b=None, stride=1, padding=0):
    w = np.asarray(w, dtype=float)
    bias = np.zeros(w.shape[0]) if b is None else np.asarray(b, dtype=float)
    return LayerParams("conv2d", Tensor(w), Tensor(bias),
                       {"stride": stride, "padding": padding})


def convt_params(w, b=None, stride=1, padding=0):
    w = np.asarray(w, dtype=float)
    bias = np.zeros(w.shape[1]) if b is None else np.asarray(b, dtype=float)
    return LayerParams("conv2d_transpose", Tensor(w), Tensor(bias),
                       {"stride": stride, "padding": padding})


def conv2d_loop_oracle(x, w, b, stride, pad):
    """Quadruple-loop cross-correlation, written independently of the engine."""
    n, ci, h, wd = x.shape
    co, _, kh, kw = w.shape
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (wd + 2 * pad - kw) // stride + 1
    xp = np.zeros((n, ci, h + 2 * pad, wd + 2 * pad))
    xp[:, :, pad:pad + h, pad:pad + wd] = x
    out = np.zeros((n, co, oh, ow))
    for ni in range(n):
        for o in range(co):
            for p in range(oh):
                for q in range(ow):
                    acc = 0.0
                    for c in range(ci):
                        for i in range(kh):
                            for j in range(kw):
                                acc += w[o, c, i, j] * xp[ni, c, p * stride + i,
                                                          q * stride + j]
                    out[ni, o, p, q] = acc + b[o]
    return out


class TestConv2d:
    def test_all_ones_kernel_sums_input(self):
        x = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 1, 2, 2))
        p = conv_params(np.ones((1, 1, 2, 2)))
        out = ops.conv2d_forward(x, p)
        assert out.shape == (1, 1, 1, 1)
        assert out.item() == 10.0

    def test_identity_kernel(self, rng):
        x = Tensor(rng.normal(size=(2, 3, 5, 5)))
        w = np.zeros((3, 3, 1, 1))
        for c in range(3):
            w[c, c, 0, 0] = 1.0
        out = ops.conv2d_forward(x, conv_params(w))
        np.testing.assert_array_equal(out.data, x.data)

    def test_matches_loop_oracle(self, rng):
        x = rng.normal(size=(1, 1, 4, 4))
        w = rng.normal(size=(1, 1, 3, 3))
        b = rng.normal(size=1)
        out = ops.conv2d_forward(Tensor(x), conv_params(w, b))
        np.testing.assert_allclose(out.data, conv2d_loop_oracle(x, w, b, 1, 0),
                                   atol=1e-12)

    @pytest.mark.parametrize("stride,pad", [(1, 0), (1, 1), (2, 1), (2, 0), (3, 2)])
    def test_matches_loop_oracle_geometries(self, rng, stride, pad):
        x = rng.normal(size=(2, 3, 6, 7))
        w = rng.normal(size=(4, 3, 3, 3))
        b = rng.normal(size=4)
        out = ops.conv2d_forward(Tensor(x), conv_params(w, b, stride, pad))
        np.testing.assert_allclose(out.data,
                                   conv2d_loop_oracle(x, w, b, stride, pad),
                                   atol=1e-12)

    def test_output_extent_formula(self, rng):
        x = Tensor(rng.normal(size=(1, 1, 56, 56)))
        out = ops.conv2d_forward(x, conv_params(rng.normal(size=(8, 1, 4, 4)),
                                                stride=2, padding=1))
        assert out.shape == (1, 8, 28, 28)

    def test_channel_mismatch_names_both_shapes(self, rng):
        x = Tensor(rng.normal(size=(1, 2, 4, 4)))
        p = conv_params(rng.normal(size=(1, 3, 2, 2)))
        with pytest.raises(ValueError, match=r"(?s)\(1, 2, 4, 4\).*\(1, 3, 2, 2\)"):
            ops.conv2d_forward(x, p)

    def test_deterministic(self, rng):
        x = Tensor(rng.normal(size=(2, 2, 6, 6)))
        p = conv_params(rng.normal(size=(3, 2, 3, 3)), stride=2, padding=1)
        a = ops.conv2d_forward(x, p).data
        b = ops.conv2d_forward(x, p).data
        np.testing.assert_array_equal(a, b)


class TestConv2dTranspose:
    def test_single_pixel_broadcasts_kernel(self, rng):
        a = 1.7
        k = rng.normal(size=(1, 1, 2, 2))
        x = Tensor(np.full((1, 1, 1, 1), a))
        out = ops.conv2d_transpose_forward(x, convt_params(k, stride=2))
        assert out.shape == (1, 1, 2, 2)
        np.testing.assert_allclose(out.data[0, 0], a * k[0, 0], atol=1e-12)

    def test_shape_formula(self, rng):
        x = Tensor(rng.normal(size=(1, 3, 7, 7)))
        p = convt_params(rng.normal(size=(3, 2, 4, 4)), stride=2, padding=1)
        out = ops.conv2d_transpose_forward(x, p)
        assert out.shape == (1, 2, 14, 14)

    def test_adjoint_identity_100_trials(self):
        rng = np.random.default_rng(7)
        for trial in range(100):
            stride = int(rng.integers(1, 3))
            pad = int(rng.integers(0, 2))
            k = int(rng.integers(2, 4))
            ci, co = int(rng.integers(1, 4)), int(rng.integers(1, 4))
            oh = int(rng.integers(1, 4))
            h = (oh - 1) * stride + k - 2 * pad  # exact-divisibility geometry
            if h < 1:
                continue
            x = rng.normal(size=(2, ci, h, h))
            w = rng.normal(size=(co, ci, k, k))
            y = rng.normal(size=(2, co, oh, oh))
            fwd = ops.conv2d_forward(Tensor(x), conv_params(w, stride=stride,
                                                            padding=pad)).data
            adj = ops.conv2d_transpose_forward(Tensor(y),
                                               convt_params(w, stride=stride,
                                                            padding=pad)).data
            lhs = float(np.sum(fwd * y))
            rhs = float(np.sum(x * adj))
            assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs)), \
                f"trial {trial}: <conv(x),y>={lhs} != <x,convT(y)>={rhs}"


class TestBatchnorm:
    def test_constant_channel_collapses_to_beta(self):
        x = Tensor(np.full((2, 1, 3, 3), 4.2))
        p = batchnorm_params(1)
        p.weights.data[:] = 3.0
        p.bias.data[:] = -0.7
        out = ops.batchnorm_forward(x, p, training=True)
        np.testing.assert_allclose(out.data, -0.7, atol=1e-5)

    def test_two_values_normalize_to_unit(self):
        x = Tensor(np.array([1.0, 3.0]).reshape(1, 1, 1, 2))
        p = batchnorm_params(1, epsilon=1e-14)
        out = ops.batchnorm_forward(x, p, training=True)
        np.testing.assert_allclose(out.data.reshape(-1), [-1.0, 1.0], atol=1e-6)

    def test_matches_statistics_oracle(self, rng):
        x = rng.normal(1.5, 2.0, size=(2, 3, 4, 4))
        p = batchnorm_params(3, epsilon=1e-5)
        p.weights.data[:] = rng.normal(size=3)
        p.bias.data[:] = rng.normal(size=3)
        out = ops.batchnorm_forward(Tensor(x), p, training=True)
        expected = np.empty_like(x)
        for c in range(3):
            vals = x[:, c]
            mu = vals.mean()
            var = vals.var()
            expected[:, c] = (p.weights.data[c] * (vals - mu)
                              / np.sqrt(var + 1e-5) + p.bias.data[c])
        np.testing.assert_allclose(out.data, expected, atol=1e-12)

    def test_normalized_stats_before_affine(self, rng):
        x = Tensor(rng.normal(3.0, 2.5, size=(4, 3, 5, 5)))
        p = batchnorm_params(3, epsilon=1e-10)
        out = ops.batchnorm_forward(x, p, training=True)  # gamma 1, beta 0
        for c in range(3):
            vals = out.data[:, c]
            assert abs(vals.mean()) < 1e-9
            assert abs(vals.var() - 1.0) < 1e-6

    def test_inference_uses_running_stats(self, rng):
        x = Tensor(rng.normal(size=(2, 2, 3, 3)))
        p = batchnorm_params(2)
        p.running_mean.data[:] = [1.0, -1.0]
        p.running_var.data[:] = [4.0, 0.25]
        out = ops.batchnorm_forward(x, p, training=False)
        expected = (x.data - p.running_mean.data[None, :, None, None]) / np.sqrt(
            p.running_var.data[None, :, None, None] + 1e-5)
        np.testing.assert_allclose(out.data, expected, atol=1e-12)

    def test_empty_batch_rejected(self):
        x = Tensor(np.zeros((0, 1, 2, 2)))
        with pytest.raises(ValueError, match="empty batch"):
            ops.batchnorm_forward(x, batchnorm_params(1), training=True)


class TestActivations:
    def test_sigmoid_at_zero(self):
        assert ops.activation_forward(Tensor([0.0]), "sigmoid").data[0] == 0.5

    def test_leaky_relu_negative(self):
        out = ops.activation_forward(Tensor([-2.0]), "leaky_relu", alpha=0.2)
        np.testing.assert_allclose(out.data, [-0.4], atol=1e-15)

    def test_tanh_at_zero(self):
        assert ops.activation_forward(Tensor([0.0]), "tanh").data[0] == 0.0

    def test_ranges(self, rng):
        # |x| kept below ~30: float64 sigmoid saturates to exactly 1.0 beyond
        x = Tensor(rng.normal(0, 5, size=1000))
        t = ops.activation_forward(x, "tanh").data
        s = ops.activation_forward(x, "sigmoid").data
        assert np.all((t >= -1) & (t <= 1))
        assert np.all((s > 0) & (s < 1))

    def test_unknown_kind(self):
        with pytest.raises(ValueError, match="unknown activation"):
            ops.activation_forward(Tensor([0.0]), "gelu")


class TestFullyConnected:
    def test_identity_weights(self, rng):
        x = Tensor(rng.normal(size=(2, 4)))
        p = fully_connected_params(4, 4)
        p.weights.data[:] = np.eye(4)
        out = ops.fully_connected_forward(x, p)
        np.testing.assert_array_equal(out.data, x.data)

    def test_zero_weights_give_bias(self, rng):
        x = Tensor(rng.normal(size=(3, 5)))
        p = fully_connected_params(5, 2)
        p.bias.data[:] = [1.5, -2.5]
        out = ops.fully_connected_forward(x, p)
        np.testing.assert_array_equal(out.data, np.tile([1.5, -2.5], (3, 1)))

    def test_matches_dot_oracle(self, rng):
        x = rng.normal(size=8)
        w = rng.normal(size=(3, 8))
        b = rng.normal(size=3)
        p = fully_connected_params(8, 3)
        p.weights.data[:] = w
        p.bias.data[:] = b
        out = ops.fully_connected_forward(Tensor(x), p)
        expected = [sum(w[o, i] * x[i] for i in range(8)) + b[o] for o in range(3)]
        np.testing.assert_allclose(out.data, expected, atol=1e-12)

    def test_length_mismatch(self, rng):
        x = Tensor(rng.normal(size=(2, 7)))
        with pytest.raises(ValueError, match="length mismatch"):
            ops.fully_connected_forward(x, fully_connected_params(8, 3))


class TestLayerParams:
    def test_conv_kernel_must_be_4d(self):
        with pytest.raises(ValueError, match="4-dimensional"):
            LayerParams("conv2d", Tensor(np.zeros((3, 3))), Tensor(np.zeros(1)))

    def test_batchnorm_gamma_beta_lengths(self):
        with pytest.raises(ValueError, match="length mismatch"):
            LayerParams("batchnorm", Tensor(np.ones(4)), Tensor(np.zeros(3)))

    def test_stride_and_padding_validated(self, rng):
        x = Tensor(rng.normal(size=(1, 1, 4, 4)))
        p = conv_params(rng.normal(size=(1, 1, 2, 2)), stride=0)
        with pytest.raises(ValueError, match="stride"):
            ops.conv2d_forward(x, p)
        p = conv_params(rng.normal(size=(1, 1, 2, 2)), padding=-1)
        with pytest.raises(ValueError, match="padding"):
            ops.conv2d_forward(x, p)
