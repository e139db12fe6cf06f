import itertools

import numpy as np
import pytest

from facts import autodiff as ad
from facts.autodiff import Tensor
from facts.errors import ConfigError
from facts.heads import (
    ConvEncoder,
    DFTEncoder,
    FactorGraphDecoder,
    MultiScaleEncoder,
    Predictor,
    encode_conv,
    encode_dft,
    encode_multiscale,
    fgd_decode,
    predict_latents,
)


class TestDFT:
    def test_constant_series(self, f64):
        enc = encode_dft(np.full((1, 16, 2), 4.0), 1).data
        np.testing.assert_allclose(enc[..., 0], 4.0, atol=1e-12)
        np.testing.assert_allclose(enc[..., 1], 0.0, atol=1e-12)

    def test_sinusoid_goes_to_seasonal(self, f64):
        t = np.arange(32)
        x = (1.5 + np.sin(2 * np.pi * 3 * t / 32))[None, :, None]
        enc = encode_dft(x, 1).data
        np.testing.assert_allclose(enc[..., 0], x.mean(), atol=1e-12)
        np.testing.assert_allclose(enc[..., 1], x - x.mean(), atol=1e-12)

    def test_channels_sum_to_input(self, f64, rng):
        x = rng.standard_normal((2, 24, 3))
        for top_k in (1, 3, 11):
            np.testing.assert_allclose(encode_dft(x, top_k).data.sum(-1), x, atol=1e-6)

    @pytest.mark.parametrize("top_k", [0, 12, 30])
    def test_out_of_range(self, top_k):
        with pytest.raises(ConfigError):
            encode_dft(np.zeros((1, 24, 2)), top_k)

    def test_lifted_width(self, f64, rng):
        enc = DFTEncoder(3, 10, rng)
        assert enc(rng.standard_normal((2, 24, 5))).shape == (2, 24, 5, 10)


class TestConv:
    def test_pointwise_lift(self, f64, rng):
        enc = ConvEncoder(1, 6, rng)
        x = rng.standard_normal((2, 9, 3))
        expected = x[..., None] * enc.kernel.data[0, 0] + enc.bias.data
        np.testing.assert_allclose(enc(x).data, expected, rtol=1e-15)
        const = enc(np.full((1, 9, 3), 2.0)).data
        np.testing.assert_array_equal(const, np.broadcast_to(const[:, :1], const.shape))

    def test_variates_independent(self, f64, rng):
        enc = ConvEncoder(5, 4, rng)
        x = rng.standard_normal((2, 12, 4))
        base = enc(x).data
        x[:, :, 1] += rng.standard_normal(12)
        out = enc(x).data
        np.testing.assert_array_equal(out[:, :, [0, 2, 3]], base[:, :, [0, 2, 3]])

    def test_matches_per_variate_loop(self, f64, rng):
        enc = ConvEncoder(5, 4, rng)
        x = rng.standard_normal((2, 12, 3))
        got = enc(x).data
        K = enc.kernel.data[:, 0, :]
        for j in range(3):
            series = np.concatenate([np.repeat(x[:, :1, j], 4, axis=1), x[:, :, j]], axis=1)
            ref = np.zeros((2, 12, 4))
            for s in range(12):
                for tap in range(5):
                    ref[:, s] += series[:, s + tap, None] * K[tap]
            np.testing.assert_allclose(got[:, :, j], ref + enc.bias.data, rtol=1e-13, atol=1e-15)

    def test_causal(self, f64, rng):
        enc = ConvEncoder(4, 3, rng)
        x = rng.standard_normal((1, 10, 2))
        base = enc(x).data
        x[:, 6:] += 1.0
        np.testing.assert_array_equal(enc(x).data[:, :6], base[:, :6])


class TestMultiScale:
    def test_single_scale_is_conv(self, f64, rng):
        enc = MultiScaleEncoder([3], 4, rng)
        x = rng.standard_normal((2, 8, 3))
        b = enc.branches[0]
        np.testing.assert_array_equal(enc(x).data, encode_conv(x, b.kernel, b.bias).data)
        np.testing.assert_array_equal(enc(x).data, encode_multiscale(x, [b.kernel], [b.bias]).data)

    def test_constant_series(self, f64, rng):
        out = MultiScaleEncoder([1, 2], 4, rng)(np.full((1, 7, 3), -1.5)).data
        np.testing.assert_allclose(out, np.broadcast_to(out[:, :1], out.shape), rtol=1e-15)

    def test_branches_fill_disjoint_blocks(self, f64, rng):
        enc = MultiScaleEncoder([1, 3, 5], 6, rng)
        x = rng.standard_normal((2, 9, 2))
        base = enc(x).data
        enc.branches[1].kernel.data = np.zeros_like(enc.branches[1].kernel.data)
        enc.branches[1].bias.data = np.zeros_like(enc.branches[1].bias.data)
        out = enc(x).data
        assert not out[..., 2:4].any()
        np.testing.assert_array_equal(out[..., [0, 1, 4, 5]], base[..., [0, 1, 4, 5]])

    def test_divisibility(self, rng):
        with pytest.raises(ConfigError):
            MultiScaleEncoder([1, 2, 3], 8, rng)


class TestPredictor:
    def test_identity(self, f64, rng):
        z = rng.standard_normal((2, 6, 3, 4))
        out = predict_latents(Tensor(z), Tensor(np.eye(6)), Tensor(np.zeros(6)))
        np.testing.assert_array_equal(out.data, z)

    def test_bias_only(self, f64, rng):
        beta = np.array([0.5, -1.0, 2.0])
        out = predict_latents(Tensor(rng.standard_normal((2, 6, 3, 4))), Tensor(np.zeros((6, 3))), Tensor(beta))
        np.testing.assert_array_equal(out.data, np.broadcast_to(beta[None, :, None, None], (2, 3, 3, 4)))

    def test_matches_per_lane_loop(self, f64, rng):
        pred = Predictor(7, 3, rng)
        z = rng.standard_normal((2, 7, 3, 4))
        got = pred(Tensor(z)).data
        for b, i, j in itertools.product(range(2), range(3), range(4)):
            ref = z[b, :, i, j] @ pred.weight.data + pred.bias.data
            np.testing.assert_allclose(got[b, :, i, j], ref, rtol=1e-14, atol=1e-15)


class TestDecoder:
    def test_equal_logits_blend(self, f64):
        dec = FactorGraphDecoder(1, 1, np.random.default_rng(0))
        dec.logit_map.weight.data = np.zeros((1, 1))
        dec.logit_map.bias.data = np.zeros(1)
        dec.pred_map.weight.data = np.ones((1, 1))
        dec.pred_map.bias.data = np.zeros(1)
        out = fgd_decode(Tensor(np.array([2.0, 4.0]).reshape(1, 1, 2, 1)), dec)
        assert out.data.item() == 3.0

    def test_single_factor(self, f64, rng):
        dec = FactorGraphDecoder(4, 3, rng)
        z = rng.standard_normal((2, 5, 1, 4))
        expected = z[:, :, 0] @ dec.pred_map.weight.data + dec.pred_map.bias.data
        np.testing.assert_allclose(dec(Tensor(z)).data, expected, rtol=1e-14)

    def test_factor_order(self, f64, rng):
        dec = FactorGraphDecoder(4, 5, rng)
        z = rng.standard_normal((2, 6, 3, 4))
        base = dec(Tensor(z)).data
        for perm in itertools.permutations(range(3)):
            np.testing.assert_allclose(dec(Tensor(z[:, :, list(perm)])).data, base, rtol=1e-12, atol=0)

    def test_output_shape(self, f64, rng):
        assert FactorGraphDecoder(4, 7, rng)(Tensor(rng.standard_normal((2, 6, 3, 4)))).shape == (2, 6, 7)
