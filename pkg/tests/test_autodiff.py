import numpy as np
import pytest

from facts import autodiff as ad
from facts.autodiff import Tape, Tensor
from facts.errors import ConfigError, ContractError, DimensionError, NonFiniteError
from facts.gradcheck import elementwise_rel_err, numeric_grad
from facts.layer import FactsLayer, forward
from facts.gradcheck import check_gradients


def naive_matmul(a, b):
    p, q = a.shape
    r = b.shape[1]
    out = np.zeros((p, r))
    for i in range(p):
        for j in range(r):
            for s in range(q):
                out[i, j] += a[i, s] * b[s, j]
    return out


class TestMatmul:
    def test_identity(self, f64):
        out = ad.matmul(Tensor([[1.0, 0.0], [0.0, 1.0]]), Tensor([[2.0], [3.0]]))
        np.testing.assert_array_equal(out.data, [[2.0], [3.0]])

    def test_row_times_column(self, f64):
        assert ad.matmul(Tensor([[1.0, 2.0]]), Tensor([[3.0], [4.0]])).data.tolist() == [[11.0]]

    def test_against_triple_loop(self, f64, rng):
        a, b = rng.standard_normal((3, 4)), rng.standard_normal((4, 2))
        np.testing.assert_allclose(ad.matmul(Tensor(a), Tensor(b)).data, naive_matmul(a, b), rtol=0, atol=1e-12)

    def test_batched(self, f64, rng):
        a, b = rng.standard_normal((2, 5, 3, 4)), rng.standard_normal((4, 6))
        out = (Tensor(a) @ Tensor(b)).data
        assert out.shape == (2, 5, 3, 6)
        np.testing.assert_allclose(out[1, 2], naive_matmul(a[1, 2], b), atol=1e-12)

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(DimensionError, match=r"\(2, 3\).*\(4, 2\)"):
            ad.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 2))))


class TestSoftmax:
    def test_symmetric(self, f64):
        np.testing.assert_array_equal(ad.softmax_lastaxis(Tensor([0.0, 0.0])).data, [0.5, 0.5])

    def test_no_overflow(self, f64):
        np.testing.assert_array_equal(ad.softmax_lastaxis(Tensor([1000.0, 1000.0])).data, [0.5, 0.5])

    def test_known_value(self, f64):
        # 1 / (1 + e^2), evaluated separately in plain floating point
        np.testing.assert_allclose(
            ad.softmax_lastaxis(Tensor([1.0, 3.0])).data, [0.11920292202211757, 0.8807970779778824], atol=1e-12
        )

    def test_empty_last_axis(self):
        with pytest.raises(DimensionError):
            ad.softmax_lastaxis(Tensor(np.zeros((3, 0))))


class TestElementwise:
    def test_values(self, f64):
        assert ad.silu(Tensor(0.0)).item() == 0.0
        assert ad.softplus(Tensor(0.0)).item() == pytest.approx(0.693147, abs=1e-6)
        assert ad.exp(Tensor(1.0)).item() == pytest.approx(2.718282, abs=1e-6)

    def test_softplus_large_input_is_finite(self, f64):
        assert ad.softplus(Tensor([800.0])).data[0] == 800.0

    def test_broadcasting(self, f64):
        out = ad.add(Tensor(np.ones((2, 3))), Tensor([1.0, 2.0, 3.0]))
        np.testing.assert_array_equal(out.data, [[2, 3, 4], [2, 3, 4]])

    def test_non_broadcastable(self):
        with pytest.raises(DimensionError):
            ad.mul(Tensor(np.ones((2, 3))), Tensor(np.ones((4,))))

    def test_overflow_is_an_error(self, f64):
        with pytest.raises(NonFiniteError, match="exp"):
            ad.exp(Tensor([1e4]))

    def test_nan_input_is_an_error(self, f64):
        with pytest.raises(NonFiniteError):
            ad.add(Tensor([np.nan]), Tensor([1.0]))


class TestCausalConv:
    def test_identity_kernel(self, f64, rng):
        x = rng.standard_normal((2, 5, 3))
        out = ad.causal_temporal_conv(Tensor(x), Tensor(np.eye(3)[None]))
        np.testing.assert_array_equal(out.data, x)

    def test_hand_convolution(self, f64):
        x = Tensor(np.array([1.0, 2.0, 3.0]).reshape(1, 3, 1))
        out = ad.causal_temporal_conv(x, Tensor(np.ones((2, 1, 1))))
        np.testing.assert_array_equal(out.data.ravel(), [1.0, 3.0, 5.0])

    def test_causal(self, f64, rng):
        x = rng.standard_normal((1, 8, 2))
        k = Tensor(rng.standard_normal((3, 2, 4)))
        base = ad.causal_temporal_conv(Tensor(x), k).data
        for s in range(8):
            x2 = x.copy()
            x2[:, s + 1 :] = rng.standard_normal(x2[:, s + 1 :].shape)
            np.testing.assert_array_equal(ad.causal_temporal_conv(Tensor(x2), k).data[:, : s + 1], base[:, : s + 1])

    def test_wide_kernel_is_padding(self, f64, rng):
        x = rng.standard_normal((1, 2, 1))
        out = ad.causal_temporal_conv(Tensor(x), Tensor(np.ones((5, 1, 1))))
        np.testing.assert_allclose(out.data.ravel(), np.cumsum(x.ravel()))

    def test_empty_kernel(self):
        with pytest.raises(ConfigError):
            ad.causal_temporal_conv(Tensor(np.ones((1, 3, 1))), Tensor(np.ones((0, 1, 1))))


class TestBackward:
    def test_square(self, f64):
        x = Tensor(3.0, requires_grad=True)
        with Tape() as tape:
            y = x * x
        (g,) = ad.backward(tape, y, [x])
        assert g == 6.0
        assert x.grad == 6.0

    def test_tape_freed_without_cycle_collector(self, f64):
        import gc
        import weakref

        x = Tensor(np.ones(4), requires_grad=True)
        gc.disable()
        try:
            with Tape() as tape:
                y = ad.exp(x)
                loss = ad.sum_(y * y)
            tape.backward(loss, [x])
            ref = weakref.ref(y)
            del tape, y, loss
            assert ref() is None
        finally:
            gc.enable()

    def test_softplus_at_zero(self, f64):
        x = Tensor(0.0, requires_grad=True)
        with Tape() as tape:
            y = ad.softplus(x)
        assert ad.backward(tape, y, [x])[0] == 0.5

    def test_non_scalar_loss(self, f64):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with Tape() as tape:
            y = x * 2.0
        with pytest.raises(ContractError):
            ad.backward(tape, y, [x])

    def test_shared_input_accumulates(self, f64):
        x = Tensor(2.0, requires_grad=True)
        with Tape() as tape:
            y = x * x + x * 3.0
        assert ad.backward(tape, y, [x])[0] == 7.0

    def test_unreached_leaf_gets_zero(self, f64):
        x, w = Tensor(2.0, requires_grad=True), Tensor(np.ones(3), requires_grad=True)
        with Tape() as tape:
            y = x * 4.0
        gx, gw = ad.backward(tape, y, [x, w])
        assert gx == 4.0 and not gw.any()

    def test_no_record_context(self, f64):
        x = Tensor(2.0, requires_grad=True)
        with Tape() as tape:
            with ad.no_record():
                y = x * x
        assert len(tape.nodes) == 0
        assert y.item() == 4.0

    def test_composite_matches_finite_differences(self, f64, rng):
        a = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
        b = Tensor(rng.standard_normal((4, 2)), requires_grad=True)

        def loss():
            h = ad.silu(a @ b)
            return ad.sum_(ad.softmax(h, axis=-1) * ad.softplus(h))

        with Tape() as tape:
            out = loss()
        ga, gb = tape.backward(out, [a, b])
        with ad.no_record():
            na = numeric_grad(lambda: loss().item(), a)
            nb = numeric_grad(lambda: loss().item(), b)
        assert elementwise_rel_err(ga, na) < 1e-4
        assert elementwise_rel_err(gb, nb) < 1e-4

    def test_full_layer_gradients(self, f64, rng):
        layer = FactsLayer(2, 3, rng, dconv=2)
        x = Tensor(rng.standard_normal((1, 5, 2, 3)))
        w = rng.standard_normal((1, 5, 2, 3))
        res = check_gradients(lambda: ad.sum_(forward(x, layer)[0] * w), list(layer.named_parameters()))
        worst = max(r["group"] for r in res.values())
        assert worst < 1e-4, res


class TestPrecision:
    def test_default_is_32_bit(self):
        assert Tensor([1.0]).data.dtype == np.float32

    def test_context_restores(self):
        with ad.precision(64):
            assert Tensor([1.0]).data.dtype == np.float64
        assert Tensor([1.0]).data.dtype == np.float32

    def test_rejects_other_widths(self):
        with pytest.raises(ValueError):
            ad.set_precision(16)
