import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from facts import autodiff as ad
from facts.autodiff import Tape, Tensor
from facts.errors import DimensionError
from facts.gradcheck import elementwise_rel_err, numeric_grad
from facts.scan import ScanInputs, combine, scan, scan_backward, scan_parallel, scan_sequential


def lane(values, t):
    return np.asarray(values, dtype=np.float64).reshape(1, t, 1)


def random_inputs(rng, B, t, lanes, dtype=np.float64):
    return ScanInputs(
        rng.uniform(0.05, 1.0, (B, t) + lanes).astype(dtype),
        rng.standard_normal((B, t) + lanes).astype(dtype),
        rng.standard_normal((B,) + lanes).astype(dtype),
    )


class TestSequential:
    def test_two_steps(self):
        z = scan_sequential(ScanInputs(lane([0.5, 0.5], 2), lane([1, 1], 2), np.zeros((1, 1))))
        np.testing.assert_array_equal(z.ravel(), [1.0, 1.5])

    def test_unit_decay_is_cumsum(self, rng):
        u = rng.standard_normal((2, 9, 3))
        z = scan_sequential(ScanInputs(np.ones_like(u), u, np.zeros((2, 3))))
        np.testing.assert_allclose(z, np.cumsum(u, axis=1), atol=1e-12)

    def test_geometric_decay(self):
        t = 10
        z = scan_sequential(ScanInputs(np.full((1, t, 1), 0.5), np.zeros((1, t, 1)), np.ones((1, 1))))
        np.testing.assert_array_equal(z.ravel(), 2.0 ** -np.arange(1, t + 1))

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            ScanInputs(np.ones((1, 3, 2)), np.ones((1, 4, 2)), np.ones((1, 2)))
        with pytest.raises(DimensionError):
            ScanInputs(np.ones((1, 3, 2)), np.ones((1, 3, 2)), np.ones((1, 3)))


class TestParallel:
    def test_odd_length_32_bit(self, rng):
        inp = random_inputs(rng, 2, 7, (3, 5), np.float32)
        ref, got = scan_sequential(inp), scan_parallel(inp)
        assert np.abs(got - ref).max() / np.abs(ref).max() <= 1e-5

    def test_single_step_exact(self, rng):
        inp = random_inputs(rng, 2, 1, (3, 5))
        np.testing.assert_array_equal(scan_parallel(inp)[:, 0], inp.a_bar[:, 0] * inp.z0 + inp.u_drive[:, 0])

    @pytest.mark.parametrize("t", [63, 64, 65, 96, 127, 128, 129, 1000])
    def test_tree_lengths(self, rng, t):
        inp = random_inputs(rng, 2, t, (2, 3))
        np.testing.assert_allclose(scan_parallel(inp), scan_sequential(inp), rtol=1e-10, atol=1e-12)

    @pytest.mark.parametrize("leaf", [1, 2, 5, 32])
    def test_leaf_sizes(self, rng, leaf):
        inp = random_inputs(rng, 1, 150, (4,))
        got = scan_parallel(inp, tree_min_steps=2, leaf=leaf)
        np.testing.assert_allclose(got, scan_sequential(inp), rtol=1e-10, atol=1e-12)

    def test_empty_time_axis(self):
        out = scan_parallel(ScanInputs(np.ones((1, 0, 2)), np.ones((1, 0, 2)), np.ones((1, 2))))
        assert out.shape == (1, 0, 2)

    @settings(max_examples=40, deadline=None)
    @given(t=st.integers(1, 300), B=st.integers(1, 3), k=st.integers(1, 4), d=st.integers(1, 4), seed=st.integers(0, 2**31))
    def test_matches_sequential(self, t, B, k, d, seed):
        inp = random_inputs(np.random.default_rng(seed), B, t, (k, d))
        ref = scan_sequential(inp)
        assert np.abs(scan_parallel(inp) - ref).max() <= 1e-10 * max(np.abs(ref).max(), 1e-300)

    def test_combine_associative(self, rng):
        for _ in range(100):
            p, q, r = [(rng.uniform(0.05, 1.0, 5), rng.standard_normal(5)) for _ in range(3)]
            left, right = combine(combine(p, q), r), combine(p, combine(q, r))
            np.testing.assert_allclose(left[0], right[0], rtol=0, atol=1e-12)
            np.testing.assert_allclose(left[1], right[1], rtol=0, atol=1e-12)

    def test_combine_identity(self, rng):
        p = (rng.uniform(size=4), rng.standard_normal(4))
        e = (np.ones(4), np.zeros(4))
        for got in (combine(p, e), combine(e, p)):
            np.testing.assert_array_equal(got[0], p[0])
            np.testing.assert_array_equal(got[1], p[1])


class TestBackward:
    def test_single_step_by_hand(self):
        inp = ScanInputs(lane([0.5], 1), lane([0.0], 1), np.ones((1, 1)))
        z = scan_sequential(inp)
        ga, gu, gz0 = scan_backward(inp, z, np.ones_like(z))
        assert (ga.item(), gu.item(), gz0.item()) == (1.0, 1.0, 0.5)

    def test_zero_upstream(self, rng):
        inp = random_inputs(rng, 2, 6, (3,))
        z = scan_sequential(inp)
        for g in scan_backward(inp, z, np.zeros_like(z)):
            assert not g.any()

    @pytest.mark.parametrize("t", [6, 100])
    def test_finite_differences(self, f64, rng, t):
        inp = random_inputs(rng, 2, t, (2,))
        w = rng.standard_normal(inp.a_bar.shape)
        analytic = scan_backward(inp, scan_sequential(inp), w)
        tensors = [Tensor(inp.a_bar), Tensor(inp.u_drive), Tensor(inp.z0)]

        def f():
            return float((scan_sequential(ScanInputs(*(x.data for x in tensors))) * w).sum())

        for g, x in zip(analytic, tensors):
            assert elementwise_rel_err(g, numeric_grad(f, x)) < 1e-4

    def test_shape_mismatch(self, rng):
        inp = random_inputs(rng, 1, 4, (2,))
        with pytest.raises(DimensionError):
            scan_backward(inp, np.zeros((1, 3, 2)), np.zeros((1, 4, 2)))


class TestTensorScan:
    def test_gradients_flow(self, f64, rng):
        a = Tensor(rng.uniform(0.2, 0.9, (2, 5, 3)), requires_grad=True)
        u = Tensor(rng.standard_normal((2, 5, 3)), requires_grad=True)
        z0 = Tensor(rng.standard_normal(3), requires_grad=True)
        with Tape() as tape:
            loss = ad.sum_(ad.square(scan(a, u, z0)))
        ga, gu, gz0 = tape.backward(loss, [a, u, z0])
        assert gz0.shape == (3,)
        for t, g in ((a, ga), (u, gu), (z0, gz0)):
            num = numeric_grad(lambda: ad.sum_(ad.square(scan(a, u, z0))).item(), t)
            assert elementwise_rel_err(g, num) < 1e-4

    def test_methods_agree(self, f64, rng):
        a, u = rng.uniform(0.2, 0.9, (2, 80, 3)), rng.standard_normal((2, 80, 3))
        np.testing.assert_allclose(scan(a, u, np.zeros(3)).data, scan(a, u, np.zeros(3), "sequential").data, rtol=1e-12)

    def test_bad_method(self):
        with pytest.raises(ValueError):
            scan(np.ones((1, 2, 1)), np.ones((1, 2, 1)), np.zeros(1), method="magic")
