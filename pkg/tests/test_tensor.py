"""Numeric core: forward values against hand/oracle computations, gradients
against central finite differences, and the engine's structural invariants."""

import numpy as np
import pytest

from pzsl.errors import NumericError, ParameterError, ShapeError
from pzsl.gradcheck import gradcheck, make_inputs
from pzsl.optim import SGDMomentum
from pzsl.tensor import (
    Tensor,
    add,
    clamp_min,
    gelu,
    gumbel_noise,
    gumbel_softmax_rows,
    layer_norm,
    log,
    matmul,
    mul,
    softmax_rows,
    transpose,
    tsum,
)


def naive_matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = np.zeros((a.shape[0], b.shape[1]), dtype=np.float64)
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            for k in range(a.shape[1]):
                out[i, j] += float(a[i, k]) * float(b[k, j])
    return out


class TestMatmul:
    def test_identity(self):
        rng = np.random.default_rng(0)
        a = rng.standard_normal((2, 2)).astype(np.float32)
        out = matmul(Tensor(np.eye(2)), Tensor(a))
        np.testing.assert_allclose(out.data, a, rtol=1e-6)

    def test_hand_computed(self):
        out = matmul(Tensor([[1, 2], [3, 4]]), Tensor([[5], [6]]))
        np.testing.assert_allclose(out.data, [[17], [39]])

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))

    def test_matches_triple_loop_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            a = rng.standard_normal((6, 6)).astype(np.float32)
            b = rng.standard_normal((6, 6)).astype(np.float32)
            got = matmul(Tensor(a), Tensor(b)).data
            np.testing.assert_allclose(got, naive_matmul(a, b), atol=1e-4)

    def test_gradcheck(self):
        a, b = make_inputs([(3, 4), (4, 2)], seed=1)
        assert gradcheck(matmul, [a, b], seed=1) <= 1e-3

    def test_linear_op_gradcheck_tight(self):
        # Linear maps are exact for central differences up to rounding.
        (a,) = make_inputs([(4, 3)], seed=2)
        w = Tensor(np.random.default_rng(3).standard_normal((3, 5)), dtype=np.float64)
        assert gradcheck(lambda x: matmul(x, w), [a], seed=2) <= 1e-5


class TestSoftmaxRows:
    def test_symmetry(self):
        out = softmax_rows(Tensor([[0.0, 0.0, 0.0]]))
        np.testing.assert_allclose(out.data, [[1 / 3, 1 / 3, 1 / 3]], atol=1e-6)

    def test_stabilized_against_overflow(self):
        out = softmax_rows(Tensor([[1000.0, 0.0]]))
        np.testing.assert_allclose(out.data, [[1.0, 0.0]], atol=1e-7)

    def test_direct_evaluation(self):
        out = softmax_rows(Tensor([[1.0, 2.0, 3.0]]))
        np.testing.assert_allclose(out.data, [[0.0900, 0.2447, 0.6652]], atol=1e-3)

    def test_nan_input_raises(self):
        with pytest.raises(NumericError):
            softmax_rows(Tensor(np.array([[np.nan, 0.0]])))

    def test_rows_sum_to_one_property(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            r, c = rng.integers(1, 9), rng.integers(2, 9)
            x = (rng.standard_normal((r, c)) * rng.uniform(0.1, 50)).astype(np.float32)
            s = softmax_rows(Tensor(x)).data
            assert np.all(s >= 0)
            np.testing.assert_allclose(s.sum(axis=1), 1.0, atol=1e-5)

    def test_gradcheck(self):
        (x,) = make_inputs([(3, 5)], seed=4)
        assert gradcheck(softmax_rows, [x], seed=4) <= 1e-3


class TestGumbelSoftmaxRows:
    def test_hard_rows_exactly_one_hot(self):
        rng = np.random.default_rng(5)
        for trial in range(20):
            x = Tensor(rng.standard_normal((4, 6)).astype(np.float32))
            out = gumbel_softmax_rows(x, tau=0.7, hard=True, rng=rng).data
            assert np.all(np.isin(out, [0.0, 1.0]))
            np.testing.assert_array_equal(out.sum(axis=1), np.ones(4))

    def test_high_temperature_uniform_without_noise(self):
        out = gumbel_softmax_rows(Tensor(np.zeros((2, 4))), tau=1e9, hard=False, rng=None)
        np.testing.assert_allclose(out.data, 0.25, atol=1e-6)

    def test_nonpositive_tau_rejected(self):
        with pytest.raises(ParameterError):
            gumbel_softmax_rows(Tensor(np.zeros((1, 2))), tau=0.0, hard=False, rng=None)

    def test_argmax_frequency_matches_monte_carlo_oracle(self):
        # Oracle: direct argmax of logits + Gumbel noise drawn from the same
        # law with an independent stream; tau does not change the argmax.
        x = np.array([2.0, 0.0, 0.0], dtype=np.float32)
        n = 10_000
        op_rng = np.random.default_rng(123)
        hits = 0
        xt = Tensor(np.tile(x, (1, 1)))
        for _ in range(n):
            out = gumbel_softmax_rows(xt, tau=0.5, hard=True, rng=op_rng).data
            hits += int(out[0, 0] == 1.0)
        freq_op = hits / n

        oracle_rng = np.random.default_rng(321)
        noise = gumbel_noise((n, 3), oracle_rng, dtype=np.float64)
        freq_oracle = np.mean((x + noise).argmax(axis=1) == 0)
        assert abs(freq_op - freq_oracle) <= 0.02

    def test_straight_through_gradient_matches_soft_path(self):
        # Hard output is one-hot but the gradient must be the soft softmax's.
        x = Tensor(np.array([[0.3, -0.2, 1.1]]), requires_grad=True, dtype=np.float64)
        hard = gumbel_softmax_rows(x, tau=0.8, hard=True, rng=None)
        tsum(mul(hard, Tensor(np.array([[1.0, 2.0, 3.0]]), dtype=np.float64))).backward()
        g_hard = x.grad.copy()

        x.zero_grad()
        soft = gumbel_softmax_rows(x, tau=0.8, hard=False, rng=None)
        tsum(mul(soft, Tensor(np.array([[1.0, 2.0, 3.0]]), dtype=np.float64))).backward()
        np.testing.assert_allclose(g_hard, x.grad, rtol=1e-12)

    def test_soft_mode_gradcheck(self):
        (x,) = make_inputs([(3, 4)], seed=6)

        def op(t):
            return gumbel_softmax_rows(t, tau=0.9, hard=False, rng=np.random.default_rng(99))

        assert gradcheck(op, [x], seed=6) <= 1e-3


class TestLayerNorm:
    def test_constant_row_maps_to_zero(self):
        out = layer_norm(Tensor([[5.0, 5.0, 5.0]]), Tensor(np.ones(3)), Tensor(np.zeros(3)))
        np.testing.assert_allclose(out.data, 0.0, atol=1e-3)

    def test_two_point_row(self):
        out = layer_norm(Tensor([[1.0, 3.0]]), Tensor(np.ones(2)), Tensor(np.zeros(2)))
        np.testing.assert_allclose(out.data, [[-1.0, 1.0]], atol=1e-3)

    def test_gradcheck(self):
        x, g, b = make_inputs([(2, 4), (4,), (4,)], seed=8)
        assert gradcheck(layer_norm, [x, g, b], seed=8) <= 1e-3

    def test_rejects_single_column(self):
        with pytest.raises(ShapeError):
            layer_norm(Tensor(np.zeros((3, 1))), Tensor(np.ones(1)), Tensor(np.zeros(1)))


class TestSgdMomentum:
    def test_zero_momentum_is_plain_descent(self):
        p = Tensor(np.array([1.0], dtype=np.float32), requires_grad=True)
        opt = SGDMomentum([p], lr=0.1, momentum=0.0)
        p.grad = np.array([2.0], dtype=np.float32)
        opt.step()
        np.testing.assert_allclose(p.data, [1.0 - 0.1 * 2.0], rtol=1e-6)

    def test_two_steps_unrolled_recurrence(self):
        p = Tensor(np.array([0.0], dtype=np.float32), requires_grad=True)
        opt = SGDMomentum([p], lr=0.1, momentum=0.9)
        for _ in range(2):
            p.grad = np.array([1.0], dtype=np.float32)
            opt.step()
        # v1=1 -> -0.1; v2=1.9 -> -0.19; cumulative -0.29
        np.testing.assert_allclose(p.data, [-0.29], atol=1e-6)

    def test_zero_gradient_leaves_params(self):
        p = Tensor(np.array([3.0, -1.0], dtype=np.float32), requires_grad=True)
        opt = SGDMomentum([p], lr=0.5, momentum=0.9)
        p.grad = np.zeros(2, dtype=np.float32)
        opt.step()
        np.testing.assert_array_equal(p.data, [3.0, -1.0])

    def test_nonfinite_gradient_raises(self):
        p = Tensor(np.array([0.0], dtype=np.float32), requires_grad=True)
        opt = SGDMomentum([p], lr=0.1, momentum=0.9)
        p.grad = np.array([np.inf], dtype=np.float32)
        with pytest.raises(NumericError):
            opt.step()


class TestEngineInvariants:
    def test_grad_shape_matches_data(self):
        x = Tensor(np.ones((3, 2)), requires_grad=True)
        tsum(mul(x, 2.0)).backward()
        assert x.grad.shape == x.data.shape

    def test_shape_invariant(self):
        x = Tensor(np.ones((4, 5)))
        assert x.data.size == 20 and x.shape == (4, 5)

    def test_nonfinite_forward_raises(self):
        with pytest.raises(NumericError):
            log(Tensor(np.zeros((1, 1))))

    def test_clamp_min_guards_log(self):
        out = log(clamp_min(Tensor(np.zeros((1, 1))), 1e-12))
        assert np.isfinite(out.data).all()

    def test_accumulation_on_reused_node(self):
        x = Tensor(np.array([[2.0]]), requires_grad=True, dtype=np.float64)
        y = mul(x, x)  # d/dx x^2 = 2x
        tsum(y).backward()
        np.testing.assert_allclose(x.grad, [[4.0]])

    def test_broadcast_bias_gradient(self):
        x = Tensor(np.ones((3, 2)), requires_grad=True, dtype=np.float64)
        b = Tensor(np.zeros(2), requires_grad=True, dtype=np.float64)
        tsum(add(x, b)).backward()
        np.testing.assert_allclose(b.grad, [3.0, 3.0])

    def test_transpose_roundtrip_gradient(self):
        x = Tensor(np.arange(6, dtype=np.float64).reshape(2, 3), requires_grad=True, dtype=np.float64)
        tsum(transpose(x)).backward()
        np.testing.assert_allclose(x.grad, np.ones((2, 3)))

    def test_all_core_ops_pass_gradcheck_on_small_dims(self):
        rng = np.random.default_rng(17)
        for trial in range(3):
            r = int(rng.integers(2, 8))
            c = int(rng.integers(2, 8))
            (x,) = make_inputs([(r, c)], seed=100 + trial)
            assert gradcheck(softmax_rows, [x], seed=trial) <= 1e-3
            assert gradcheck(gelu, [x], seed=trial) <= 1e-3
            g, b = make_inputs([(c,), (c,)], seed=200 + trial)
            assert gradcheck(layer_norm, [x, g, b], seed=trial) <= 1e-3
            (y,) = make_inputs([(c, r)], seed=300 + trial)
            assert gradcheck(matmul, [x, y], seed=trial) <= 1e-3
            # shift keeps the inputs clear of the clamp kink
            assert gradcheck(lambda t: log(clamp_min(add(t, 5.0), 1e-3)), [x], seed=trial) <= 1e-3
