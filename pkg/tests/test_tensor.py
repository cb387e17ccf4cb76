"""Unit tests for the autodiff tensor engine."""

import numpy as np
import numpy.testing as npt
import pytest

from conftest import finite_difference_check
from ginet import tensor as T
from ginet.errors import ConfigError, GradientError, ShapeError
from ginet.tensor import Tensor


class TestMatmul:
    def test_identity(self):
        eye = Tensor(np.eye(2))
        b = Tensor([[5.0, 6.0], [7.0, 8.0]])
        npt.assert_array_equal(T.matmul(eye, b).data, b.data)

    def test_hand_arithmetic(self):
        a = Tensor([[1.0, 2.0]])
        b = Tensor([[3.0], [4.0]])
        npt.assert_array_equal(T.matmul(a, b).data, [[11.0]])

    def test_shape_algebra(self):
        out = T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((3, 4))))
        assert out.shape == (2, 4)

    def test_mismatch_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(4, 5\)"):
            T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 5))))

    def test_batched(self):
        rng = np.random.default_rng(0)
        a = rng.normal(size=(2, 3, 4, 5))
        b = rng.normal(size=(2, 3, 5, 6))
        out = T.matmul(Tensor(a), Tensor(b))
        npt.assert_allclose(out.data, a @ b)

    def test_associativity(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            a, b, c = (Tensor(rng.normal(size=(4, 4))) for _ in range(3))
            left = T.matmul(T.matmul(a, b), c).data
            right = T.matmul(a, T.matmul(b, c)).data
            npt.assert_allclose(left, right, atol=1e-9)


class TestSoftmax:
    def test_symmetry(self):
        npt.assert_allclose(T.softmax(Tensor([0.0, 0.0])).data, [0.5, 0.5])

    def test_analytic(self):
        out = T.softmax(Tensor([np.log(2.0), 0.0]))
        npt.assert_allclose(out.data, [2.0 / 3.0, 1.0 / 3.0], atol=1e-15)

    def test_large_values_do_not_overflow(self):
        out = T.softmax(Tensor([1000.0, 0.0]))
        assert np.all(np.isfinite(out.data))
        npt.assert_allclose(out.data, [1.0, 0.0], atol=1e-300)

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(2)
        x = Tensor(rng.normal(size=(3, 5, 7)) * 10)
        out = T.softmax(x)
        npt.assert_allclose(out.data.sum(axis=-1), 1.0, atol=1e-12)
        assert np.all(out.data >= 0)

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=9)
        perm = rng.permutation(9)
        direct = T.softmax(Tensor(x[perm])).data
        permuted = T.softmax(Tensor(x)).data[perm]
        npt.assert_allclose(direct, permuted, atol=1e-15)

    def test_masked_entries_get_zero_probability(self):
        out = T.softmax(Tensor([1.0, -np.inf, 2.0]))
        assert out.data[1] == 0.0
        npt.assert_allclose(out.data.sum(), 1.0)

    def test_empty_axis_rejected(self):
        with pytest.raises(ShapeError):
            T.softmax(Tensor(np.zeros((3, 0))))


class TestConv1d:
    def test_identity_kernel(self):
        x = Tensor(np.random.default_rng(4).normal(size=(2, 6, 1)))
        k = Tensor(np.ones((1, 1, 1)))
        npt.assert_allclose(T.conv1d(x, k, "zero").data, x.data)

    def test_delta_kernel(self):
        x = Tensor(np.array([[[1.0], [2.0], [3.0]]]))
        k = Tensor(np.array([0.0, 1.0, 0.0]).reshape(3, 1, 1))
        npt.assert_allclose(T.conv1d(x, k, "zero").data, x.data)

    def test_same_length(self):
        x = Tensor(np.random.default_rng(5).normal(size=(1, 100, 3)))
        k = Tensor(np.random.default_rng(6).normal(size=(3, 3, 8)))
        assert T.conv1d(x, k, "circular").shape == (1, 100, 8)

    def test_even_width_rejected(self):
        with pytest.raises(ConfigError):
            T.conv1d(Tensor(np.ones((1, 4, 1))), Tensor(np.ones((2, 1, 1))))

    def test_circular_wraps(self):
        x = Tensor(np.arange(4.0).reshape(1, 4, 1))
        k = Tensor(np.array([1.0, 0.0, 0.0]).reshape(3, 1, 1))  # picks left neighbour
        out = T.conv1d(x, k, "circular")
        npt.assert_allclose(out.data[0, :, 0], [3.0, 0.0, 1.0, 2.0])

    def test_zero_padding_edges(self):
        x = Tensor(np.arange(4.0).reshape(1, 4, 1))
        k = Tensor(np.array([1.0, 0.0, 0.0]).reshape(3, 1, 1))
        out = T.conv1d(x, k, "zero")
        npt.assert_allclose(out.data[0, :, 0], [0.0, 0.0, 1.0, 2.0])


class TestBackward:
    def test_square_gradient(self):
        x = Tensor(3.0, requires_grad=True)
        T.backward(T.square(x))
        npt.assert_allclose(x.grad, 6.0)

    def test_matmul_gradient(self):
        a = Tensor([[2.0]], requires_grad=True)
        b = Tensor([[3.0]], requires_grad=True)
        T.backward(T.tsum(T.matmul(a, b)))
        npt.assert_allclose(a.grad, [[3.0]])
        npt.assert_allclose(b.grad, [[2.0]])

    def test_non_scalar_loss_rejected(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with pytest.raises(GradientError):
            T.backward(x + x)

    def test_detached_loss_rejected(self):
        with pytest.raises(GradientError):
            T.backward(Tensor(1.0))

    def test_grad_accumulates_over_reuse(self):
        x = Tensor(2.0, requires_grad=True)
        T.backward(T.tsum(x * x + x))
        npt.assert_allclose(x.grad, 5.0)

    def test_small_net_matches_finite_differences(self):
        # every layer type stacked into one scalar loss
        rng = np.random.default_rng(7)
        params = {
            "w1": Tensor(rng.uniform(-1, 1, (3, 4)), requires_grad=True),
            "b1": Tensor(rng.uniform(-1, 1, 4), requires_grad=True),
            "kern": Tensor(rng.uniform(-1, 1, (3, 4, 4)), requires_grad=True),
            "gain": Tensor(rng.uniform(0.5, 1.5, 4), requires_grad=True),
            "bias": Tensor(rng.uniform(-1, 1, 4), requires_grad=True),
            "w2": Tensor(rng.uniform(-1, 1, (4, 2)), requires_grad=True),
        }
        x = Tensor(rng.uniform(-1, 1, (2, 6, 3)))

        def loss_fn():
            h = T.matmul(x, params["w1"]) + params["b1"]
            h = T.tanh(h)
            h = T.conv1d(h, params["kern"], "circular")
            h = T.elu(h)
            h = T.layer_norm(h, params["gain"], params["bias"])
            h = T.max_pool1d(h)
            h = T.softmax(h)
            h = T.sigmoid(T.matmul(h, params["w2"]))
            return T.tmean(T.square(h))

        finite_difference_check(params, loss_fn)

    def test_gather_scatter_cumsum_gradients(self):
        rng = np.random.default_rng(8)
        params = {
            "v": Tensor(rng.uniform(-1, 1, (2, 5, 3)), requires_grad=True),
            "rows": Tensor(rng.uniform(-1, 1, (2, 2, 3)), requires_grad=True),
        }
        idx = np.array([[0, 3], [4, 1]])

        def loss_fn():
            picked = T.gather_rows(params["v"], idx)
            merged = T.scatter_rows(params["v"], idx, params["rows"] + picked)
            return T.tmean(T.square(T.cumsum_rows(merged)))

        finite_difference_check(params, loss_fn)


class TestOpCounter:
    def test_matmul_count(self):
        g = T.active_graph()
        before = g.op_counter
        T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((3, 4))))
        assert g.op_counter - before == 2 * 3 * 4

    def test_conv_count(self):
        g = T.active_graph()
        before = g.op_counter
        T.conv1d(Tensor(np.ones((2, 10, 3))), Tensor(np.ones((3, 3, 5))), "zero")
        assert g.op_counter - before == 2 * 10 * 3 * 3 * 5

    def test_full_attention_count_is_quadratic(self):
        # doubling the sequence length must quadruple score+mix MACs within 5%
        def attention_macs(length, d=8):
            rng = np.random.default_rng(9)
            q = Tensor(rng.normal(size=(1, 1, length, d)))
            k = Tensor(rng.normal(size=(1, 1, length, d)))
            v = Tensor(rng.normal(size=(1, 1, length, d)))
            g = T.active_graph()
            before = g.op_counter
            scores = T.matmul(q, T.permute(k, (0, 1, 3, 2)))
            T.matmul(T.softmax(scores), v)
            return g.op_counter - before

        ratios = [attention_macs(2 * n) / attention_macs(n) for n in (32, 64, 128)]
        assert all(abs(r - 4.0) <= 0.2 for r in ratios)

    def test_counter_monotone_and_counting_under_no_grad(self):
        g = T.active_graph()
        before = g.op_counter
        with T.no_grad():
            T.matmul(Tensor(np.ones((2, 2)), requires_grad=True), Tensor(np.ones((2, 2))))
        assert g.op_counter == before + 8


class TestForwardSanity:
    def test_finite_outputs_on_finite_inputs(self):
        rng = np.random.default_rng(10)
        x = Tensor(rng.normal(size=(2, 8, 4)) * 3)
        k = Tensor(rng.normal(size=(3, 4, 4)))
        gain, bias = Tensor(np.ones(4)), Tensor(np.zeros(4))
        for out in (T.softmax(x), T.conv1d(x, k), T.elu(x), T.sigmoid(x),
                    T.tanh(x), T.relu(x), T.layer_norm(x, gain, bias),
                    T.max_pool1d(x), T.cumsum_rows(x)):
            assert np.all(np.isfinite(out.data))

    def test_dropout_eval_is_identity(self):
        x = Tensor(np.ones((4, 4)))
        assert T.dropout(x, 0.5, training=False) is x

    def test_dropout_train_scales(self):
        T.seed_rng(123)
        x = Tensor(np.ones((1000, 10)))
        out = T.dropout(x, 0.25, training=True)
        kept = out.data[out.data > 0]
        npt.assert_allclose(kept, 1.0 / 0.75)
        assert abs(kept.size / out.data.size - 0.75) < 0.03

    def test_dropout_rate_validated(self):
        with pytest.raises(ConfigError):
            T.dropout(Tensor(np.ones(3)), 1.0, training=True)

    def test_max_pool_lengths(self):
        assert T.max_pool1d(Tensor(np.zeros((1, 100, 2)))).shape == (1, 50, 2)
        assert T.max_pool1d(Tensor(np.zeros((1, 7, 2)))).shape == (1, 4, 2)

    def test_cumsum_rows_values(self):
        x = Tensor(np.array([[[1.0], [2.0], [3.0]]]))
        npt.assert_allclose(T.cumsum_rows(x).data[0, :, 0], [1.0, 3.0, 6.0])
