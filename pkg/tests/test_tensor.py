import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import matmul_loops
from tempdistill.gradcheck import check_function
from tempdistill.tensor import (
    ContractError,
    DimensionError,
    DomainError,
    Tape,
    Tensor,
    add,
    elementwise,
    exp,
    log,
    log_softmax,
    matmul,
    mean,
    mul,
    relu,
    scale,
    sigmoid,
    stack_mean,
    sub,
    tensor_sum,
)

finite = st.floats(-2.0, 2.0, allow_nan=False, allow_infinity=False)


class TestTensor:
    def test_rank_limit(self):
        with pytest.raises(DimensionError):
            Tensor(np.zeros((1, 1, 1, 1)))

    def test_zero_dimension_rejected(self):
        with pytest.raises(DimensionError):
            Tensor(np.zeros((0, 3)))

    def test_shape_and_item(self):
        t = Tensor([[1.0, 2.0]])
        assert t.shape == (1, 2) and t.ndim == 2
        assert Tensor(3.5).item() == 3.5

    def test_detach_drops_tape(self):
        tape = Tape()
        w = tape.param(np.ones(2))
        assert w.requires_grad and not w.detach().requires_grad


class TestMatmul:
    def test_identity(self):
        out = matmul(Tensor(np.eye(2)), Tensor([[1.0, 2.0], [3.0, 4.0]]))
        np.testing.assert_array_equal(out.data, [[1, 2], [3, 4]])

    def test_zero(self):
        out = matmul(Tensor(np.eye(2)), Tensor(np.zeros((2, 2))))
        np.testing.assert_array_equal(out.data, np.zeros((2, 2)))

    def test_random_against_loops(self):
        rng = np.random.default_rng(11)
        a, b = rng.normal(size=(3, 4)), rng.normal(size=(4, 2))
        ref = matmul_loops(a.tolist(), b.tolist())
        np.testing.assert_allclose(matmul(Tensor(a), Tensor(b)).data, ref, rtol=0, atol=1e-13)

    def test_mismatch_names_both_shapes(self):
        with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
            matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))

    def test_operator(self):
        a = Tensor(np.eye(2))
        np.testing.assert_array_equal((a @ a).data, np.eye(2))


class TestElementwise:
    def test_sigmoid_zero(self):
        assert elementwise("sigmoid", Tensor(0.0)).item() == 0.5

    def test_log_exp_inverse(self):
        assert elementwise("log", elementwise("exp", Tensor(1.5))).item() == pytest.approx(1.5, abs=1e-15)

    def test_add_against_loops(self):
        rng = np.random.default_rng(3)
        a, b = rng.normal(size=(3, 5)), rng.normal(size=(3, 5))
        ref = [[a[i, j] + b[i, j] for j in range(5)] for i in range(3)]
        np.testing.assert_array_equal(elementwise("add", Tensor(a), Tensor(b)).data, ref)

    @pytest.mark.parametrize("bad", [0.0, -1.0])
    def test_log_domain(self, bad):
        with pytest.raises(DomainError):
            log(Tensor([1.0, bad]))

    def test_unknown_kind(self):
        with pytest.raises(ContractError):
            elementwise("tanh", Tensor(1.0))

    def test_incompatible_shapes(self):
        with pytest.raises(DimensionError):
            add(Tensor(np.zeros((2, 3))), Tensor(np.zeros((3, 2))))

    def test_sub_mul_scale(self):
        a, b = Tensor([1.0, 2.0]), Tensor([3.0, 5.0])
        np.testing.assert_array_equal(sub(a, b).data, [-2, -3])
        np.testing.assert_array_equal(mul(a, b).data, [3, 10])
        np.testing.assert_array_equal(scale(a, 2.0).data, [2, 4])

    def test_log_softmax_large_logits(self):
        ls = log_softmax(Tensor([[1000.0, 1000.0]])).data
        np.testing.assert_allclose(ls, [[-math.log(2)] * 2])


class TestBackward:
    def test_square(self):
        tape = Tape()
        w = tape.param(3.0)
        (g,) = tape.backward(mul(w, w))
        assert g == 6.0 and w.grad == 6.0

    def test_constant_root_gives_zero(self):
        tape = Tape()
        params = tape.watch([np.ones(3), np.ones((2, 2))])
        grads = tape.backward(Tensor(4.0))
        assert all(not g.any() for g in grads)
        assert [g.shape for g in grads] == [(3,), (2, 2)]

    def test_non_scalar_root(self):
        tape = Tape()
        w = tape.param(np.ones(3))
        with pytest.raises(ContractError):
            tape.backward(scale(w, 2.0))

    def test_unused_leaf_gets_zero(self):
        tape = Tape()
        a, b = tape.watch([np.ones(2), np.ones(2)])
        ga, gb = tape.backward(tensor_sum(a))
        np.testing.assert_array_equal(ga, [1, 1])
        np.testing.assert_array_equal(gb, [0, 0])

    def test_mixed_tapes_rejected(self):
        a, b = Tape().param(1.0), Tape().param(1.0)
        with pytest.raises(ContractError):
            add(a, b)

    def test_broadcast_gradient_unbroadcasts(self):
        tape = Tape()
        x, bias = tape.watch([np.ones((4, 3)), np.zeros(3)])
        _, gb = tape.backward(tensor_sum(add(x, bias)))
        np.testing.assert_array_equal(gb, [4, 4, 4])

    def test_node_order_topological(self):
        tape = Tape()
        w = tape.param(np.ones((2, 2)))
        tensor_sum(exp(matmul(w, w)))
        for i, node in enumerate(tape.nodes):
            assert all(src < i for src in node.inputs)


def _composite(P):
    a, b, c = P
    h = sigmoid(add(matmul(a, b), c))
    z = mul(exp(scale(h, 0.5)), relu(sub(h, Tensor(0.3))))
    return add(mean(log_softmax(z)), tensor_sum(log(add(h, Tensor(1.0)))))


class TestGradientCorrectness:
    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2 ** 31 - 1))
    def test_composite_matches_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        params = [rng.uniform(-2, 2, (3, 4)), rng.uniform(-2, 2, (4, 2)), rng.uniform(-2, 2, 2)]
        assert check_function(_composite, params) < 1e-4

    def test_stack_mean_gradient(self):
        rng = np.random.default_rng(0)
        params = [rng.uniform(-2, 2, (2, 3)) for _ in range(3)]
        assert check_function(lambda P: tensor_sum(exp(stack_mean(P))), params) < 1e-4

    @settings(max_examples=20, deadline=None)
    @given(arrays(np.float64, (2, 3), elements=finite), st.floats(-3, 3), st.floats(-3, 3))
    def test_linearity(self, x0, a, b):
        def grads(build):
            tape = Tape()
            (x,) = tape.watch([x0])
            return tape.backward(build(x))[0]

        f = lambda x: tensor_sum(exp(x))
        g = lambda x: mean(mul(x, x))
        combined = grads(lambda x: add(scale(f(x), a), scale(g(x), b)))
        np.testing.assert_allclose(combined, a * grads(f) + b * grads(g), rtol=0, atol=1e-12)

    def test_determinism(self):
        rng = np.random.default_rng(5)
        params = [rng.uniform(-2, 2, (3, 4)), rng.uniform(-2, 2, (4, 2)), rng.uniform(-2, 2, 2)]
        runs = []
        for _ in range(2):
            tape = Tape()
            root = _composite(tape.watch(params))
            runs.append((root.item(), tape.backward(root)))
        assert runs[0][0] == runs[1][0]
        for g0, g1 in zip(runs[0][1], runs[1][1]):
            assert np.array_equal(g0, g1)

    @settings(max_examples=30, deadline=None)
    @given(arrays(np.float64, (3, 4), elements=finite))
    def test_outputs_finite(self, x):
        t = Tensor(x)
        for out in (sigmoid(t), exp(t), log_softmax(t), relu(t)):
            assert np.isfinite(out.data).all()
