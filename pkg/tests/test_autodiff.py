import math

import numpy as np
import pytest

from clarigen import autodiff as ad
from clarigen.errors import ContractError, GraphError, ShapeError

from helpers import check_gradients, analytic_grads

RNG = np.random.default_rng(1234)


def test_matmul_identity():
    a = ad.Tensor(np.eye(2))
    b = ad.Tensor([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(ad.matmul(a, b).data, [[1.0, 2.0], [3.0, 4.0]])


def test_matmul_hand_product():
    out = ad.matmul(ad.Tensor([[1.0, 2.0]]), ad.Tensor([[3.0], [4.0]]))
    assert np.array_equal(out.data, [[11.0]])


def test_matmul_shape_error_names_shapes():
    with pytest.raises(ShapeError) as err:
        ad.matmul(ad.Tensor(np.zeros((2, 3))), ad.Tensor(np.zeros((2, 3))))
    assert "(2, 3)" in str(err.value)


def test_matmul_gradient_of_sum():
    a = ad.parameter(np.eye(2))
    b = ad.Tensor([[2.0, 3.0], [4.0, 5.0]])
    err = check_gradients(lambda: ad.tsum(ad.matmul(a, b)), [a])
    grads = analytic_grads(lambda: ad.tsum(ad.matmul(a, b)), [a])
    assert np.allclose(grads[0], [[5.0, 9.0], [5.0, 9.0]])
    assert err < 1e-4


def test_elementwise_values():
    assert ad.tanh(ad.Tensor(0.0)).item() == 0.0
    assert ad.sigmoid(ad.Tensor(0.0)).item() == 0.5
    x = ad.parameter(np.array(0.3))
    grads = analytic_grads(lambda: ad.tanh(x), [x])
    assert abs(grads[0] - (1 - math.tanh(0.3) ** 2)) < 1e-12
    assert abs(grads[0] - 0.915137) < 1e-6


def test_elementwise_shape_errors():
    with pytest.raises(ShapeError):
        ad.add(ad.Tensor(np.zeros(3)), ad.Tensor(np.zeros(4)))
    with pytest.raises(ShapeError):
        ad.mul(ad.Tensor(np.zeros((2, 2))), ad.Tensor(np.zeros(2)))


def test_scalar_broadcast():
    x = ad.parameter(np.array([1.0, 2.0]))
    s = ad.parameter(np.array(3.0))
    out = None

    def loss():
        return ad.tsum(ad.mul(x, s))

    grads = analytic_grads(loss, [x, s])
    assert np.allclose(grads[0], [3.0, 3.0])
    assert np.allclose(grads[1], 3.0)
    check_gradients(loss, [x, s])


def test_softmax_symmetry_and_values():
    out = ad.softmax_rows(ad.Tensor([[0.0, 0.0, 0.0]]))
    assert np.allclose(out.data, [[1 / 3, 1 / 3, 1 / 3]])
    out = ad.softmax_rows(ad.Tensor([[1000.0, 0.0, 0.0]]))
    assert np.isfinite(out.data).all()
    assert np.allclose(out.data, [[1.0, 0.0, 0.0]])
    out = ad.softmax_rows(ad.Tensor([[1.0, 2.0, 3.0]]))
    assert np.allclose(out.data, [[0.09003057, 0.24472847, 0.66524096]], atol=1e-6)


def test_softmax_rows_sum_to_one_and_shift_invariant():
    x = RNG.normal(size=(6, 9))
    out = ad.softmax_rows(ad.Tensor(x))
    assert np.abs(out.data.sum(axis=1) - 1.0).max() < 1e-6
    shifted = ad.softmax_rows(ad.Tensor(x + 13.5))
    assert np.allclose(out.data, shifted.data, atol=1e-12)


def test_softmax_nan_rejected():
    with pytest.raises(ContractError):
        ad.softmax_rows(ad.Tensor([[np.nan, 0.0]]))


def test_masked_softmax_exact_zeros():
    x = ad.Tensor(RNG.normal(size=(3, 5)))
    mask = np.array([[1, 1, 0, 0, 1], [1, 1, 1, 1, 1], [0, 1, 0, 0, 0]], dtype=float)
    out = ad.masked_softmax_rows(x, mask)
    assert (out.data[mask == 0] == 0.0).all()
    assert np.abs((out.data * mask).sum(axis=1) - 1.0).max() < 1e-6
    with pytest.raises(ContractError):
        ad.masked_softmax_rows(ad.Tensor(np.zeros((1, 3))), np.zeros((1, 3)))


def test_cross_entropy_values():
    # near-one-hot logits: loss approaches 0
    logits = ad.Tensor([[30.0, 0.0, 0.0, 0.0]])
    loss = ad.cross_entropy(logits, [0], [1.0])
    assert loss.item() < 1e-10
    # uniform logits, V=4
    loss = ad.cross_entropy(ad.Tensor(np.zeros((1, 4))), [2], [1.0])
    assert abs(loss.item() - math.log(4)) < 1e-12
    # hand case
    loss = ad.cross_entropy(ad.Tensor([[1.0, 2.0, 3.0]]), [0], [1.0])
    assert abs(loss.item() - 2.40760596) < 1e-6


def test_cross_entropy_out_of_range():
    with pytest.raises(IndexError):
        ad.cross_entropy(ad.Tensor(np.zeros((1, 3))), [3], [1.0])


def test_cross_entropy_all_masked_is_exactly_zero():
    logits = ad.parameter(RNG.normal(size=(4, 5)))
    loss = None

    def f():
        return ad.cross_entropy(logits, [1, 2, 3, 4], [0.0, 0.0, 0.0, 0.0])

    grads = analytic_grads(f, [logits])
    assert f().item() == 0.0
    assert (grads[0] == 0.0).all()


def test_backward_sum_examples():
    w = ad.parameter(np.zeros(3))
    grads = analytic_grads(lambda: ad.tsum(w), [w])
    assert np.array_equal(grads[0], [1.0, 1.0, 1.0])

    w = ad.parameter(np.array([1.0, 2.0, 3.0]))
    grads = analytic_grads(lambda: ad.tsum(ad.mul(w, w)), [w])
    assert np.array_equal(grads[0], [2.0, 4.0, 6.0])


def test_backward_two_layer_tanh_net_matches_fd():
    rng = np.random.default_rng(7)
    w1 = ad.parameter(rng.uniform(-0.5, 0.5, size=(4, 6)))
    b1 = ad.parameter(rng.uniform(-0.5, 0.5, size=6))
    w2 = ad.parameter(rng.uniform(-0.5, 0.5, size=(6, 2)))
    x = ad.Tensor(rng.normal(size=(3, 4)))

    def loss():
        hidden = ad.tanh(ad.add_bias(ad.matmul(x, w1), b1))
        return ad.tsum(ad.tanh(ad.matmul(hidden, w2)))

    err = check_gradients(loss, [w1, b1, w2], h=1e-5, tol=1e-4)
    assert err < 1e-4


def test_backward_requires_scalar():
    w = ad.parameter(np.zeros(3))
    graph = ad.Graph()
    with ad.use_graph(graph):
        out = ad.mul(w, w)
        with pytest.raises(ContractError):
            graph.backward(out)
    graph.reset()


def test_backward_twice_is_an_error():
    w = ad.parameter(np.array([1.0, 2.0]))
    graph = ad.Graph()
    with ad.use_graph(graph):
        loss = ad.tsum(ad.mul(w, w))
        graph.backward(loss)
        with pytest.raises(GraphError):
            graph.backward(loss)


def test_grad_accumulates_across_backwards():
    w = ad.parameter(np.array([1.0, 2.0]))
    graph = ad.Graph()
    with ad.use_graph(graph):
        graph.backward(ad.tsum(w))
        graph.backward(ad.tsum(w))
    assert np.array_equal(w.grad, [2.0, 2.0])


def test_dropout_contract():
    x = ad.Tensor(np.ones(10))
    rng = np.random.default_rng(0)
    assert ad.dropout(x, 0.0, True, rng) is x
    assert ad.dropout(x, 0.9, False, rng) is x
    with pytest.raises(ContractError):
        ad.dropout(x, 1.0, True, rng)


def test_dropout_mean_preserving():
    rng = np.random.default_rng(99)
    x = ad.Tensor(np.ones(100_000))
    out = ad.dropout(x, 0.5, True, rng)
    assert abs(out.data.mean() - 1.0) < 0.02


def test_dropout_gradient_is_scaled_mask():
    x = ad.parameter(np.ones(50))

    def loss():
        rng = np.random.default_rng(5)
        return ad.tsum(ad.dropout(x, 0.5, True, rng))

    grads = analytic_grads(loss, [x])
    assert set(np.unique(grads[0])) <= {0.0, 2.0}
    check_gradients(loss, [x])


def test_embedding_lookup_and_scatter_grad():
    table = ad.parameter(RNG.normal(size=(7, 3)))
    ids = np.array([1, 1, 4])

    def loss():
        return ad.tsum(ad.embedding(table, ids))

    grads = analytic_grads(loss, [table])
    expected = np.zeros((7, 3))
    expected[1] = 2.0
    expected[4] = 1.0
    assert np.array_equal(grads[0], expected)
    with pytest.raises(IndexError):
        ad.embedding(table, np.array([7]))


@pytest.mark.parametrize("op_name", [
    "matmul", "add", "add_scalar", "mul", "scale", "add_bias", "tanh",
    "sigmoid", "softmax", "masked_softmax", "cross_entropy", "bce",
    "concat_cols", "stack_time", "embedding", "attn_scores", "attn_context",
    "reshape", "lstm", "lstm_masked",
])
def test_every_op_matches_finite_differences(op_name):
    rng = np.random.default_rng(hash(op_name) % 2**32)

    def p(*shape):
        return ad.parameter(rng.uniform(-0.7, 0.7, size=shape))

    if op_name == "matmul":
        a, b = p(3, 4), p(4, 2)
        fn = lambda: ad.tsum(ad.tanh(ad.matmul(a, b)))
        params = [a, b]
    elif op_name == "add":
        a, b = p(3, 4), p(3, 4)
        fn = lambda: ad.tsum(ad.tanh(ad.add(a, b)))
        params = [a, b]
    elif op_name == "add_scalar":
        a, b = p(3, 4), p()
        fn = lambda: ad.tsum(ad.tanh(ad.add(a, b)))
        params = [a, b]
    elif op_name == "mul":
        a, b = p(5), p(5)
        fn = lambda: ad.tsum(ad.mul(a, b))
        params = [a, b]
    elif op_name == "scale":
        a = p(4)
        fn = lambda: ad.tsum(ad.scale(a, -2.5))
        params = [a]
    elif op_name == "add_bias":
        a, b = p(3, 4), p(4)
        fn = lambda: ad.tsum(ad.tanh(ad.add_bias(a, b)))
        params = [a, b]
    elif op_name == "tanh":
        a = p(3, 3)
        fn = lambda: ad.tsum(ad.tanh(a))
        params = [a]
    elif op_name == "sigmoid":
        a = p(3, 3)
        fn = lambda: ad.tsum(ad.sigmoid(a))
        params = [a]
    elif op_name == "softmax":
        a = p(3, 5)
        w = ad.Tensor(rng.normal(size=(3, 5)))
        fn = lambda: ad.tsum(ad.mul(ad.softmax_rows(a), w))
        params = [a]
    elif op_name == "masked_softmax":
        a = p(3, 5)
        mask = (rng.random((3, 5)) > 0.3).astype(float)
        mask[:, 0] = 1.0
        w = ad.Tensor(rng.normal(size=(3, 5)))
        fn = lambda: ad.tsum(ad.mul(ad.masked_softmax_rows(a, mask), w))
        params = [a]
    elif op_name == "cross_entropy":
        a = p(4, 6)
        t = rng.integers(0, 6, size=4)
        m = np.array([1.0, 1.0, 0.0, 1.0])
        fn = lambda: ad.cross_entropy(a, t, m)
        params = [a]
    elif op_name == "bce":
        a = p(6)
        y = rng.integers(0, 2, size=6).astype(float)
        fn = lambda: ad.tsum(ad.bce_rows(a, y))
        params = [a]
    elif op_name == "concat_cols":
        a, b = p(3, 2), p(3, 4)
        w = ad.Tensor(rng.normal(size=(3, 6)))
        fn = lambda: ad.tsum(ad.mul(ad.concat_cols(a, b), w))
        params = [a, b]
    elif op_name == "stack_time":
        steps = [p(2, 3) for _ in range(4)]
        w = ad.Tensor(rng.normal(size=(2, 4, 3)))
        fn = lambda: ad.tsum(ad.mul(ad.stack_time(steps), w))
        params = steps
    elif op_name == "embedding":
        table = p(6, 3)
        ids = rng.integers(0, 6, size=5)
        fn = lambda: ad.tsum(ad.tanh(ad.embedding(table, ids)))
        params = [table]
    elif op_name == "attn_scores":
        enc, q = p(2, 4, 3), p(2, 3)
        w = ad.Tensor(rng.normal(size=(2, 4)))
        fn = lambda: ad.tsum(ad.mul(ad.attn_scores(enc, q), w))
        params = [enc, q]
    elif op_name == "attn_context":
        enc, wts = p(2, 4, 3), p(2, 4)
        w = ad.Tensor(rng.normal(size=(2, 3)))
        fn = lambda: ad.tsum(ad.mul(ad.attn_context(enc, wts), w))
        params = [enc, wts]
    elif op_name == "reshape":
        a = p(3, 4)
        w = ad.Tensor(rng.normal(size=12))
        fn = lambda: ad.tsum(ad.mul(ad.reshape(a, (12,)), w))
        params = [a]
    elif op_name in ("lstm", "lstm_masked"):
        B, D, H = 3, 4, 5
        x, h0, c0 = p(B, D), p(B, H), p(B, H)
        wx, wh, b = p(D, 4 * H), p(H, 4 * H), p(4 * H)
        mask = np.array([1.0, 0.0, 1.0]) if op_name == "lstm_masked" else None
        wh2 = ad.Tensor(rng.normal(size=(B, H)))
        wc2 = ad.Tensor(rng.normal(size=(B, H)))

        def fn():
            h, c = ad.lstm_cell(x, h0, c0, wx, wh, b, mask)
            return ad.add(ad.tsum(ad.mul(h, wh2)), ad.tsum(ad.mul(c, wc2)))

        params = [x, h0, c0, wx, wh, b]
    err = check_gradients(fn, params, h=1e-5, tol=1e-4)
    assert err < 1e-4
