import numpy as np
import pytest

from clarigen import autodiff as ad
from clarigen.errors import ContractError
from clarigen.optim import Adam


def test_zero_gradient_leaves_parameters_unchanged():
    w = ad.parameter(np.array([1.0, -2.0, 3.0]))
    opt = Adam({"w": w}, lr=0.1)
    before = w.data.copy()
    opt.step()
    assert np.array_equal(w.data, before)


def test_first_step_moves_by_learning_rate():
    w = ad.parameter(np.array(0.0))
    w.grad[...] = 1.0
    opt = Adam({"w": w}, lr=1e-3)
    opt.step()
    # Adam first step: m_hat = v_hat = 1, update = lr / (1 + eps)
    assert abs(w.data + 1e-3) < 1e-9
    assert w.grad == 0.0  # grads zeroed after the step


def test_quadratic_converges():
    w = ad.parameter(np.array(0.0))
    opt = Adam({"w": w}, lr=0.1)
    for _ in range(100):
        graph = ad.Graph()
        with ad.use_graph(graph):
            err = ad.add(w, ad.Tensor(np.array(-3.0)))
            loss = ad.mul(err, err)
            graph.backward(loss)
        opt.step()
    assert abs(w.data - 3.0) < 0.5


def test_global_norm_clipping():
    w = ad.parameter(np.zeros(4))
    w.grad[...] = 100.0  # norm 200 > 5
    opt = Adam({"w": w}, lr=1.0, clip_norm=5.0)
    assert abs(opt.grad_norm() - 200.0) < 1e-9
    opt.step()
    # after clipping all grad components are equal, so the Adam direction is
    # the same sign everywhere with unit magnitude
    assert np.allclose(np.abs(w.data), 1.0, atol=1e-6)


def test_missing_grad_is_contract_error():
    w = ad.Tensor(np.zeros(3))
    w.requires_grad = True  # grad stays None
    opt = Adam({"w": w})
    with pytest.raises(ContractError):
        opt.step()


def test_separate_states_do_not_interact():
    w1 = ad.parameter(np.array(0.0))
    w2 = ad.parameter(np.array(0.0))
    opt1 = Adam({"w": w1}, lr=0.1)
    opt2 = Adam({"w": w2}, lr=0.1)
    w1.grad[...] = 1.0
    opt1.step()
    assert opt2.t == 0
    assert w2.data == 0.0
