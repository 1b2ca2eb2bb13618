"""Adam optimizer behavior tests."""

import numpy as np
import pytest

from respeak.errors import ContractError
from respeak.optim import Adam
from respeak.tensor import Tensor


def test_zero_gradient_leaves_parameters_unchanged():
    p = Tensor(np.array([1.0, -2.0], dtype=np.float32), requires_grad=True)
    opt = Adam({"p": p}, lr=0.1)
    before = p.data.copy()
    p.grad = np.zeros(2, dtype=np.float32)
    opt.step()
    assert np.array_equal(p.data, before)
    assert p.grad is None  # grads zeroed after the step


def test_missing_gradient_is_contract_error():
    p = Tensor(np.zeros(3, dtype=np.float32), requires_grad=True)
    opt = Adam({"p": p})
    with pytest.raises(ContractError):
        opt.step()


def test_constant_gradient_update_magnitude_approaches_lr():
    # with bias correction, a constant gradient g gives update lr*g/(|g|+eps)
    # at every step, so each step moves by ~lr
    lr = 0.01
    p = Tensor(np.array([5.0], dtype=np.float32), requires_grad=True)
    opt = Adam({"p": p}, lr=lr, betas=(0.5, 0.999))
    prev = float(p.data[0])
    for _ in range(20):
        p.grad = np.array([2.5], dtype=np.float32)
        opt.step()
        delta = prev - float(p.data[0])
        assert delta == pytest.approx(lr, rel=0.01)
        prev = float(p.data[0])


def test_quadratic_descent_oracle():
    # on f(theta) = theta^2 from theta=1 with lr 0.1: theta falls strictly
    # until it reaches ~0, then stays within 1e-3 of it (oracle-derived)
    p = Tensor(np.array([1.0], dtype=np.float64), requires_grad=True, dtype=np.float64)
    opt = Adam({"p": p}, lr=0.1, betas=(0.5, 0.999))
    history = [1.0]
    for _ in range(100):
        p.grad = 2.0 * p.data
        opt.step()
        history.append(float(p.data[0]))
    hist = np.array(history)
    crossing = int(np.argmax(hist < 1e-3))
    assert crossing > 5  # takes ~10 steps of size ~lr to descend from 1.0
    assert np.all(np.diff(hist[: crossing + 1]) < 0)  # strictly decreasing on the way down
    assert abs(hist[-1]) < 1e-3
    assert np.min(hist) > -0.05  # never blows past zero


def test_moments_shaped_like_parameters():
    p1 = Tensor(np.zeros((2, 3), dtype=np.float32), requires_grad=True)
    p2 = Tensor(np.zeros(5, dtype=np.float32), requires_grad=True)
    opt = Adam({"a": p1, "b": p2})
    assert opt.m["a"].shape == (2, 3)
    assert opt.v["b"].shape == (5,)
    assert opt.step_count == 0


def test_invalid_betas_rejected():
    p = Tensor(np.zeros(1, dtype=np.float32), requires_grad=True)
    with pytest.raises(ContractError):
        Adam({"p": p}, betas=(1.5, 0.9))
