"""Autodiff engine tests: op definitions and finite-difference gradients.

Gradient checks run in float64 with central differences at h = 1e-4 and
require relative error < 1e-3, matching the acceptance criterion.
"""

import numpy as np
import pytest

from respeak.errors import ContractError, ShapeError
from respeak.tensor import (
    Tensor,
    abs_,
    add,
    backward,
    conv2d,
    conv_transpose2d,
    instance_norm,
    leaky_relu,
    log,
    matmul,
    mean,
    mul,
    no_grad,
    relu,
    sigmoid,
    sum_,
    tanh,
)

FD_H = 1e-4
FD_TOL = 1e-3


def fd_gradient_check(build_loss, tensors, rng, n_coords=8):
    """Central finite differences against analytic gradients, float64."""
    loss = build_loss()
    backward(loss)
    for t in tensors:
        assert t.grad is not None, "missing gradient"
        flat = t.data.ravel()
        gflat = np.asarray(t.grad).ravel()
        coords = rng.choice(flat.size, size=min(n_coords, flat.size), replace=False)
        for i in coords:
            orig = flat[i]
            flat[i] = orig + FD_H
            up = build_loss().item()
            flat[i] = orig - FD_H
            down = build_loss().item()
            flat[i] = orig
            fd = (up - down) / (2 * FD_H)
            scale = max(abs(fd), abs(gflat[i]), 1e-8)
            assert abs(fd - gflat[i]) / scale < FD_TOL, (
                f"FD mismatch at {i}: analytic {gflat[i]:.6e} vs fd {fd:.6e}"
            )
        t.grad = None


def t64(rng, shape, scale=1.0):
    return Tensor(rng.normal(size=shape) * scale, requires_grad=True, dtype=np.float64)


def test_forward_values():
    x = Tensor([[0.0, -2.0], [1.0, 3.0]])
    assert np.allclose(tanh(x).data[0, 0], 0.0)
    assert leaky_relu(Tensor([-2.0]), 0.2).data[0] == pytest.approx(-0.4)
    assert relu(Tensor([-1.0, 2.0])).data.tolist() == [0.0, 2.0]
    assert sigmoid(Tensor([0.0])).data[0] == pytest.approx(0.5)
    assert abs_(Tensor([-3.0, 2.0])).data.tolist() == [3.0, 2.0]
    assert mean(Tensor([1.0, 2.0, 3.0])).item() == pytest.approx(2.0)
    assert sum_(Tensor([1.0, 2.0, 3.0])).item() == pytest.approx(6.0)


def test_conv2d_counting_example():
    # all-ones 3x3 input, all-ones 3x3 kernel, stride 1, zero pad 1:
    # the center output counts the full 9-cell neighborhood
    x = Tensor(np.ones((1, 3, 3, 1), dtype=np.float32))
    w = Tensor(np.ones((3, 3, 1, 1), dtype=np.float32))
    y = conv2d(x, w, stride=1, padding=1)
    assert y.shape == (1, 3, 3, 1)
    assert y.data[0, 1, 1, 0] == 9.0
    assert y.data[0, 0, 0, 0] == 4.0  # corner sees a 2x2 patch


def test_instance_norm_standardizes():
    rng = np.random.default_rng(0)
    x = Tensor(rng.normal(2.0, 3.0, (2, 8, 8, 4)).astype(np.float32))
    out = instance_norm(x, Tensor(np.ones(4, np.float32)), Tensor(np.zeros(4, np.float32)))
    m = out.data.mean(axis=(1, 2))
    v = out.data.var(axis=(1, 2))
    assert np.max(np.abs(m)) < 1e-5
    assert np.max(np.abs(v - 1.0)) < 1e-3


def test_backward_mean_and_square():
    x = Tensor(np.arange(6, dtype=np.float32), requires_grad=True)
    backward(mean(x))
    assert np.allclose(x.grad, np.full(6, 1 / 6))

    x = Tensor([1.0, 2.0], requires_grad=True)
    backward(sum_(mul(x, x)))
    assert np.allclose(x.grad, [2.0, 4.0])


def test_backward_contract_errors():
    x = Tensor(np.ones((2, 2)), requires_grad=True)
    with pytest.raises(ContractError):
        backward(mul(x, x))  # non-scalar
    with pytest.raises(ContractError):
        backward(mean(Tensor(np.ones(3))))  # no graph


def test_gradient_accumulates_on_reuse():
    x = Tensor([3.0], requires_grad=True)
    y = add(mul(x, x), mul(x, x))  # 2x^2
    backward(sum_(y))
    assert np.allclose(x.grad, [12.0])


def test_shape_errors_carry_both_shapes():
    a = Tensor(np.ones((2, 3)))
    b = Tensor(np.ones((4, 5)))
    with pytest.raises(ShapeError) as err:
        matmul(a, b)
    assert "(2, 3)" in str(err.value) and "(4, 5)" in str(err.value)
    with pytest.raises(ShapeError):
        conv2d(Tensor(np.ones((1, 4, 4, 2))), Tensor(np.ones((3, 3, 5, 1))))


def test_no_grad_blocks_graph():
    x = Tensor(np.ones(3), requires_grad=True)
    with no_grad():
        y = mul(x, x)
    assert not y.requires_grad
    z = x.detach()
    assert not z.requires_grad and z.data is x.data


def test_elementwise_op_gradients():
    rng = np.random.default_rng(1)
    x = t64(rng, (3, 4))
    y = t64(rng, (3, 4))

    fd_gradient_check(lambda: mean(mul(add(x, y), x)), [x, y], rng)
    fd_gradient_check(lambda: mean(mul(tanh(x), sigmoid(y))), [x, y], rng)
    fd_gradient_check(lambda: mean(mul(leaky_relu(x, 0.2), leaky_relu(y, 0.2))), [x, y], rng)
    fd_gradient_check(lambda: mean(abs_(add(x, y))), [x, y], rng)

    p = Tensor(rng.uniform(0.5, 2.0, (3, 4)), requires_grad=True, dtype=np.float64)
    fd_gradient_check(lambda: mean(log(p)), [p], rng)

    a = t64(rng, (3, 5))
    b = t64(rng, (5, 2))
    fd_gradient_check(lambda: mean(mul(matmul(a, b), matmul(a, b))), [a, b], rng)


def test_relu_gradient_off_kink():
    rng = np.random.default_rng(2)
    x = Tensor(rng.normal(size=(4, 4)) + np.sign(rng.normal(size=(4, 4))) * 0.5,
               requires_grad=True, dtype=np.float64)
    fd_gradient_check(lambda: mean(mul(relu(x), relu(x))), [x], rng)


def test_broadcast_add_mul_gradients():
    rng = np.random.default_rng(3)
    x = t64(rng, (2, 3, 4))
    bias = t64(rng, (4,))
    fd_gradient_check(lambda: mean(mul(add(x, bias), add(x, bias))), [x, bias], rng)


def test_conv2d_gradients_all_modes():
    rng = np.random.default_rng(4)
    for stride, pad, mode in [(1, 1, "zero"), (2, 1, "zero"), (1, 3, "reflect"), (1, 1, "reflect")]:
        x = t64(rng, (2, 8, 8, 3))
        w = t64(rng, (3, 3, 3, 4), scale=0.3)
        b = t64(rng, (4,), scale=0.1)
        fd_gradient_check(
            lambda: mean(mul(conv2d(x, w, b, stride, pad, mode),
                             conv2d(x, w, b, stride, pad, mode))),
            [x, w, b], rng, n_coords=5,
        )


def test_conv2d_tap_route_gradients():
    # wide kernel, single output channel: exercises the tap evaluation route
    rng = np.random.default_rng(5)
    x = t64(rng, (1, 10, 10, 6))
    w = t64(rng, (7, 7, 6, 1), scale=0.2)
    b = t64(rng, (1,), scale=0.1)
    fd_gradient_check(
        lambda: mean(mul(conv2d(x, w, b, 1, 3, "reflect"), conv2d(x, w, b, 1, 3, "reflect"))),
        [x, w, b], rng, n_coords=6,
    )


def test_conv_transpose2d_gradients():
    rng = np.random.default_rng(6)
    x = t64(rng, (2, 5, 5, 4))
    w = t64(rng, (4, 3, 3, 3), scale=0.3)
    b = t64(rng, (3,), scale=0.1)
    y = conv_transpose2d(x, w, b, stride=2, padding=1, output_padding=1)
    assert y.shape == (2, 10, 10, 3)
    fd_gradient_check(
        lambda: mean(mul(conv_transpose2d(x, w, b, 2, 1, 1),
                         conv_transpose2d(x, w, b, 2, 1, 1))),
        [x, w, b], rng, n_coords=5,
    )


def test_instance_norm_gradients():
    rng = np.random.default_rng(7)
    x = t64(rng, (2, 6, 5, 3))
    scale = Tensor(rng.uniform(0.5, 1.5, 3), requires_grad=True, dtype=np.float64)
    offset = t64(rng, (3,), scale=0.2)
    fd_gradient_check(
        lambda: mean(mul(instance_norm(x, scale, offset), instance_norm(x, scale, offset))),
        [x, scale, offset], rng,
    )


def test_determinism_same_inputs():
    rng = np.random.default_rng(8)
    x_data = rng.normal(size=(2, 8, 8, 3)).astype(np.float32)
    w_data = (rng.normal(size=(3, 3, 3, 4)) * 0.1).astype(np.float32)

    def run():
        x = Tensor(x_data, requires_grad=True)
        w = Tensor(w_data, requires_grad=True)
        loss = mean(mul(conv2d(x, w, stride=1, padding=1), conv2d(x, w, stride=1, padding=1)))
        backward(loss)
        return loss.item(), x.grad.copy(), w.grad.copy()

    l1, gx1, gw1 = run()
    l2, gx2, gw2 = run()
    assert l1 == l2
    assert np.array_equal(gx1, gx2)
    assert np.array_equal(gw1, gw2)
