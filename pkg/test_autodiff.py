"""Tests for the tape autodiff engine, layers and Adam"""

import numpy as np
import pytest

from app.autodiff import Adam, AdamState, Conv2d, Linear, Module, Parameter, Tensor, adam_step, no_grad
from app.autodiff import functional as F
from app.autodiff.gradcheck import gradcheck
from app.autodiff.tensor import transpose
from app.errors import NumericalError, ShapeError

TOLERANCE = 1e-4


def test_forward_examples():
    x = Tensor(np.arange(6.0).reshape(2, 3))
    assert F.mean_squared_error(x, x).item() == 0.0

    product = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]])) @ Tensor(np.array([[1.0], [1.0]]))
    assert np.array_equal(product.data, [[3.0], [7.0]])

    image = np.random.default_rng(0).standard_normal((2, 3, 5, 5))
    identity = np.zeros((3, 3, 1, 1))
    identity[np.arange(3), np.arange(3)] = 1.0
    out = F.conv2d(Tensor(image), Tensor(identity))
    assert np.allclose(out.data, image)
    print("✓ Forward ops match hand results")


def test_backward_examples():
    x = Tensor(np.array([2.0]), requires_grad=True)
    F.mean_squared_error(x, np.zeros(1)).backward()
    assert np.allclose(x.grad, [4.0])

    y = Tensor(np.array([-1.0, 3.0]), requires_grad=True)
    F.relu(y).sum().backward()
    assert np.array_equal(y.grad, [0.0, 1.0])


def test_gradients_accumulate_until_reset():
    x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    loss = (x * x).sum()
    loss.backward()
    loss.backward()
    assert np.allclose(x.grad, 2 * 2 * x.data)
    x.zero_grad()
    assert x.grad is None


def test_backward_needs_scalar():
    x = Tensor(np.ones((2, 2)), requires_grad=True)
    with pytest.raises(ShapeError):
        (x * 2.0).backward()


def test_non_finite_gradient_is_reported():
    x = Tensor(np.array([1.0]), requires_grad=True)
    blowup = Tensor.from_op(x.data.copy(), (x,), lambda grad: (grad * np.inf,), "blowup")
    with pytest.raises(NumericalError, match="gradient"):
        blowup.sum().backward()


@pytest.mark.parametrize(
    "forward, op",
    [
        (lambda x: x * np.inf, "mul"),
        (lambda x: x + np.nan, "add"),
        (lambda x: F.mean_squared_error(x * 1e200, np.zeros(2)), "mse"),
    ],
)
def test_non_finite_forward_names_the_op(forward, op):
    x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    with pytest.raises(NumericalError, match=f"from {op}"):
        forward(x)
    with no_grad(), pytest.raises(NumericalError, match=f"from {op}"):
        forward(x)


def test_no_grad_builds_no_graph():
    x = Tensor(np.ones(3), requires_grad=True)
    with no_grad():
        y = (x * 3.0).sum()
    assert not y.requires_grad


def test_shape_mismatch_is_a_shape_error():
    with pytest.raises(ShapeError):
        Tensor(np.ones((2, 3))) @ Tensor(np.ones((2, 3)))
    with pytest.raises(ShapeError):
        Tensor(np.ones((2, 3))) + Tensor(np.ones((4, 5)))


@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_elementwise_and_reduction_gradients(seed):
    rng = np.random.default_rng(seed)
    shape = tuple(rng.integers(1, 4, size=2))
    a = rng.standard_normal(shape)
    b = rng.standard_normal(shape[-1:])

    def fn(inputs):
        x, y = inputs
        return ((x * y + x) - y * 0.5).mean(axis=0).sum() + F.sigmoid(x).sum() + F.silu(x).mean()

    assert gradcheck(fn, [a, b]) < TOLERANCE


@pytest.mark.parametrize("seed", [0, 1])
def test_image_op_gradients(seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((2, 4, 4, 4))
    weight = rng.standard_normal((3, 4, 3, 3))
    bias = rng.standard_normal(3)
    gamma = rng.standard_normal(4)
    beta = rng.standard_normal(4)

    def conv(inputs):
        out = F.conv2d(inputs[0], inputs[1], inputs[2], padding=1)
        return F.mean_squared_error(out, np.ones((2, 3, 4, 4)))

    def norm(inputs):
        out = F.group_norm(inputs[0], inputs[1], inputs[2], num_groups=2)
        return (out * out).mean() + out.sum() * 0.1

    def resample(inputs):
        pooled = F.avg_pool2d(inputs[0])
        return (F.upsample_nearest2d(pooled) * inputs[0]).sum()

    def strided(inputs):
        return F.conv2d(inputs[0], inputs[1], stride=2, padding=1).sum()

    assert gradcheck(conv, [x, weight, bias]) < TOLERANCE
    assert gradcheck(norm, [x, gamma, beta]) < TOLERANCE
    assert gradcheck(resample, [x]) < TOLERANCE
    assert gradcheck(strided, [x, weight]) < TOLERANCE


def test_structural_op_gradients():
    rng = np.random.default_rng(7)
    a = rng.standard_normal((2, 3))
    b = rng.standard_normal((2, 2))

    def fn(inputs):
        joined = F.concat([inputs[0], inputs[1]], axis=1)
        moved = transpose(joined.reshape(2, 5, 1), (2, 0, 1))
        return (moved * moved).sum()

    assert gradcheck(fn, [a, b]) < TOLERANCE


def test_loss_gradients():
    rng = np.random.default_rng(3)
    logits = rng.standard_normal((4, 3))
    targets = rng.integers(0, 2, size=(4, 3)).astype(float)
    labels = np.array([0, 2, 1, 2])

    assert gradcheck(lambda t: F.binary_cross_entropy_with_logits(t[0], targets), [logits]) < TOLERANCE
    assert gradcheck(lambda t: F.cross_entropy(t[0], labels), [logits]) < TOLERANCE


class TwoLayer(Module):
    def __init__(self, rng):
        self.hidden = Linear(3, 5, rng)
        self.out = Linear(5, 2, rng)

    def forward(self, x):
        return self.out(F.silu(self.hidden(x)))


def test_two_layer_network_gradient():
    rng = np.random.default_rng(11)
    network = TwoLayer(rng)
    x = rng.standard_normal((4, 3))
    target = rng.standard_normal((4, 2))
    arrays = [p.data.copy() for p in network.parameters()]

    def fn(inputs):
        hidden = F.silu(F.linear(Tensor(x), inputs[0], inputs[1]))
        return F.mean_squared_error(F.linear(hidden, inputs[2], inputs[3]), target)

    assert gradcheck(fn, arrays) < TOLERANCE
    print("✓ Two-layer network matches finite differences")


def test_module_parameters_and_state_dict():
    rng = np.random.default_rng(0)
    conv = Conv2d(2, 4, 3, rng)
    names = [name for name, _ in conv.named_parameters()]
    assert names == ["weight", "bias"]
    assert conv.num_parameters() == 4 * 2 * 9 + 4

    copy = Conv2d(2, 4, 3, np.random.default_rng(1))
    copy.load_state_dict(conv.state_dict())
    assert np.array_equal(copy.weight.data, conv.weight.data)


def test_adam_null_update():
    params = [np.array([1.0, -2.0])]
    state = AdamState.zeros_like(params)
    updated, new_state = adam_step(params, [np.zeros(2)], state, 0.1)
    assert np.array_equal(updated[0], params[0])
    assert new_state.step == 1


def test_adam_descends():
    updated, _ = adam_step([np.array([1.0])], [np.array([2.0])], AdamState([], [], 0), 0.1)
    assert updated[0][0] < 1.0


def test_adam_minimises_quadratic():
    w = Parameter(np.array([1.5, -2.0]))
    optimizer = Adam([w], learning_rate=0.05)
    scales = np.array([1.0, 3.0])
    for _ in range(200):
        optimizer.zero_grad()
        loss = (w * w * scales).sum()
        loss.backward()
        optimizer.step()
    assert float(np.sum(scales * w.data**2)) < 1e-3
    print(f"✓ Adam reaches loss {float(np.sum(scales * w.data ** 2)):.2e}")


def test_adam_does_not_modify_inputs():
    params = [np.array([1.0])]
    grads = [np.array([0.5])]
    adam_step(params, grads, AdamState([], [], 0), 0.1)
    assert params[0][0] == 1.0


def test_adam_state_round_trip():
    w = Parameter(np.array([1.0, 2.0]))
    optimizer = Adam([w])
    (w * w).sum().backward()
    optimizer.step()
    other = Adam([Parameter(np.array([1.0, 2.0]))])
    other.load_state_dict(optimizer.state_dict())
    assert other.state.step == 1
    assert np.array_equal(other.state.first_moments[0], optimizer.state.first_moments[0])


@pytest.mark.parametrize("key, moment", [("m/1", "first moment 1"), ("v/1", "second moment 1")])
def test_adam_state_shapes_are_checked(key, moment):
    optimizer = Adam([Parameter(np.zeros(2)), Parameter(np.zeros((2, 3)))])
    state = optimizer.state_dict()
    state[key] = np.zeros(3)
    with pytest.raises(ShapeError, match=moment):
        Adam([Parameter(np.zeros(2)), Parameter(np.zeros((2, 3)))]).load_state_dict(state)


def test_adam_step_rejects_mismatched_second_moment():
    state = AdamState([np.zeros(2)], [np.zeros(3)], 1)
    with pytest.raises(ShapeError, match="moments"):
        adam_step([np.zeros(2)], [np.ones(2)], state, 0.1)
