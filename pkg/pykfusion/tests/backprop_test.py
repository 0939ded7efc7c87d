import numpy as np
import pytest

from pykfusion.model.backprop import backward
from pykfusion.model.network import Network, DenseLayer, ArchitectureError, loss, predict_proba
from pykfusion.tests.helpers import random_architecture, random_network, random_inputs

STEP = 1e-5


def numeric_gradient(net, fn):
    """
    Central differences of fn(net) w.r.t. every weight and bias, in ParamStack order.
    """
    work = net.copy()
    grads = []
    for layer in work.layers:
        for arr in (layer.weights, layer.bias):
            g = np.zeros_like(arr)
            for idx in np.ndindex(arr.shape):
                old = arr[idx]
                arr[idx] = old + STEP
                up = fn(work)
                arr[idx] = old - STEP
                down = fn(work)
                arr[idx] = old
                g[idx] = (up - down) / (2 * STEP)
            grads.append(g)
    return np.concatenate([g.ravel() for g in grads])


def relative_error(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-300)


RANDOM_CASES = range(24)


@pytest.mark.parametrize('seed', RANDOM_CASES)
def test_loss_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    widths, activations = random_architecture(rng)
    loss_kind = 'square' if activations[-1] == 'identity' else str(rng.choice(['cross_entropy', 'square']))

    net = random_network(widths, activations, seed=seed)
    X = random_inputs(5, widths[0], seed=seed + 100)
    T = np.eye(widths[-1])[rng.integers(widths[-1], size=5)]

    grad = backward(net, X, T, loss_kind).flat()
    fd = numeric_gradient(net, lambda n: loss(predict_proba(n, X), T, loss_kind))

    assert relative_error(grad, fd) <= 1e-4


@pytest.mark.parametrize('seed', RANDOM_CASES)
def test_per_output_gradients_match_finite_differences(seed):
    widths, activations = random_architecture(np.random.default_rng(seed))
    net = random_network(widths, activations, seed=seed)
    X = random_inputs(4, widths[0], seed=seed + 100)

    grads = backward(net, X, per_output=True)
    assert len(grads) == widths[-1]

    for unit, g in enumerate(grads):
        fd = numeric_gradient(net, lambda n: predict_proba(n, X)[:, unit].sum())
        assert relative_error(g.flat(), fd) <= 1e-4


def test_vector_and_batch_agree():
    net = random_network([3, 4, 2], ['relu', 'softmax'], seed=1)
    x = random_inputs(1, 3, seed=2)[0]
    t = np.array([1., 0.])

    single = backward(net, x, t, 'cross_entropy').flat()
    batch = backward(net, x[None, :], t[None, :], 'cross_entropy').flat()

    assert np.array_equal(single, batch)


def test_zero_gradient_at_target():
    net = Network((DenseLayer(np.zeros((2, 3)), np.array([0., 1.]), 'identity'),), (0, 1))
    grad = backward(net, np.array([0.2, 0.5, 0.7]), np.array([0., 1.]), 'square')

    assert np.all(grad.flat() == 0.)


def test_linear_unit_bias_gradient():
    # y = 0.5 * 0.8 + 0.2 = 0.6, t = 1
    net = Network((DenseLayer(np.array([[0.5]]), np.array([0.2]), 'identity'),), (0,))
    grad = backward(net, np.array([0.8]), np.array([1.]), 'square')

    assert grad.layers[0].bias[0] == pytest.approx(0.6 - 1., abs=1e-15)
    assert grad.layers[0].weights[0, 0] == pytest.approx((0.6 - 1.) * 0.8, abs=1e-15)


def test_relu_derivative_at_zero_is_zero():
    net = Network((DenseLayer(np.array([[1.]]), np.array([-0.5]), 'relu'),
                   DenseLayer(np.array([[1.]]), np.zeros(1), 'identity')), (0,))
    grad = backward(net, np.array([0.5]), np.array([1.]), 'square')

    assert grad.layers[0].weights[0, 0] == 0.
    assert grad.layers[0].bias[0] == 0.


def test_backward_rejects_bad_shapes():
    net = random_network([3, 4, 2], ['relu', 'softmax'])
    with pytest.raises(ArchitectureError):
        backward(net, np.zeros(5), np.array([1., 0.]), 'square')
    with pytest.raises(ArchitectureError):
        backward(net, np.zeros(3), np.array([1., 0., 0.]), 'square')
