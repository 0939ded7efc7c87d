import numpy as np
import pytest

from pykfusion.model.network import (init_network, forward, predict_proba, loss, one_hot, DenseLayer, Network,
                                     ArchitectureError, ParamStack)
from pykfusion.tests.helpers import random_network, random_inputs


def test_init_shapes():
    net = init_network([2, 3, 2], ['relu', 'softmax'], seed=0)

    assert net.layers[0].weights.shape == (3, 2)
    assert net.layers[1].weights.shape == (2, 3)
    assert all(np.all(l.bias == 0) for l in net.layers)
    assert net.class_labels == (0, 1)
    assert net.hidden_widths == [3]


def test_init_is_deterministic():
    a = init_network([5, 7, 3], ['relu', 'softmax'], seed=42)
    b = init_network([5, 7, 3], ['relu', 'softmax'], seed=42)

    for la, lb in zip(a.layers, b.layers):
        assert la.weights.tobytes() == lb.weights.tobytes()
        assert la.bias.tobytes() == lb.bias.tobytes()


def test_init_weight_distribution():
    net = init_network([1000, 1000], ['identity'], seed=7)
    w = net.layers[0].weights

    assert w.size == 10 ** 6
    assert abs(np.std(w) - 0.05) <= 0.001
    assert abs(np.mean(w)) <= 3 * 0.05 / np.sqrt(w.size)


@pytest.mark.parametrize('widths, activations', [
    ([2, 0, 2], ['relu', 'softmax']),
    ([2, 3, 2], ['softmax', 'softmax']),
    ([2, 3, 2], ['relu']),
    ([2, 3, 2], ['tanh', 'softmax']),
])
def test_init_rejects_invalid_architectures(widths, activations):
    with pytest.raises(ArchitectureError):
        init_network(widths, activations)


def test_network_invariants():
    layer = DenseLayer(np.zeros((3, 2)), np.zeros(3), 'relu')

    with pytest.raises(ArchitectureError):
        Network((layer, DenseLayer(np.zeros((2, 4)), np.zeros(2), 'softmax')), (0, 1))
    with pytest.raises(ArchitectureError):
        Network((layer, DenseLayer(np.zeros((2, 3)), np.zeros(2), 'softmax')), (0, 1, 2))
    with pytest.raises(ArchitectureError):
        Network((layer, DenseLayer(np.zeros((2, 3)), np.zeros(2), 'softmax')), (1, 1))
    with pytest.raises(ArchitectureError):
        DenseLayer(np.array([[np.nan]]), np.zeros(1))


def test_zero_network_outputs():
    x = np.array([0.3, 0.9, 0.1])

    sig = Network((DenseLayer(np.zeros((4, 3)), np.zeros(4), 'sigmoid'),), range(4))
    soft = Network((DenseLayer(np.zeros((5, 3)), np.zeros(5), 'softmax'),), range(5))

    assert np.all(forward(sig, x).activations[-1] == 0.5)
    assert np.allclose(forward(soft, x).activations[-1], 0.2, rtol=0, atol=1e-15)


def test_single_relu_unit():
    net = Network((DenseLayer(np.array([[1., -1.]]), np.zeros(1), 'relu'),), (0,))
    fp = forward(net, np.array([2., 1.]))

    assert fp.activations[-1][0] == 1.
    assert len(fp.activations) == 2


def test_forward_rejects_wrong_dimension():
    net = init_network([3, 4, 2], ['relu', 'softmax'], seed=0)
    with pytest.raises(ArchitectureError):
        forward(net, np.zeros(4))
    with pytest.raises(ArchitectureError):
        predict_proba(net, np.zeros((5, 2)))


def test_softmax_sums_to_one():
    net = random_network([6, 5, 4], ['relu', 'softmax'], seed=1, std=20.)
    out = predict_proba(net, random_inputs(200, 6))

    assert np.max(np.abs(out.sum(axis=1) - 1.)) <= 1e-12


def test_loss_examples():
    t = np.array([0., 1.])

    assert loss(np.array([1., 0.]), t, 'square') == 1.
    assert loss(t, t, 'square') == 0.
    assert loss(t, t, 'cross_entropy') == 0.
    assert loss(np.full(5, 0.2), np.eye(5)[2], 'cross_entropy') == pytest.approx(np.log(5), abs=1e-12)


def test_loss_floor_and_errors():
    assert np.isfinite(loss(np.array([0., 1.]), np.array([1., 0.]), 'cross_entropy'))

    with pytest.raises(ArchitectureError):
        loss(np.zeros(2), np.zeros(3), 'square')
    with pytest.raises(ValueError):
        loss(np.zeros(2), np.zeros(2), 'hinge')


def test_one_hot_uses_label_order():
    t = one_hot([7, 3, 7], (3, 7))
    assert np.array_equal(t, [[0, 1], [1, 0], [0, 1]])

    with pytest.raises(ArchitectureError):
        one_hot([5], (3, 7))


def test_param_stack_matches_network():
    net = init_network([3, 4, 2], ['relu', 'softmax'], seed=0)
    zeros = ParamStack.zeros_like(net)

    assert zeros.matches(net)
    assert zeros.flat().size == 3 * 4 + 4 + 4 * 2 + 2
    assert not ParamStack(zeros.layers[:1]).matches(net)
