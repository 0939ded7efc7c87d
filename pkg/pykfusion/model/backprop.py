import numpy as np

from pykfusion.model.network import (Network, ParamStack, LayerParams, ArchitectureError, propagate, EPS_LOG,
                                     _as_batch)


def activation_backward(layer, z, a, grad):
    """
    Map the gradient w.r.t. a layer's output `a` to the gradient w.r.t. its pre-activation `z` (row-wise batch).
    The ReLU derivative at exactly zero is taken as zero.
    """
    kind = layer.activation
    if kind == 'relu':
        return grad * (z > 0)
    if kind == 'sigmoid':
        return grad * a * (1. - a)
    if kind == 'softmax':
        return a * (grad - np.sum(grad * a, axis=1, keepdims=True))
    return grad


def output_loss_delta(net, fp, T, loss_kind):
    """
    Gradient of the (summed) loss w.r.t. the output layer pre-activations.
    """
    y, z = fp.activations[-1], fp.pre_activations[-1]

    if loss_kind == 'square':
        return activation_backward(net.head, z, y, y - T)

    if loss_kind == 'cross_entropy':
        if net.head.activation == 'softmax':
            # d/dz of -sum t ln softmax(z) for one-hot t
            return y - T
        above = y > EPS_LOG
        grad = np.where(above, -T / np.where(above, y, 1.), 0.)
        return activation_backward(net.head, z, y, grad)

    raise ValueError('Unknown loss kind {0!r}'.format(loss_kind))


def backprop_deltas(net, fp, delta_out):
    """
    Given the gradient at the output pre-activations, return the pre-activation gradients of every layer.
    """
    deltas = [None] * len(net.layers)
    deltas[-1] = delta_out

    for l in range(len(net.layers) - 1, 0, -1):
        grad = deltas[l] @ net.layers[l].weights
        deltas[l - 1] = activation_backward(net.layers[l - 1], fp.pre_activations[l - 1], fp.activations[l], grad)

    return deltas


def deltas_to_params(fp, deltas):
    return ParamStack(tuple(LayerParams(d.T @ a, d.sum(axis=0)) for d, a in zip(deltas, fp.activations[:-1])))


def squared_deltas_to_params(fp, deltas):
    """
    Sum over samples of the element-wise squared per-sample gradients (delta_p outer a_p)^2 = delta_p^2 outer a_p^2.
    """
    return ParamStack(tuple(LayerParams((d ** 2).T @ (a ** 2), np.sum(d ** 2, axis=0))
                            for d, a in zip(deltas, fp.activations[:-1])))


def output_unit_deltas(net, fp, unit):
    """
    Pre-activation gradients of every layer for the derivative of output unit `unit` (dy_unit / dtheta).
    """
    y = fp.activations[-1]
    seed = np.zeros_like(y)
    seed[:, unit] = 1.
    delta_out = activation_backward(net.head, fp.pre_activations[-1], y, seed)
    return backprop_deltas(net, fp, delta_out)


def backward(net: Network, x, target=None, loss_kind=None, per_output=False):
    """
    Exact gradients by backpropagation. Biases are treated as weights with a constant input of 1.

    Parameters
    ----------
    net: Network
    x: numpy.ndarray
        A feature vector or a batch of them (rows).
    target: numpy.ndarray
        One-hot target(s) with the shape of the network output. Required unless per_output is True.
    loss_kind: str
        'square' or 'cross_entropy'.
    per_output: bool (default False)
        If true return dy_n/dtheta for every output unit n instead of the loss gradient.

    Returns
    -------
    grad: ParamStack
        The gradient of the loss summed over the batch, shape-parallel to the network.

    grads: list of ParamStack
        If per_output is True, one gradient structure per output unit (summed over the batch).
    """
    X, single = _as_batch(net, x)
    fp = propagate(net.layers, X)

    if per_output:
        return [deltas_to_params(fp, output_unit_deltas(net, fp, n)) for n in range(net.head.out_width)]

    T = np.atleast_2d(np.asarray(target, dtype=np.float64))
    if T.shape != fp.activations[-1].shape:
        raise ArchitectureError('Target has shape {0}, network output has shape {1}'.format(
            T.shape, fp.activations[-1].shape))

    deltas = backprop_deltas(net, fp, output_loss_delta(net, fp, T, loss_kind))
    return deltas_to_params(fp, deltas)
