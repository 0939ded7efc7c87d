import dataclasses
from collections import namedtuple
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.special import expit, softmax

from pykfusion.core.misc import get_rng

ACTIVATIONS = ('relu', 'sigmoid', 'softmax', 'identity')
LOSS_KINDS = ('square', 'cross_entropy')

# Floor applied to predictions before taking logarithms in the cross-entropy
EPS_LOG = 1e-12

INIT_STD = 0.05

ForwardPass = namedtuple('ForwardPass', ['pre_activations', 'activations'])


class ArchitectureError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class DenseLayer:
    """
    A fully connected layer computing activation(W x + b).

    Parameters
    ----------
    weights: numpy.ndarray
        Matrix of shape (out_width, in_width).
    bias: numpy.ndarray
        Vector of shape (out_width,).
    activation: str
        One of 'relu', 'sigmoid', 'softmax' or 'identity'.
    """
    weights: np.ndarray
    bias: np.ndarray
    activation: str = 'relu'

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64)

        if w.ndim != 2:
            raise ArchitectureError('Weights must be a matrix, got an array with {0} dimensions'.format(w.ndim))
        if b.shape != (w.shape[0],):
            raise ArchitectureError('Bias has shape {0}, expected {1}'.format(b.shape, (w.shape[0],)))
        if self.activation not in ACTIVATIONS:
            raise ArchitectureError('Unknown activation {0!r}, expected one of {1}'.format(
                self.activation, ACTIVATIONS))
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ArchitectureError('Layer parameters must be finite')

        object.__setattr__(self, 'weights', w)
        object.__setattr__(self, 'bias', b)

    @property
    def in_width(self):
        return self.weights.shape[1]

    @property
    def out_width(self):
        return self.weights.shape[0]


@dataclass(frozen=True, eq=False)
class Network:
    """
    A dense feedforward network. The last layer is the output layer and has one unit per entry of class_labels.
    """
    layers: Tuple[DenseLayer, ...]
    class_labels: Tuple[int, ...]

    def __post_init__(self):
        layers = tuple(self.layers)
        labels = tuple(int(c) for c in self.class_labels)

        if not layers:
            raise ArchitectureError('A network needs at least an output layer')

        for i in range(1, len(layers)):
            if layers[i].in_width != layers[i - 1].out_width:
                raise ArchitectureError('Layer {0} expects {1} inputs but layer {2} has {3} outputs'.format(
                    i, layers[i].in_width, i - 1, layers[i - 1].out_width))

        for i, layer in enumerate(layers[:-1]):
            if layer.activation == 'softmax':
                raise ArchitectureError('Softmax is only allowed on the output layer, found it on layer {0}'.format(i))

        if layers[-1].out_width != len(labels):
            raise ArchitectureError('Output layer has {0} units but {1} class labels were given'.format(
                layers[-1].out_width, len(labels)))
        if len(set(labels)) != len(labels):
            raise ArchitectureError('Class labels must be distinct: {0}'.format(labels))

        object.__setattr__(self, 'layers', layers)
        object.__setattr__(self, 'class_labels', labels)

    @property
    def n_features(self):
        return self.layers[0].in_width

    @property
    def widths(self):
        return [self.n_features] + [layer.out_width for layer in self.layers]

    @property
    def activations(self):
        return [layer.activation for layer in self.layers]

    @property
    def hidden_widths(self):
        return [layer.out_width for layer in self.layers[:-1]]

    @property
    def n_hidden(self):
        return len(self.layers) - 1

    @property
    def head(self):
        return self.layers[-1]

    def copy(self):
        layers = [DenseLayer(l.weights.copy(), l.bias.copy(), l.activation) for l in self.layers]
        return Network(tuple(layers), self.class_labels)

    def replace_layers(self, layers):
        return dataclasses.replace(self, layers=tuple(layers))


@dataclass(frozen=True, eq=False)
class LayerParams:
    weights: np.ndarray
    bias: np.ndarray


@dataclass(frozen=True, eq=False)
class ParamStack:
    """
    Per-layer (weights, bias) arrays shape-parallel to a Network. Used for gradients, Adam moments and Fisher values.
    """
    layers: Tuple[LayerParams, ...]

    def __post_init__(self):
        object.__setattr__(self, 'layers', tuple(self.layers))

    @classmethod
    def zeros_like(cls, net):
        return cls(tuple(LayerParams(np.zeros_like(l.weights), np.zeros_like(l.bias)) for l in net.layers))

    def arrays(self):
        for layer in self.layers:
            yield layer.weights
            yield layer.bias

    def map(self, fn):
        return type(self)(tuple(LayerParams(fn(l.weights), fn(l.bias)) for l in self.layers))

    def combine(self, other, fn):
        return type(self)(tuple(LayerParams(fn(a.weights, b.weights), fn(a.bias, b.bias))
                                for a, b in zip(self.layers, other.layers)))

    def replace_layers(self, layers):
        return dataclasses.replace(self, layers=tuple(layers))

    def matches(self, net):
        if len(self.layers) != len(net.layers):
            return False
        return all(p.weights.shape == l.weights.shape and p.bias.shape == l.bias.shape
                   for p, l in zip(self.layers, net.layers))

    def flat(self):
        return np.concatenate([a.ravel() for a in self.arrays()])


def parse_architecture(widths, activations):
    widths = [int(w) for w in widths]
    activations = list(activations)

    if len(widths) < 2:
        raise ArchitectureError('An architecture needs an input width and at least one layer width')
    if len(activations) != len(widths) - 1:
        raise ArchitectureError('Got {0} activations for {1} layers'.format(len(activations), len(widths) - 1))
    if any(w <= 0 for w in widths):
        raise ArchitectureError('Layer widths must be positive, got {0}'.format(widths))
    for i, act in enumerate(activations):
        if act not in ACTIVATIONS:
            raise ArchitectureError('Unknown activation {0!r} on layer {1}'.format(act, i))
        if act == 'softmax' and i != len(activations) - 1:
            raise ArchitectureError('Softmax is only allowed on the output layer, found it on layer {0}'.format(i))

    return widths, activations


def init_network(widths, activations, class_labels=None, seed=None, std=INIT_STD):
    """
    Create a network with weights drawn i.i.d. from N(0, std^2) and zero biases.

    Parameters
    ----------
    widths: list of int
        [n_features, width_1, ..., n_outputs].
    activations: list of str
        One activation per layer (len(widths) - 1 entries).
    class_labels: list of int or None
        Labels of the output units. Defaults to 0..n_outputs - 1.
    seed: int, numpy.random.Generator or None
        Seed for the weight generator. Equal seeds give bit-identical networks.
    std: float
        Standard deviation of the initial weights.

    Returns
    -------
    net: Network
    """
    widths, activations = parse_architecture(widths, activations)
    rng = get_rng(seed)

    if class_labels is None:
        class_labels = range(widths[-1])

    layers = []
    for n_in, n_out, act in zip(widths[:-1], widths[1:], activations):
        w = rng.normal(0., std, size=(n_out, n_in))
        layers.append(DenseLayer(w, np.zeros(n_out), act))

    return Network(tuple(layers), tuple(class_labels))


def activate(z, kind):
    if kind == 'relu':
        return np.maximum(z, 0.)
    if kind == 'sigmoid':
        return expit(z)
    if kind == 'softmax':
        return softmax(z, axis=1)
    return z


def propagate(layers, X):
    """
    Forward pass over a batch. Returns the pre-activations of every layer and the post-activations with the input
    as first entry.
    """
    pre, post = [], [X]
    a = X
    for layer in layers:
        z = a @ layer.weights.T + layer.bias
        a = activate(z, layer.activation)
        pre.append(z)
        post.append(a)

    return ForwardPass(pre, post)


def _as_batch(net, x):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = np.atleast_2d(x)

    if X.ndim != 2 or X.shape[1] != net.n_features:
        raise ArchitectureError('Input has dimension {0}, network expects {1}'.format(
            x.shape[-1] if x.ndim else 0, net.n_features))

    return X, single


def forward(net: Network, x):
    """
    Run the network on a single feature vector or a batch of them (rows).

    Returns
    -------
    ForwardPass: namedtuple (pre_activations, activations)
        activations[0] is the input, activations[-1] the network output. When x is a vector every entry is a vector.
    """
    X, single = _as_batch(net, x)
    fp = propagate(net.layers, X)

    if single:
        return ForwardPass([z[0] for z in fp.pre_activations], [a[0] for a in fp.activations])
    return fp


def predict_proba(net: Network, X):
    X, single = _as_batch(net, X)
    out = propagate(net.layers, X).activations[-1]
    return out[0] if single else out


def loss(pred, target, loss_kind):
    """
    Total loss of predictions against one-hot targets. Batches are summed over samples.

    square: 1/2 sum (pred - target)^2
    cross_entropy: -sum target * ln(max(pred, EPS_LOG))
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)

    if pred.shape != target.shape:
        raise ArchitectureError('Prediction shape {0} does not match target shape {1}'.format(
            pred.shape, target.shape))

    if loss_kind == 'square':
        return 0.5 * float(np.sum((pred - target) ** 2))
    if loss_kind == 'cross_entropy':
        return -float(np.sum(target * np.log(np.maximum(pred, EPS_LOG))))

    raise ValueError('Unknown loss kind {0!r}, expected one of {1}'.format(loss_kind, LOSS_KINDS))


def one_hot(labels, class_labels):
    index = {c: i for i, c in enumerate(class_labels)}
    try:
        idx = np.fromiter((index[int(c)] for c in labels), dtype=np.intp, count=len(labels))
    except KeyError as e:
        raise ArchitectureError('Label {0} is not one of the output classes {1}'.format(e.args[0], class_labels))

    t = np.zeros((len(labels), len(class_labels)))
    t[np.arange(len(labels)), idx] = 1.
    return t
