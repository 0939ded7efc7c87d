import numpy as np

from pykfusion.model.network import init_network, DenseLayer, Network


def random_network(widths, activations, seed=0, std=0.5, class_labels=None):
    """
    Small network with nonzero biases, for derivative checks.
    """
    rng = np.random.default_rng(seed)
    net = init_network(widths, activations, class_labels, seed=rng, std=std)
    layers = [DenseLayer(l.weights, rng.normal(0., std, l.out_width), l.activation) for l in net.layers]
    return Network(tuple(layers), net.class_labels)


def random_inputs(n, d, seed=0):
    return np.random.default_rng(seed).random((n, d))


def random_architecture(rng, outputs=('softmax', 'sigmoid', 'identity')):
    """
    Random small widths (0 to 2 hidden layers) with random hidden activations and an output activation drawn from
    outputs.
    """
    n_hidden = int(rng.integers(0, 3))
    widths = [int(rng.integers(2, 5))] + [int(rng.integers(2, 6)) for _ in range(n_hidden)] + [int(rng.integers(2, 4))]
    activations = [str(a) for a in rng.choice(['relu', 'sigmoid', 'identity'], size=n_hidden)]
    return widths, activations + [str(rng.choice(outputs))]
