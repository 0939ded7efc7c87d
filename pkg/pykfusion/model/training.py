import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from tqdm import tqdm

from pykfusion.core.misc import get_rng
from pykfusion.model.backprop import backprop_deltas, deltas_to_params, output_loss_delta
from pykfusion.model.network import Network, DenseLayer, LOSS_KINDS, propagate, loss, one_hot

logger = logging.getLogger(__name__)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class TrainingError(ValueError):
    pass


@dataclass(frozen=True)
class TrainHyper:
    """
    Hyperparameters of the trainer. L2 regularization adds (l2_coeff / 2) * sum(W^2) over weights (not biases).
    """
    learning_rate: float = 0.001
    batch_size: int = 200
    max_epochs: int = 100
    patience: int = 5
    loss_kind: str = 'cross_entropy'
    l2_coeff: float = 0.
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise TrainingError('learning_rate must be positive, got {0}'.format(self.learning_rate))
        if self.batch_size < 1:
            raise TrainingError('batch_size must be at least 1, got {0}'.format(self.batch_size))
        if self.max_epochs < 1 or self.patience < 1:
            raise TrainingError('max_epochs and patience must be positive')
        if self.loss_kind not in LOSS_KINDS:
            raise TrainingError('Unknown loss kind {0!r}, expected one of {1}'.format(self.loss_kind, LOSS_KINDS))
        if self.l2_coeff < 0:
            raise TrainingError('l2_coeff must be nonnegative, got {0}'.format(self.l2_coeff))

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


@dataclass(frozen=True, eq=False)
class TrainedModel:
    """
    A network together with its (optional) diagonal Fisher values and a JSON-serializable record of how it was
    obtained (hyperparameters, accuracies, epochs, seed or fusion provenance).
    """
    network: Network
    fisher: Optional['FisherDiag'] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.fisher is not None and not self.fisher.matches(self.network):
            raise TrainingError('Fisher values are not shape-parallel to the network')

    @property
    def class_labels(self):
        return self.network.class_labels

    @property
    def loss_kind(self):
        return self.meta.get('hyper', {}).get('loss_kind')

    def with_fisher(self, fisher):
        return dataclasses.replace(self, fisher=fisher)

    def predict_proba(self, X):
        return propagate(self.network.layers, np.atleast_2d(X)).activations[-1]

    def predict(self, X):
        # np.argmax returns the lowest index among ties
        idx = np.argmax(self.predict_proba(X), axis=1)
        return np.asarray(self.network.class_labels)[idx]


def accuracy(net, dataset):
    out = propagate(net.layers, dataset.features).activations[-1]
    pred = np.asarray(net.class_labels)[np.argmax(out, axis=1)]
    return float(np.mean(pred == dataset.labels))


class Adam:
    def __init__(self, params, learning_rate, beta1=ADAM_BETA1, beta2=ADAM_BETA2, eps=ADAM_EPS):
        self.params = params
        self.lr = learning_rate
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads):
        self.t += 1
        c1 = 1. - self.beta1 ** self.t
        c2 = 1. - self.beta2 ** self.t

        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1. - self.beta1) * g
            v *= self.beta2
            v += (1. - self.beta2) * g ** 2
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def _check_data(net, dataset, name):
    if dataset.n_samples == 0:
        raise TrainingError('The {0} set is empty'.format(name))
    if dataset.n_features != net.n_features:
        raise TrainingError('The {0} set has {1} features, the network expects {2}'.format(
            name, dataset.n_features, net.n_features))
    if set(dataset.class_set) != set(net.class_labels):
        raise TrainingError('The {0} set classes {1} do not match the network classes {2}'.format(
            name, sorted(dataset.class_set), sorted(net.class_labels)))


def train(net: Network, train_set, val_set, hyper: TrainHyper, verbose=False):
    """
    Train a network with Adam on mini-batches and early stopping on validation accuracy.

    Parameters
    ----------
    net: Network
        The starting point. It is not modified.
    train_set: Dataset
    val_set: Dataset
        Both must declare exactly the network's class labels.
    hyper: TrainHyper
    verbose: bool
        Show a progress bar over epochs.

    Returns
    -------
    model: TrainedModel
        The snapshot with the best validation accuracy (without Fisher values).

    Notes
    -----
    The data order of every epoch is drawn from a generator seeded with hyper.seed, so the result is a pure function
    of (net, train_set, val_set, hyper). Training stops after `patience` epochs without a strict improvement of the
    validation accuracy.
    """
    _check_data(net, train_set, 'training')
    _check_data(net, val_set, 'validation')

    rng = get_rng(hyper.seed)

    layers = [DenseLayer(l.weights.copy(), l.bias.copy(), l.activation) for l in net.layers]
    work = Network(tuple(layers), net.class_labels)

    params = [a for l in layers for a in (l.weights, l.bias)]
    optimizer = Adam(params, hyper.learning_rate)

    X, T = train_set.features, one_hot(train_set.labels, net.class_labels)
    n = X.shape[0]

    best_net, best_val, best_epoch, stale = work.copy(), -1., 0, 0
    history = []

    epochs = range(1, hyper.max_epochs + 1)
    if verbose:
        epochs = tqdm(epochs, desc='training', unit='epoch')

    epoch = 0
    for epoch in epochs:
        order = rng.permutation(n)
        epoch_loss = 0.

        for start in range(0, n, hyper.batch_size):
            idx = order[start:start + hyper.batch_size]
            fp = propagate(layers, X[idx])

            epoch_loss += loss(fp.activations[-1], T[idx], hyper.loss_kind)

            deltas = backprop_deltas(work, fp, output_loss_delta(work, fp, T[idx], hyper.loss_kind))
            grad = deltas_to_params(fp, deltas)

            grads = []
            for layer, g in zip(layers, grad.layers):
                grads.append(g.weights / len(idx) + hyper.l2_coeff * layer.weights)
                grads.append(g.bias / len(idx))

            optimizer.step(grads)

        if not all(np.all(np.isfinite(p)) for p in params):
            raise TrainingError('Training diverged at epoch {0}: non-finite weights'.format(epoch))

        train_acc, val_acc = accuracy(work, train_set), accuracy(work, val_set)
        history.append(val_acc)
        logger.debug('epoch %d: loss %.5f, train accuracy %.4f, validation accuracy %.4f',
                     epoch, epoch_loss / n, train_acc, val_acc)

        if val_acc > best_val:
            best_net, best_val, best_epoch, stale = work.copy(), val_acc, epoch, 0
        else:
            stale += 1
            if stale >= hyper.patience:
                logger.info('early stopping at epoch %d, best validation accuracy %.4f at epoch %d',
                            epoch, best_val, best_epoch)
                break

    meta = {
        'hyper': hyper.to_dict(),
        'seed': hyper.seed,
        'epochs_run': epoch,
        'best_epoch': best_epoch,
        'train_accuracy': accuracy(best_net, train_set),
        'val_accuracy': best_val,
        'val_history': history,
    }

    return TrainedModel(best_net, None, meta)
