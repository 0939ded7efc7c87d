"""
Diagonal Fisher information (importance) of every network parameter.

Two estimators are provided, one per training loss:

    square loss:    F_i = sum_p sum_n (dy_n^p / dtheta_i)^2              (a sum over patterns)
    cross-entropy:  F_i = mean_p (dL^p / dtheta_i)^2 at the label of p    (the empirical Fisher)

Since the square-loss values are sums, their magnitude grows with the number of patterns; never compare them across
datasets of different size.
"""
import logging
import warnings

import numpy as np

from pykfusion.core.misc import get_rng
from pykfusion.model.backprop import backprop_deltas, output_loss_delta, output_unit_deltas, squared_deltas_to_params
from pykfusion.model.network import ParamStack, LayerParams, propagate, one_hot

logger = logging.getLogger(__name__)

CHUNK_SIZE = 512


class FisherError(ValueError):
    pass


class LossKindWarning(UserWarning):
    pass


class FisherDiag(ParamStack):
    """
    Nonnegative, finite importance values shape-parallel to a Network's weights and biases.
    """
    def __post_init__(self):
        super().__post_init__()
        for a in self.arrays():
            if not np.all(np.isfinite(a)):
                raise FisherError('Fisher values must be finite')
            if np.any(a < 0):
                raise FisherError('Fisher values must be nonnegative')

    @classmethod
    def from_params(cls, params):
        return cls(params.layers)

    def __add__(self, other):
        return self.combine(other, np.add)


def _select(data, n_samples, seed):
    X, y = data.features, data.labels
    if n_samples is None or n_samples >= len(y):
        return X, y

    idx = np.sort(get_rng(seed).choice(len(y), size=n_samples, replace=False))
    return X[idx], y[idx]


def _accumulate(total, part):
    if total is None:
        return part
    return total.combine(part, np.add)


def _check(model, data, expected_loss):
    if data.n_samples == 0:
        raise FisherError('Cannot compute Fisher values on an empty dataset')

    trained_with = model.loss_kind
    if trained_with is not None and trained_with != expected_loss:
        warnings.warn('Model was trained with {0!r} loss but the Fisher estimator assumes {1!r}'.format(
            trained_with, expected_loss), LossKindWarning)


def fisher_square(model, data, n_samples=None, seed=None):
    """
    Diagonal Hessian of the square loss in its Gauss-Newton form: the sum over patterns and output units of the
    squared derivative of each output w.r.t. each parameter.

    Parameters
    ----------
    model: TrainedModel
        A model trained with the square loss (a LossKindWarning is issued otherwise).
    data: Dataset
        The patterns to sum over, usually the model's own training split.
    n_samples: int or None
        If given, use a random subset of this many patterns.
    seed: int or None
        Seed of the subset selection.

    Returns
    -------
    fisher: FisherDiag
    """
    _check(model, data, 'square')
    net = model.network
    X, _ = _select(data, n_samples, seed)

    total = None
    for start in range(0, X.shape[0], CHUNK_SIZE):
        fp = propagate(net.layers, X[start:start + CHUNK_SIZE])
        for unit in range(net.head.out_width):
            total = _accumulate(total, squared_deltas_to_params(fp, output_unit_deltas(net, fp, unit)))

    return FisherDiag.from_params(total)


def fisher_xent(model, data, n_samples=None, sample_labels=False, seed=None):
    """
    Empirical Fisher of the cross-entropy loss: the mean over samples of the squared per-sample loss gradient.

    Parameters
    ----------
    model: TrainedModel
        A model trained with the cross-entropy loss (a LossKindWarning is issued otherwise).
    data: Dataset
    n_samples: int or None
        If given, use a random subset of this many samples.
    sample_labels: bool (default False)
        If true the label of every sample is drawn from the model's own output distribution instead of using the
        true label.
    seed: int or None
        Seed for the subset selection and the label draws.

    Returns
    -------
    fisher: FisherDiag
    """
    _check(model, data, 'cross_entropy')
    net = model.network
    rng = get_rng(seed)
    X, y = _select(data, n_samples, rng)

    total = None
    for start in range(0, X.shape[0], CHUNK_SIZE):
        fp = propagate(net.layers, X[start:start + CHUNK_SIZE])

        if sample_labels:
            probs = fp.activations[-1] / fp.activations[-1].sum(axis=1, keepdims=True)
            drawn = np.array([rng.choice(len(p), p=p) for p in probs])
            T = np.eye(net.head.out_width)[drawn]
        else:
            T = one_hot(y[start:start + CHUNK_SIZE], net.class_labels)

        deltas = backprop_deltas(net, fp, output_loss_delta(net, fp, T, 'cross_entropy'))
        total = _accumulate(total, squared_deltas_to_params(fp, deltas))

    n = X.shape[0]
    return FisherDiag.from_params(total.map(lambda a: a / n))


def compute_fisher(model, data, n_samples=None, seed=None):
    """
    Fisher values with the estimator matching the loss the model was trained with.
    """
    if model.loss_kind == 'square':
        fisher = fisher_square(model, data, n_samples=n_samples, seed=seed)
    else:
        fisher = fisher_xent(model, data, n_samples=n_samples, seed=seed)

    logger.info('Fisher values computed on %d samples (%s loss)', min(n_samples or data.n_samples, data.n_samples),
                model.loss_kind)
    return fisher


def zeros_fisher(net):
    return FisherDiag(tuple(LayerParams(np.zeros_like(l.weights), np.zeros_like(l.bias)) for l in net.layers))
