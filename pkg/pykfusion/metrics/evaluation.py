from dataclasses import dataclass
from typing import Tuple

import numpy as np
import pandas as pd
from sklearn.metrics import confusion_matrix

from pykfusion.model.network import propagate

TIE_BREAK_RULE = 'lowest-index'


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """
    counts[r, c] is the number of test samples of class classes[r] predicted as classes[c].
    """
    classes: Tuple[int, ...]
    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        k = len(self.classes)
        if counts.shape != (k, k):
            raise EvaluationError('Counts of shape {0} do not fit {1} classes'.format(counts.shape, k))
        if np.any(counts < 0):
            raise EvaluationError('Confusion counts must be nonnegative')

        object.__setattr__(self, 'classes', tuple(int(c) for c in self.classes))
        object.__setattr__(self, 'counts', counts)

    @property
    def total(self):
        return int(self.counts.sum())

    @property
    def accuracy(self):
        return float(np.trace(self.counts) / self.total) if self.total else float('nan')

    def to_dict(self):
        return {'classes': list(self.classes), 'counts': self.counts.tolist()}

    def to_frame(self):
        return pd.DataFrame(self.counts, index=pd.Index(self.classes, name='true'),
                            columns=pd.Index(self.classes, name='predicted'))


def evaluate(model, test, restrict_to=None):
    """
    Accuracy and confusion matrix of a model on a test set.

    Every sample is assigned the class of its highest output; ties go to the lowest output index.

    Parameters
    ----------
    model: TrainedModel or Network
    test: Dataset
        Its class set must be covered by the model's output labels.
    restrict_to: iterable of int or None
        If given, only samples of these classes are scored and the argmax runs over these classes' outputs only.

    Returns
    -------
    (accuracy, confusion): 2-tuple
        Accuracy as a fraction in [0, 1] and the ConfusionMatrix over the scored classes (in the model's output
        order).
    """
    net = getattr(model, 'network', model)
    labels = list(net.class_labels)

    unknown = set(test.class_set) - set(labels)
    if unknown:
        raise EvaluationError('Test classes {0} are not among the model classes {1}'.format(sorted(unknown), labels))

    X, y = test.features, test.labels
    columns = np.arange(len(labels))

    if restrict_to is not None:
        restrict = set(int(c) for c in restrict_to)
        if not restrict or not restrict <= set(labels):
            raise EvaluationError('Cannot restrict to classes {0}, the model classes are {1}'.format(
                sorted(restrict), labels))
        columns = np.array([i for i, c in enumerate(labels) if c in restrict])
        keep = np.isin(y, list(restrict))
        X, y = X[keep], y[keep]

    if len(y) == 0:
        raise EvaluationError('No test samples to evaluate')
    if X.shape[1] != net.n_features:
        raise EvaluationError('Test set has {0} features, the model expects {1}'.format(X.shape[1], net.n_features))

    out = propagate(net.layers, X).activations[-1][:, columns]
    classes = np.asarray(labels)[columns]
    pred = classes[np.argmax(out, axis=1)]

    cm = ConfusionMatrix(tuple(classes), confusion_matrix(y, pred, labels=classes))
    return cm.accuracy, cm


def aggregate(runs):
    """
    Sample mean and sample standard deviation (n - 1 denominator) of repeated accuracies.
    """
    runs = np.asarray(runs, dtype=np.float64).ravel()
    if runs.size < 2:
        raise EvaluationError('Aggregation needs at least 2 runs, got {0}'.format(runs.size))

    return float(np.mean(runs)), float(np.std(runs, ddof=1))
