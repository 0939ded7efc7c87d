import logging
import warnings
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from sklearn.model_selection import train_test_split

from pykfusion.core.misc import get_rng, sklearn_seed

logger = logging.getLogger(__name__)


class DatasetError(ValueError):
    pass


class ClippingWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class Dataset:
    """
    Labeled samples with features in [0, 1].

    Parameters
    ----------
    features: numpy.ndarray
        Array of shape (n_samples, n_features).
    labels: array like
        Integer class of every sample.
    class_set: iterable of int or None
        The declared classes. Defaults to the labels present. Every label must belong to it.
    """
    features: np.ndarray
    labels: np.ndarray
    class_set: Tuple[int, ...] = None

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels).astype(np.int64).ravel()

        if X.ndim != 2:
            raise DatasetError('Features must be a (n_samples, n_features) matrix, got shape {0}'.format(X.shape))
        if X.shape[0] != y.shape[0]:
            raise DatasetError('{0} feature rows but {1} labels'.format(X.shape[0], y.shape[0]))
        if X.size and (np.any(~np.isfinite(X)) or X.min() < 0. or X.max() > 1.):
            raise DatasetError('Feature values must lie in [0, 1]')

        classes = np.unique(y) if self.class_set is None else self.class_set
        classes = tuple(sorted(int(c) for c in classes))

        unknown = set(np.unique(y).tolist()) - set(classes)
        if unknown:
            raise DatasetError('Labels {0} are not in the class set {1}'.format(sorted(unknown), classes))

        object.__setattr__(self, 'features', X)
        object.__setattr__(self, 'labels', y)
        object.__setattr__(self, 'class_set', classes)

    @property
    def n_samples(self):
        return self.features.shape[0]

    @property
    def n_features(self):
        return self.features.shape[1]

    def __len__(self):
        return self.n_samples

    def subset(self, idx, class_set=None):
        return Dataset(self.features[idx], self.labels[idx], self.class_set if class_set is None else class_set)

    def class_counts(self):
        return {c: int(np.sum(self.labels == c)) for c in self.class_set}


def concat_datasets(*datasets):
    classes = sorted(set().union(*(d.class_set for d in datasets)))
    return Dataset(np.vstack([d.features for d in datasets]), np.concatenate([d.labels for d in datasets]), classes)


def synth_blobs(n_classes, n_features, n_per_class, center_scale=0.5, noise_std=0.05, seed=None):
    """
    Gaussian blobs in the unit cube, one per class.

    Class centers are drawn uniformly from a cube of side center_scale around 0.5 (clamped to [0, 1]); samples are
    center + N(0, noise_std^2 I), clipped to [0, 1]. A ClippingWarning is issued when more than 1% of the values had
    to be clipped.

    Returns
    -------
    data: Dataset
        n_classes * n_per_class samples with labels 0..n_classes - 1, in shuffled order.
    """
    if min(n_classes, n_features, n_per_class) < 1:
        raise DatasetError('Counts must be positive')
    if center_scale < 0 or noise_std < 0:
        raise DatasetError('center_scale and noise_std must be nonnegative')

    rng = get_rng(seed)

    centers = np.clip(0.5 + center_scale * (rng.random((n_classes, n_features)) - 0.5), 0., 1.)
    labels = np.repeat(np.arange(n_classes), n_per_class)
    X = centers[labels] + noise_std * rng.standard_normal((labels.size, n_features))

    clipped = np.mean((X < 0.) | (X > 1.))
    if clipped > 0.01:
        warnings.warn('{0:.1%} of the synthetic feature values were clipped to [0, 1]; '
                      'consider a smaller noise_std'.format(clipped), ClippingWarning)
    X = np.clip(X, 0., 1.)

    order = rng.permutation(labels.size)
    return Dataset(X[order], labels[order], range(n_classes))


def split_by_class(data: Dataset, classes_a):
    """
    Split a dataset into the samples of classes_a and the rest. Each part declares its own class set.
    """
    classes_a = set(int(c) for c in classes_a)
    all_classes = set(data.class_set)

    if not classes_a:
        raise DatasetError('The first class subset is empty')
    if not classes_a <= all_classes:
        raise DatasetError('Classes {0} are not in the dataset'.format(sorted(classes_a - all_classes)))
    if classes_a == all_classes:
        raise DatasetError('The first class subset must be a proper subset of {0}'.format(data.class_set))

    in_a = np.isin(data.labels, sorted(classes_a))
    return data.subset(in_a, sorted(classes_a)), data.subset(~in_a, sorted(all_classes - classes_a))


def holdout(data: Dataset, val_count, seed=None):
    """
    Shuffle and split off val_count samples for validation, stratified by class so that every class keeps its share
    (within one sample). Falls back to an unstratified split when stratification is impossible (e.g. fewer
    validation samples than classes).

    Returns
    -------
    (train, val): 2-tuple of Dataset
        Both declare the class set of the input.
    """
    n = data.n_samples
    if not 0 < val_count < n:
        raise DatasetError('val_count must be in (0, {0}), got {1}'.format(n, val_count))

    idx = np.arange(n)
    random_state = sklearn_seed(seed)

    try:
        train_idx, val_idx = train_test_split(idx, test_size=int(val_count), random_state=random_state,
                                              stratify=data.labels)
    except ValueError as e:
        logger.warning('stratified holdout not possible (%s), using a plain random split', e)
        train_idx, val_idx = train_test_split(idx, test_size=int(val_count), random_state=random_state)

    return data.subset(np.sort(train_idx)), data.subset(np.sort(val_idx))
