import os

import pytest

from pykfusion.data.datasets import synth_blobs, split_by_class
from pykfusion.model.estimator import FANNClassifier

MNIST_ENV = 'PYKFUSION_MNIST_DIR'


def pytest_collection_modifyitems(config, items):
    if os.environ.get(MNIST_ENV):
        return
    skip = pytest.mark.skip(reason='set {0} to the MNIST IDX directory to run'.format(MNIST_ENV))
    for item in items:
        if 'mnist' in item.keywords:
            item.add_marker(skip)


@pytest.fixture(scope='session')
def mnist_dir():
    return os.environ[MNIST_ENV]


@pytest.fixture(scope='session')
def blobs():
    # 4 well separated classes in 12 dimensions
    return synth_blobs(4, 12, 80, center_scale=0.8, noise_std=0.05, seed=3)


@pytest.fixture(scope='session')
def blob_split(blobs):
    return split_by_class(blobs, [0, 1])


@pytest.fixture(scope='session')
def trained_pair(blob_split):
    data_a, data_b = blob_split
    clf = dict(hidden_widths=(16,), max_epochs=30, batch_size=20, learning_rate=0.01)
    model_a = FANNClassifier(seed=11, **clf).fit(data_a).model
    model_b = FANNClassifier(seed=12, **clf).fit(data_b).model
    return model_a, model_b
