import struct

import numpy as np
import pytest

from pykfusion.data.datasets import (Dataset, DatasetError, ClippingWarning, synth_blobs, split_by_class, holdout,
                                     concat_datasets)
from pykfusion.data.idx import (IdxFormatError, IMAGES_MAGIC, LABELS_MAGIC, load_mnist_idx, save_idx_dataset,
                                read_idx_images, write_idx_images, write_idx_labels)


@pytest.fixture
def idx_pair(tmp_path):
    pixels = np.arange(2 * 3 * 4, dtype=np.uint8).reshape(2, 3, 4) * 10
    pixels[1, 2, 3] = 255
    images, labels = tmp_path / 'images.idx', tmp_path / 'labels.idx'
    write_idx_images(images, pixels)
    write_idx_labels(labels, [7, 2])
    return images, labels, pixels


def test_load_idx_pair(idx_pair):
    images, labels, pixels = idx_pair
    data = load_mnist_idx(images, labels)

    assert data.features.shape == (2, 12)
    assert data.features[1, -1] == 1.
    assert data.features[0, 0] == 0.
    assert np.allclose(data.features, pixels.reshape(2, -1) / 255.)
    assert list(data.labels) == [7, 2]
    assert data.class_set == (2, 7)


def test_gzipped_files_are_read(tmp_path):
    pixels = np.full((3, 2, 2), 51, dtype=np.uint8)
    write_idx_images(tmp_path / 'img.gz', pixels)
    write_idx_labels(tmp_path / 'lab.gz', [0, 1, 1])

    data = load_mnist_idx(tmp_path / 'img.gz', tmp_path / 'lab.gz')

    assert np.allclose(data.features, 0.2)
    assert list(data.labels) == [0, 1, 1]


def test_bad_magic_is_reported_in_hex(tmp_path):
    path = tmp_path / 'images.idx'
    path.write_bytes(struct.pack('>4I', 0x00000802, 1, 1, 1) + b'\x00')

    with pytest.raises(IdxFormatError, match='0x00000802'):
        read_idx_images(path)


def test_truncated_files(tmp_path):
    path = tmp_path / 'images.idx'

    path.write_bytes(struct.pack('>2I', IMAGES_MAGIC, 1))
    with pytest.raises(IdxFormatError, match='header'):
        read_idx_images(path)

    path.write_bytes(struct.pack('>4I', IMAGES_MAGIC, 2, 2, 2) + b'\x00' * 7)
    with pytest.raises(IdxFormatError, match='payload'):
        read_idx_images(path)


def test_count_mismatch(tmp_path, idx_pair):
    images, _, _ = idx_pair
    labels = tmp_path / 'three.idx'
    labels.write_bytes(struct.pack('>2I', LABELS_MAGIC, 3) + bytes([1, 2, 3]))

    with pytest.raises(IdxFormatError, match='2 images'):
        load_mnist_idx(images, labels)


def test_save_quantizes_to_bytes(tmp_path):
    data = Dataset(np.array([[0., 0.5, 1.], [0.2, 0.9, 0.004]]), [1, 0])
    save_idx_dataset(data, tmp_path / 'x.idx', tmp_path / 'y.idx')

    back = load_mnist_idx(tmp_path / 'x.idx', tmp_path / 'y.idx')

    assert np.max(np.abs(back.features - data.features)) <= 0.5 / 255. + 1e-12
    assert list(back.labels) == [1, 0]


def test_dataset_validation():
    with pytest.raises(DatasetError):
        Dataset(np.array([[1.5]]), [0])
    with pytest.raises(DatasetError):
        Dataset(np.zeros((2, 3)), [0])
    with pytest.raises(DatasetError):
        Dataset(np.zeros((1, 3)), [4], class_set=(0, 1))


def test_synth_blobs_properties():
    data = synth_blobs(3, 5, 20, center_scale=0.6, noise_std=0.02, seed=0)

    assert data.features.shape == (60, 5)
    assert data.class_set == (0, 1, 2)
    assert data.class_counts() == {0: 20, 1: 20, 2: 20}
    assert data.features.min() >= 0. and data.features.max() <= 1.

    again = synth_blobs(3, 5, 20, center_scale=0.6, noise_std=0.02, seed=0)
    assert data.features.tobytes() == again.features.tobytes()


def test_synth_blobs_warns_on_heavy_clipping():
    with pytest.warns(ClippingWarning):
        synth_blobs(2, 4, 50, center_scale=1., noise_std=1., seed=0)


def test_split_by_class_partitions_samples(blobs):
    a, b = split_by_class(blobs, [0, 2])

    assert a.class_set == (0, 2)
    assert b.class_set == (1, 3)
    assert a.n_samples + b.n_samples == blobs.n_samples

    joined = concat_datasets(a, b)
    assert sorted(map(tuple, joined.features.tolist())) == sorted(map(tuple, blobs.features.tolist()))
    assert joined.class_set == blobs.class_set


@pytest.mark.parametrize('classes', [[], [0, 1, 2, 3], [9]])
def test_split_by_class_rejects(blobs, classes):
    with pytest.raises(DatasetError):
        split_by_class(blobs, classes)


def test_holdout_is_stratified_and_seeded(blobs):
    train, val = holdout(blobs, 40, seed=5)

    assert val.n_samples == 40 and train.n_samples == blobs.n_samples - 40
    assert train.class_set == val.class_set == blobs.class_set
    for c, count in val.class_counts().items():
        assert abs(count - 10) <= 1

    again_train, again_val = holdout(blobs, 40, seed=5)
    assert np.array_equal(val.features, again_val.features)
    assert np.array_equal(train.labels, again_train.labels)


def test_holdout_rejects_bad_sizes(blobs):
    with pytest.raises(DatasetError):
        holdout(blobs, 0)
    with pytest.raises(DatasetError):
        holdout(blobs, blobs.n_samples)
