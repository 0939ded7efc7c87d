import gzip
import struct

import numpy as np

from pykfusion.data.datasets import Dataset

# Data format (big endian):
# u32 | Magic (0x00000803 for unsigned byte images with 3 dimensions, 0x00000801 for labels)
# u32 | Item count
# u32 | Row count      (images only)
# u32 | Column count   (images only)
# u8[] | Payload (organized row-wise)
IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


class IdxFormatError(ValueError):
    pass


def _read(path):
    opener = gzip.open if str(path).endswith('.gz') else open
    with opener(path, 'rb') as f:
        return f.read()


def _write(path, raw):
    opener = gzip.open if str(path).endswith('.gz') else open
    with opener(path, 'wb') as f:
        f.write(raw)


def _parse(raw, path, magic, n_dims):
    header_size = 4 * (1 + n_dims)
    if len(raw) < header_size:
        raise IdxFormatError('{0}: truncated header ({1} bytes, expected at least {2})'.format(
            path, len(raw), header_size))

    found, *dims = struct.unpack('>{0}I'.format(1 + n_dims), raw[:header_size])
    if found != magic:
        raise IdxFormatError('{0}: bad magic number 0x{1:08X}, expected 0x{2:08X}'.format(path, found, magic))

    expected = int(np.prod(dims))
    payload = raw[header_size:]
    if len(payload) < expected:
        raise IdxFormatError('{0}: truncated payload ({1} bytes, header declares {2})'.format(
            path, len(payload), expected))

    return np.frombuffer(payload, dtype=np.uint8, count=expected).reshape(dims)


def read_idx_images(path):
    return _parse(_read(path), path, IMAGES_MAGIC, 3)


def read_idx_labels(path):
    return _parse(_read(path), path, LABELS_MAGIC, 1)


def load_mnist_idx(images_path, labels_path):
    """
    Load an MNIST style pair of IDX files (optionally gzipped).

    Returns
    -------
    data: Dataset
        Images flattened row-major, pixel byte p mapped to p / 255; classes are the labels present.
    """
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)

    if images.shape[0] != labels.shape[0]:
        raise IdxFormatError('{0} holds {1} images but {2} holds {3} labels'.format(
            images_path, images.shape[0], labels_path, labels.shape[0]))

    features = images.reshape(images.shape[0], -1).astype(np.float64) / 255.
    return Dataset(features, labels.astype(np.int64))


def write_idx_images(path, pixels):
    pixels = np.asarray(pixels, dtype=np.uint8)
    if pixels.ndim == 2:
        pixels = pixels[:, None, :]
    header = struct.pack('>4I', IMAGES_MAGIC, *pixels.shape)
    _write(path, header + pixels.tobytes())


def write_idx_labels(path, labels):
    labels = np.asarray(labels, dtype=np.uint8)
    _write(path, struct.pack('>2I', LABELS_MAGIC, labels.shape[0]) + labels.tobytes())


def save_idx_dataset(data: Dataset, images_path, labels_path):
    """
    Write a Dataset as an IDX pair. Features are quantized to bytes (round(255 * x)).
    """
    write_idx_images(images_path, np.rint(data.features * 255.))
    write_idx_labels(labels_path, data.labels)
