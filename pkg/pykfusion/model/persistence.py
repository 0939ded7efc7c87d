"""
ModelFile: a JSON document holding a network, its optional Fisher values and its training record.

Arrays are stored row-major as base64 encoded little-endian float32. Computation always happens in float64; loading
widens the stored values back.
"""
import base64
import json
import os
import tempfile

import numpy as np

from pykfusion.model.fisher import FisherDiag
from pykfusion.model.network import Network, DenseLayer, LayerParams
from pykfusion.model.training import TrainedModel

FORMAT_VERSION = 1
STORAGE_DTYPE = '<f4'


class ModelFileError(ValueError):
    pass


def encode_array(a):
    return base64.b64encode(np.ascontiguousarray(a, dtype=STORAGE_DTYPE).tobytes()).decode('ascii')


def decode_array(text, shape):
    values = np.frombuffer(base64.b64decode(text), dtype=STORAGE_DTYPE)
    expected = int(np.prod(shape))
    if values.size != expected:
        raise ModelFileError('Stored array has {0} values, declared shape {1} needs {2}'.format(
            values.size, tuple(shape), expected))
    return values.astype(np.float64).reshape(shape)


def json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError('Object of type {0} is not JSON serializable'.format(type(o).__name__))


def dump_json(document, path):
    """
    Write a JSON document atomically: the target only appears once it is complete.
    """
    text = json.dumps(document, sort_keys=True, indent=1, default=json_default)
    directory = os.path.dirname(os.path.abspath(path))

    fd, tmp = tempfile.mkstemp(dir=directory, prefix='.tmp-', suffix='.json')
    try:
        with os.fdopen(fd, 'w') as f:
            f.write(text + '\n')
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


def to_document(model: TrainedModel):
    net = model.network
    doc = {
        'format_version': FORMAT_VERSION,
        'architecture': {'widths': net.widths, 'activations': net.activations},
        'class_labels': list(net.class_labels),
        'layers': [{'weights': encode_array(l.weights), 'bias': encode_array(l.bias)} for l in net.layers],
        'fisher': None,
        'meta': model.meta,
    }

    if model.fisher is not None:
        doc['fisher'] = [{'weights': encode_array(f.weights), 'bias': encode_array(f.bias)}
                         for f in model.fisher.layers]

    return doc


def from_document(doc):
    version = doc.get('format_version')
    if version != FORMAT_VERSION:
        raise ModelFileError('Unsupported model file version {0!r} (expected {1})'.format(version, FORMAT_VERSION))

    try:
        widths = doc['architecture']['widths']
        activations = doc['architecture']['activations']
        stored = doc['layers']
    except KeyError as e:
        raise ModelFileError('Model file is missing the {0!r} entry'.format(e.args[0]))

    if len(stored) != len(activations) or len(widths) != len(activations) + 1:
        raise ModelFileError('Model file declares {0} activations and {1} widths for {2} stored layers'.format(
            len(activations), len(widths), len(stored)))

    shapes = [((n_out, n_in), (n_out,)) for n_in, n_out in zip(widths[:-1], widths[1:])]

    layers = [DenseLayer(decode_array(s['weights'], ws), decode_array(s['bias'], bs), act)
              for s, (ws, bs), act in zip(stored, shapes, activations)]
    net = Network(tuple(layers), tuple(doc['class_labels']))

    fisher = None
    if doc.get('fisher') is not None:
        if len(doc['fisher']) != len(layers):
            raise ModelFileError('Fisher values stored for {0} layers, the network has {1}'.format(
                len(doc['fisher']), len(layers)))
        fisher = FisherDiag(tuple(LayerParams(decode_array(f['weights'], ws), decode_array(f['bias'], bs))
                                  for f, (ws, bs) in zip(doc['fisher'], shapes)))

    return TrainedModel(net, fisher, doc.get('meta') or {})


def save_model(model: TrainedModel, path):
    dump_json(to_document(model), path)


def load_model(path):
    with open(path) as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise ModelFileError('{0} is not a valid model file: {1}'.format(path, e))

    return from_document(doc)
