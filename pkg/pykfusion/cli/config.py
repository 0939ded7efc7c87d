import dataclasses
import json
import os
from dataclasses import dataclass, field
from typing import Optional, Tuple

from pykfusion.data.datasets import synth_blobs, holdout
from pykfusion.data.idx import load_mnist_idx
from pykfusion.fusion.fuse import FusionSpec
from pykfusion.model.estimator import FANNClassifier, loss_for_output
from pykfusion.model.network import init_network
from pykfusion.model.training import TrainHyper

MNIST_FILES = {
    'train_images': 'train-images-idx3-ubyte',
    'train_labels': 'train-labels-idx1-ubyte',
    'test_images': 't10k-images-idx3-ubyte',
    'test_labels': 't10k-labels-idx1-ubyte',
}


class ConfigError(ValueError):
    pass


def _known(cls, d):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ConfigError('Unknown {0} entries: {1}'.format(cls.__name__, sorted(unknown)))
    return dict(d)


def read_config(path):
    """
    Read a JSON configuration file into a dict (an empty dict when path is None).
    """
    if path is None:
        return {}
    with open(path) as f:
        try:
            d = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError('{0} is not valid JSON: {1}'.format(path, e))
    if not isinstance(d, dict):
        raise ConfigError('{0} must hold a JSON object'.format(path))
    return d


def find_idx(directory, name):
    """
    Path of an MNIST file in a directory, accepting a gzipped copy.
    """
    path = os.path.join(directory, MNIST_FILES[name])
    if not os.path.exists(path) and os.path.exists(path + '.gz'):
        return path + '.gz'
    return path


@dataclass(frozen=True)
class DataSource:
    """
    Where the data of an experiment comes from: an MNIST-style directory of IDX files, or synthetic blobs generated
    in memory.
    """
    kind: str = 'idx'
    directory: Optional[str] = None
    n_classes: int = 10
    n_features: int = 64
    n_per_class: int = 200
    n_test_per_class: int = 50
    center_scale: float = 0.5
    noise_std: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ('idx', 'synthetic'):
            raise ConfigError('Unknown data source {0!r}, expected idx or synthetic'.format(self.kind))
        if self.kind == 'idx' and not self.directory:
            raise ConfigError('An idx data source needs a directory')

    def load(self):
        """
        Returns
        -------
        (train, test): 2-tuple of Dataset
        """
        if self.kind == 'idx':
            train = load_mnist_idx(find_idx(self.directory, 'train_images'), find_idx(self.directory, 'train_labels'))
            test = load_mnist_idx(find_idx(self.directory, 'test_images'), find_idx(self.directory, 'test_labels'))
            return train, test

        return synth_split(self.n_classes, self.n_features, self.n_per_class, self.n_test_per_class,
                           self.center_scale, self.noise_std, self.seed)

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**_known(cls, d))


def synth_split(n_classes, n_features, n_per_class, n_test_per_class, center_scale, noise_std, seed):
    data = synth_blobs(n_classes, n_features, n_per_class + n_test_per_class, center_scale, noise_std, seed)
    return holdout(data, n_classes * n_test_per_class, seed=seed)


@dataclass(frozen=True)
class TrainConfig:
    """
    Everything `train` needs: training files, the classes to keep, the architecture and the trainer settings.
    """
    images: Optional[str] = None
    labels: Optional[str] = None
    output: Optional[str] = None
    classes: Optional[Tuple[int, ...]] = None
    hidden_widths: Tuple[int, ...] = (800,)
    hidden_activation: str = 'relu'
    output_activation: str = 'softmax'
    loss_kind: Optional[str] = None
    learning_rate: float = 0.001
    batch_size: int = 200
    max_epochs: int = 100
    patience: int = 5
    l2_coeff: float = 0.
    val_fraction: float = 0.2
    fisher: bool = True
    fisher_samples: Optional[int] = None
    init_std: float = 0.05
    start_model: Optional[str] = None
    seed: int = 0

    def __post_init__(self):
        if self.classes is not None:
            object.__setattr__(self, 'classes', tuple(int(c) for c in self.classes))
        object.__setattr__(self, 'hidden_widths', tuple(int(w) for w in self.hidden_widths))
        if not 0 < self.val_fraction < 1:
            raise ConfigError('val_fraction must be in (0, 1), got {0}'.format(self.val_fraction))

    def estimator(self, verbose=False, start_network=None):
        return FANNClassifier(hidden_widths=self.hidden_widths, hidden_activation=self.hidden_activation,
                              output_activation=self.output_activation, loss_kind=self.loss_kind,
                              learning_rate=self.learning_rate, batch_size=self.batch_size,
                              max_epochs=self.max_epochs, patience=self.patience, l2_coeff=self.l2_coeff,
                              val_fraction=self.val_fraction, fisher=self.fisher,
                              fisher_samples=self.fisher_samples, init_std=self.init_std,
                              start_network=start_network, seed=self.seed, verbose=verbose)

    def to_dict(self):
        d = dataclasses.asdict(self)
        d['hidden_widths'] = list(self.hidden_widths)
        d['classes'] = None if self.classes is None else list(self.classes)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**_known(cls, d))


def _default_fusions():
    return (FusionSpec('ws'), FusionSpec('ewc'), FusionSpec('ewc', align=False))


@dataclass(frozen=True)
class ExperimentConfig:
    """
    A repeated split-class fusion experiment.

    Every repetition draws a class split (n_classes_a classes for A unless classes_a fixes them), then for every
    architecture trains A and B, fuses them with every FusionSpec and evaluates on the full test set.
    """
    data: DataSource = field(default_factory=lambda: DataSource('synthetic'))
    classes_a: Optional[Tuple[int, ...]] = None
    n_classes_a: Optional[int] = None
    architectures: Tuple[Tuple[int, ...], ...] = ((800,),)
    hidden_activation: str = 'relu'
    output_activation: str = 'softmax'
    loss_kind: Optional[str] = None
    hyper: TrainHyper = field(default_factory=TrainHyper)
    fusions: Tuple[FusionSpec, ...] = field(default_factory=_default_fusions)
    val_fraction: float = 0.2
    fisher_samples: Optional[int] = None
    init_std: float = 0.05
    joint_baseline: bool = False
    shared_init: bool = False
    repetitions: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.repetitions < 1:
            raise ConfigError('repetitions must be at least 1, got {0}'.format(self.repetitions))
        if not self.architectures:
            raise ConfigError('At least one architecture is needed')
        if not self.fusions:
            raise ConfigError('At least one fusion method is needed')
        if not 0 < self.val_fraction < 1:
            raise ConfigError('val_fraction must be in (0, 1), got {0}'.format(self.val_fraction))

        names = [f.name for f in self.fusions]
        if len(set(names)) != len(names):
            raise ConfigError('Fusion methods must be distinct, got {0}'.format(names))

        object.__setattr__(self, 'hyper', dataclasses.replace(
            self.hyper, loss_kind=loss_for_output(self.output_activation, self.loss_kind)))
        object.__setattr__(self, 'architectures', tuple(tuple(int(w) for w in a) for a in self.architectures))
        if self.classes_a is not None:
            object.__setattr__(self, 'classes_a', tuple(int(c) for c in self.classes_a))

    def common_start(self, n_features, hidden_widths, class_set, seed):
        """
        The network both constituents of an architecture start from when shared_init is set.
        """
        widths = [n_features] + list(hidden_widths) + [len(class_set)]
        activations = [self.hidden_activation] * len(hidden_widths) + [self.output_activation]
        return init_network(widths, activations, class_set, seed=seed, std=self.init_std)

    def train_config(self, hidden_widths, seed):
        return TrainConfig(hidden_widths=hidden_widths, hidden_activation=self.hidden_activation,
                           output_activation=self.output_activation,
                           loss_kind=self.hyper.loss_kind,
                           learning_rate=self.hyper.learning_rate, batch_size=self.hyper.batch_size,
                           max_epochs=self.hyper.max_epochs, patience=self.hyper.patience,
                           l2_coeff=self.hyper.l2_coeff, val_fraction=self.val_fraction,
                           fisher_samples=self.fisher_samples, init_std=self.init_std, seed=seed)

    def to_dict(self):
        return {
            'data': self.data.to_dict(),
            'classes_a': None if self.classes_a is None else list(self.classes_a),
            'n_classes_a': self.n_classes_a,
            'architectures': [list(a) for a in self.architectures],
            'hidden_activation': self.hidden_activation,
            'output_activation': self.output_activation,
            'loss_kind': self.loss_kind,
            'hyper': self.hyper.to_dict(),
            'fusions': [f.to_dict() for f in self.fusions],
            'val_fraction': self.val_fraction,
            'fisher_samples': self.fisher_samples,
            'init_std': self.init_std,
            'joint_baseline': self.joint_baseline,
            'shared_init': self.shared_init,
            'repetitions': self.repetitions,
            'seed': self.seed,
        }

    @classmethod
    def from_dict(cls, d):
        d = _known(cls, d)
        if 'data' in d:
            d['data'] = DataSource.from_dict(d['data'])
        if 'hyper' in d:
            d['hyper'] = TrainHyper.from_dict(d['hyper'])
        if 'fusions' in d:
            d['fusions'] = tuple(FusionSpec.from_dict(f) if isinstance(f, dict) else fusion_from_name(f)
                                 for f in d['fusions'])
        return cls(**d)


FUSION_NAMES = {
    'ws': dict(method='ws'),
    'ws-average': dict(method='ws', hidden_policy='average'),
    'ws-aligned': dict(method='ws', align=True),
    'ws-average-aligned': dict(method='ws', hidden_policy='average', align=True),
    'ewc': dict(method='ewc'),
    'ewc-noalign': dict(method='ewc', align=False),
}


def fusion_from_name(name):
    try:
        return FusionSpec(**FUSION_NAMES[name])
    except KeyError:
        raise ConfigError('Unknown fusion method {0!r}, expected one of {1}'.format(name, sorted(FUSION_NAMES)))
