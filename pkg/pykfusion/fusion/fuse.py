import dataclasses
import logging
import warnings
from dataclasses import dataclass, field
from typing import Optional, Tuple, Union

import numpy as np

from pykfusion.fusion.align import (align_networks, check_compatible, FusionError, ArchitectureMismatch, TIE_BREAK,
                                    MissingFisherError)
from pykfusion.metrics.diagnostics import weight_mean_report
from pykfusion.model.fisher import FisherDiag
from pykfusion.model.network import Network, DenseLayer, LayerParams
from pykfusion.model.training import TrainedModel

logger = logging.getLogger(__name__)

METHODS = ('ws', 'ewc')
WS_POLICIES = ('sum', 'average')

# entries whose Fisher values sum to less than this are averaged
EPSILON = 1e-12


class ZeroMeanWarning(UserWarning):
    pass


@dataclass(frozen=True)
class FusionSpec:
    """
    How two constituents are fused.

    Parameters
    ----------
    method: str
        'ws' (weights summation) or 'ewc' (Fisher-weighted averaging).
    hidden_policy: str or tuple of str
        Rule for every hidden layer ('sum' or 'average' for ws, 'ewc' for ewc). A single string applies to all
        layers.
    align: bool or None
        Permute B's hidden nodes to A's before fusing. Defaults to True for ewc and False for ws.
    epsilon: float
        Entries whose Fisher values sum to less than epsilon are averaged.
    include_postsynaptic: bool
        Include outgoing weights in the alignment cost.
    tie_break: float
        Relative weight of the distance tie-break during alignment.
    """
    method: str = 'ewc'
    hidden_policy: Union[str, Tuple[str, ...]] = None
    align: Optional[bool] = None
    epsilon: float = EPSILON
    include_postsynaptic: bool = False
    tie_break: float = TIE_BREAK

    def __post_init__(self):
        if self.method not in METHODS:
            raise FusionError('Unknown fusion method {0!r}, expected one of {1}'.format(self.method, METHODS))

        policy = self.hidden_policy
        if policy is None:
            policy = 'ewc' if self.method == 'ewc' else 'sum'
        if not isinstance(policy, str):
            policy = tuple(policy)

        allowed = ('ewc',) if self.method == 'ewc' else WS_POLICIES
        for p in ([policy] if isinstance(policy, str) else policy):
            if p not in allowed:
                raise FusionError('Policy {0!r} is not valid for method {1!r} (allowed: {2})'.format(
                    p, self.method, allowed))

        if self.epsilon < 0:
            raise FusionError('epsilon must be nonnegative')

        object.__setattr__(self, 'hidden_policy', policy)
        if self.align is None:
            object.__setattr__(self, 'align', self.method == 'ewc')

    @property
    def name(self):
        if self.method == 'ewc':
            return 'ewc' if self.align else 'ewc-noalign'

        name = 'ws' if self.hidden_policy == 'sum' else 'ws-' + '-'.join(
            [self.hidden_policy] if isinstance(self.hidden_policy, str) else self.hidden_policy)
        return name + ('-aligned' if self.align else '')

    def policies(self, n_hidden):
        if isinstance(self.hidden_policy, str):
            return [self.hidden_policy] * n_hidden
        if len(self.hidden_policy) != n_hidden:
            raise FusionError('{0} policies given for {1} hidden layers'.format(len(self.hidden_policy), n_hidden))
        return list(self.hidden_policy)

    def to_dict(self):
        d = dataclasses.asdict(self)
        if not isinstance(self.hidden_policy, str):
            d['hidden_policy'] = list(self.hidden_policy)
        return d

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


@dataclass
class FusionReport:
    method: str
    name: str
    policies: list
    aligned: bool
    alignment: list = field(default_factory=list)
    weight_means: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    accuracy: Optional[float] = None
    confusion: Optional[dict] = None

    def to_dict(self):
        return dataclasses.asdict(self)


def _check_layers(layer_a, layer_b):
    if layer_a.weights.shape != layer_b.weights.shape:
        raise ArchitectureMismatch('Layer shapes differ: {0} vs {1}'.format(layer_a.weights.shape,
                                                                             layer_b.weights.shape))
    if layer_a.activation != layer_b.activation:
        raise ArchitectureMismatch('Layer activations differ: {0} vs {1}'.format(layer_a.activation,
                                                                                  layer_b.activation))


def ws_fuse_layer(layer_a: DenseLayer, layer_b: DenseLayer, policy='sum'):
    """
    Weights summation: theta_A + theta_B element-wise ('sum'), or (theta_A + theta_B) / 2 for layers fine-tuned
    from a common origin ('average'). Biases follow the same rule.
    """
    _check_layers(layer_a, layer_b)

    if policy == 'sum':
        return DenseLayer(layer_a.weights + layer_b.weights, layer_a.bias + layer_b.bias, layer_a.activation)
    if policy == 'average':
        return DenseLayer((layer_a.weights + layer_b.weights) / 2, (layer_a.bias + layer_b.bias) / 2,
                          layer_a.activation)

    raise FusionError('Unknown weights summation policy {0!r}'.format(policy))


def _ewc_mean(theta_a, theta_b, f_a, f_b, epsilon):
    den = f_a + f_b
    guarded = (den >= epsilon) & (den > 0)
    safe = np.where(guarded, den, 1.)

    # theta_A + w_B (theta_B - theta_A) is exact when theta_A == theta_B or F_B == 0
    w_b = np.where(guarded, f_b / safe, .5)
    return theta_a + w_b * (theta_b - theta_a)


def ewc_fuse_layer(layer_a: DenseLayer, layer_b: DenseLayer, fisher_a: LayerParams, fisher_b: LayerParams,
                   epsilon=EPSILON):
    """
    Elastic weight consolidation: theta_F = (F_A theta_A + F_B theta_B) / (F_A + F_B) element-wise, falling back to
    the plain average where F_A + F_B < epsilon.
    """
    _check_layers(layer_a, layer_b)
    for f, layer in ((fisher_a, layer_a), (fisher_b, layer_b)):
        if f.weights.shape != layer.weights.shape or f.bias.shape != layer.bias.shape:
            raise ArchitectureMismatch('Fisher values are not shape-parallel to the layer')
        if np.any(f.weights < 0) or np.any(f.bias < 0):
            raise FusionError('Fisher values must be nonnegative')

    return DenseLayer(_ewc_mean(layer_a.weights, layer_b.weights, fisher_a.weights, fisher_b.weights, epsilon),
                      _ewc_mean(layer_a.bias, layer_b.bias, fisher_a.bias, fisher_b.bias, epsilon),
                      layer_a.activation)


def concat_output(head_a: DenseLayer, head_b: DenseLayer, labels_a, labels_b):
    """
    Stack the output layer of A over the output layer of B so the fused network scores the union of both class
    sets (A's classes first).

    Returns
    -------
    (head, labels): 2-tuple
        The fused output layer and the merged class labels.
    """
    labels_a, labels_b = tuple(labels_a), tuple(labels_b)

    if head_a.in_width != head_b.in_width:
        raise ArchitectureMismatch('Output layers have different input widths: {0} vs {1}'.format(
            head_a.in_width, head_b.in_width))
    if head_a.activation != head_b.activation:
        raise ArchitectureMismatch('Output activations differ: {0} vs {1}'.format(head_a.activation,
                                                                                   head_b.activation))
    shared = set(labels_a) & set(labels_b)
    if shared:
        raise FusionError('Constituents must have disjoint classes, both have {0}'.format(sorted(shared)))

    head = DenseLayer(np.vstack((head_a.weights, head_b.weights)), np.concatenate((head_a.bias, head_b.bias)),
                      head_a.activation)
    return head, labels_a + labels_b


def _pad_matrix(a, shape):
    out = np.zeros(shape)
    out[:a.shape[0], :a.shape[1]] = a
    return out


def pad_to_match(net, hidden_widths):
    """
    Grow the hidden layers of a network (or of a shape-parallel ParamStack such as its Fisher values) to the given
    widths by adding nodes whose incoming and outgoing weights and biases are zero. The network function does not
    change.
    """
    current = [l.weights.shape[0] for l in net.layers[:-1]]
    hidden_widths = [int(w) for w in hidden_widths]

    if len(hidden_widths) != len(current):
        raise ArchitectureMismatch('{0} widths given for {1} hidden layers'.format(len(hidden_widths), len(current)))
    if any(t < c for t, c in zip(hidden_widths, current)):
        raise ArchitectureMismatch('Cannot shrink hidden layers {0} to {1}'.format(current, hidden_widths))

    in_widths = [net.layers[0].weights.shape[1]] + hidden_widths
    out_widths = hidden_widths + [net.layers[-1].weights.shape[0]]

    layers = []
    for layer, n_in, n_out in zip(net.layers, in_widths, out_widths):
        bias = np.zeros(n_out)
        bias[:layer.bias.shape[0]] = layer.bias
        layers.append(dataclasses.replace(layer, weights=_pad_matrix(layer.weights, (n_out, n_in)), bias=bias))

    return net.replace_layers(layers)


def pad_model(model: TrainedModel, hidden_widths):
    fisher = None if model.fisher is None else pad_to_match(model.fisher, hidden_widths)
    return dataclasses.replace(model, network=pad_to_match(model.network, hidden_widths), fisher=fisher)


def weight_means(net: Network):
    """
    Per-layer mean, standard deviation and standard error of the mean of the weights (biases excluded), with a flag
    set when |mean| exceeds three standard errors.
    """

    stats = weight_mean_report(net)
    return [dict(s._asdict(), nonzero_mean=bool(abs(s.mean) > 3 * s.stderr)) for s in stats]


def fuse_pipeline(model_a: TrainedModel, model_b: TrainedModel, spec: FusionSpec):
    """
    Fuse two constituents trained on disjoint classes into one network.

    ewc: align B to A, fuse every hidden layer by Fisher-weighted averaging, concatenate the output layers.
    ws: fuse every hidden layer by its policy (no alignment unless spec.align), concatenate the output layers.

    Returns
    -------
    (fused, report): 2-tuple
        The fused TrainedModel and a FusionReport. The fused Fisher values (F_A + F_B on hidden layers, the source
        values on the output rows) are advisory.
    """
    net_a, net_b = model_a.network, model_b.network
    check_compatible(net_a, net_b)

    if (spec.method == 'ewc' or spec.align) and (model_a.fisher is None or model_b.fisher is None):
        raise MissingFisherError('Method {0!r} with align={1} needs Fisher values on both models'.format(
            spec.method, spec.align))

    policies = spec.policies(net_a.n_hidden)
    report = FusionReport(spec.method, spec.name, policies, bool(spec.align))

    if spec.method == 'ws':
        for key, net in (('A', net_a), ('B', net_b)):
            means = weight_means(net)
            report.weight_means[key] = means
            for layer, s in enumerate(means):
                if s['nonzero_mean']:
                    message = 'network {0} layer {1}: weight mean {2:.3g} is more than 3 standard errors ' \
                              'from zero'.format(key, layer, s['mean'])
                    report.warnings.append(message)
                    warnings.warn(message, ZeroMeanWarning)

    if spec.align and net_a.n_hidden:
        model_b, solutions = align_networks(model_a, model_b, include_postsynaptic=spec.include_postsynaptic,
                                            tie_break=spec.tie_break)
        net_b = model_b.network
        report.alignment = [dict(layer=l, **s.to_dict()) for l, s in enumerate(solutions)]

    layers = []
    for l, policy in enumerate(policies):
        if policy == 'ewc':
            layers.append(ewc_fuse_layer(net_a.layers[l], net_b.layers[l], model_a.fisher.layers[l],
                                         model_b.fisher.layers[l], spec.epsilon))
        else:
            layers.append(ws_fuse_layer(net_a.layers[l], net_b.layers[l], policy))

    head, labels = concat_output(net_a.head, net_b.head, net_a.class_labels, net_b.class_labels)
    fused_net = Network(tuple(layers) + (head,), labels)

    fisher = None
    if model_a.fisher is not None and model_b.fisher is not None:
        hidden = [LayerParams(fa.weights + fb.weights, fa.bias + fb.bias)
                  for fa, fb in zip(model_a.fisher.layers[:-1], model_b.fisher.layers[:-1])]
        fa, fb = model_a.fisher.layers[-1], model_b.fisher.layers[-1]
        fisher = FisherDiag(tuple(hidden) + (LayerParams(np.vstack((fa.weights, fb.weights)),
                                                         np.concatenate((fa.bias, fb.bias))),))

    meta = {
        'fusion': spec.to_dict(),
        'constituent_classes': [list(net_a.class_labels), list(net_b.class_labels)],
        'hyper': model_a.meta.get('hyper', {}),
    }

    logger.info('fused %s: %d hidden layers, %d classes', spec.name, fused_net.n_hidden, len(labels))
    return TrainedModel(fused_net, fisher, meta), report
