"""
Checks of the statistics behind weights summation.

Summing two networks' presynaptic sums keeps the sign of the native network's sum with probability P^eq, which is 3/4
when both terms are i.i.d. zero-mean normal with equal variance. The argument needs zero-mean weights and holds best
when the native network's term dominates the foreign one.
"""
import logging
import sys
from collections import namedtuple
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

logger = logging.getLogger(__name__)

PEQ_BATCH = 1 << 20

# Stands in for an infinite ratio in JSON output
RATIO_SENTINEL = sys.float_info.max

PeqEstimate = namedtuple('PeqEstimate', ['estimate', 'n_equal', 'n_flipped', 'stderr'])
WeightStats = namedtuple('WeightStats', ['layer', 'mean', 'std', 'stderr', 'n'])


class DiagnosticsError(ValueError):
    pass


def estimate_peq_counts(n_samples, sigma_a, sigma_b, seed=None):
    """
    Monte Carlo counts of sign(a + b) == sign(a) for a ~ N(0, sigma_a^2) and b ~ N(0, sigma_b^2).

    Samples are drawn in batches, each with its own child of the seed's SeedSequence, so the result depends only on
    (n_samples, sigma_b / sigma_a, seed).

    Returns
    -------
    estimate: PeqEstimate
        n_equal + n_flipped == n_samples.
    """
    n_samples = int(n_samples)
    if n_samples < 1:
        raise DiagnosticsError('n_samples must be at least 1, got {0}'.format(n_samples))
    if sigma_a < 0 or sigma_b < 0:
        raise DiagnosticsError('Standard deviations must be nonnegative')
    if sigma_a == 0 and sigma_b == 0:
        raise DiagnosticsError('At least one standard deviation must be positive')

    n_batches = -(-n_samples // PEQ_BATCH)
    children = np.random.SeedSequence(seed).spawn(n_batches)

    n_equal = 0
    for b, child in enumerate(children):
        size = min(PEQ_BATCH, n_samples - b * PEQ_BATCH)
        rng = np.random.default_rng(child)
        z_a = rng.standard_normal(size)
        z_b = rng.standard_normal(size)

        if sigma_a == 0:
            # a is identically zero, so only b == 0 keeps the sign
            same = np.sign(z_b) == 0
        else:
            ratio = sigma_b / sigma_a
            same = np.sign(z_a + ratio * z_b) == np.sign(z_a)
        n_equal += int(np.count_nonzero(same))

    p = n_equal / n_samples
    return PeqEstimate(p, n_equal, n_samples - n_equal, float(np.sqrt(p * (1 - p) / n_samples)))


def estimate_peq(n_samples, sigma_a, sigma_b, seed=None):
    return estimate_peq_counts(n_samples, sigma_a, sigma_b, seed).estimate


def weight_mean_report(net):
    """
    Sample mean, standard deviation and standard error of the mean over the weights of every layer (biases
    excluded).
    """
    stats = []
    for l, layer in enumerate(net.layers):
        w = layer.weights.ravel()
        std = float(np.std(w))
        stats.append(WeightStats(l, float(np.mean(w)), std, std / np.sqrt(w.size), int(w.size)))
    return stats


def dominance_report(model_a, model_b, probes):
    """
    For every node of the first hidden layer, the ratio of the mean absolute presynaptic sum under A's parameters to
    the mean absolute presynaptic sum under B's parameters, over probes of A's classes.

    A node whose B sum vanishes on every probe gets an infinite ratio (1 if both vanish).
    """
    net_a = getattr(model_a, 'network', model_a)
    net_b = getattr(model_b, 'network', model_b)

    if probes.n_samples == 0:
        raise DiagnosticsError('The probe set is empty')
    if net_a.widths[:-1] != net_b.widths[:-1] or net_a.activations != net_b.activations:
        raise DiagnosticsError('Architectures differ: {0} vs {1}'.format(net_a.widths, net_b.widths))
    if probes.n_features != net_a.n_features:
        raise DiagnosticsError('Probes have {0} features, the networks expect {1}'.format(
            probes.n_features, net_a.n_features))
    foreign = set(np.unique(probes.labels).tolist()) - set(net_a.class_labels)
    if foreign:
        raise DiagnosticsError('Probes must come from the classes of A, found {0}'.format(sorted(foreign)))

    layer_a, layer_b = net_a.layers[0], net_b.layers[0]
    X = probes.features

    native = np.mean(np.abs(X @ layer_a.weights.T + layer_a.bias), axis=0)
    foreign_sum = np.mean(np.abs(X @ layer_b.weights.T + layer_b.bias), axis=0)

    ratios = np.full(native.shape, np.inf)
    nonzero = foreign_sum > 0
    ratios[nonzero] = native[nonzero] / foreign_sum[nonzero]
    ratios[~nonzero & (native == 0)] = 1.

    return ratios


@dataclass
class DiagReport:
    peq: Optional[PeqEstimate] = None
    weight_means: dict = field(default_factory=dict)
    dominance: Optional[np.ndarray] = None

    @property
    def median_dominance(self):
        return None if self.dominance is None else float(np.median(self.dominance))

    def to_dict(self):
        d = {'weight_means': {k: [s._asdict() for s in v] for k, v in self.weight_means.items()}}

        if self.peq is not None:
            d['peq'] = self.peq._asdict()
        if self.dominance is not None:
            d['dominance'] = {
                'ratios': np.minimum(self.dominance, RATIO_SENTINEL).tolist(),
                'median': min(self.median_dominance, RATIO_SENTINEL),
            }
        return d
