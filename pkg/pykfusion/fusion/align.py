import dataclasses
import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from pykfusion.model.network import Network

logger = logging.getLogger(__name__)

# Upper bound on the number of elements of the temporary (rows, n, d) blocks built by pair_cost
BLOCK_ELEMENTS = 1 << 22

# Relative weight of the plain squared distance used to break ties between equally cheap pairings
TIE_BREAK = 1e-6


class AssignmentError(ValueError):
    pass


class FusionError(ValueError):
    pass


class ArchitectureMismatch(FusionError):
    pass


class MissingFisherError(FusionError):
    pass


def check_compatible(net_a: Network, net_b: Network):
    """
    Constituents must share input width, hidden widths and activations. Output heads may differ in width.
    """
    if net_a.n_features != net_b.n_features:
        raise ArchitectureMismatch('Input widths differ: {0} vs {1}'.format(net_a.n_features, net_b.n_features))
    if net_a.hidden_widths != net_b.hidden_widths:
        raise ArchitectureMismatch('Hidden widths differ: {0} vs {1}; use pad_to_match to equalize them'.format(
            net_a.hidden_widths, net_b.hidden_widths))
    if net_a.activations != net_b.activations:
        raise ArchitectureMismatch('Activations differ: {0} vs {1}'.format(net_a.activations, net_b.activations))


@dataclass(frozen=True, eq=False)
class AssignmentSolution:
    """
    Node k of network A is paired with node permutation[k] of network B.

    total_cost is the sum of the chosen cost entries and identity_cost the cost of pairing nodes by index (the
    cost before alignment).
    """
    permutation: np.ndarray
    total_cost: float
    identity_cost: float = float('nan')

    def is_identity(self):
        return bool(np.all(self.permutation == np.arange(len(self.permutation))))

    def to_dict(self):
        return {'permutation': self.permutation.tolist(), 'total_cost': self.total_cost,
                'identity_cost': self.identity_cost}


def _presynaptic(layer):
    # bias is a weight with constant input 1
    return np.hstack((layer.weights, layer.bias[:, None]))


def _fisher_cost(theta_a, theta_b, f_a, f_b):
    """
    cost[k, l] = sum_i F_A[k,i] F_B[l,i] / (F_A[k,i] + F_B[l,i]) * (theta_A[k,i] - theta_B[l,i])^2, with terms whose
    denominator vanishes contributing zero.
    """
    n, d = theta_a.shape
    cost = np.empty((n, theta_b.shape[0]))
    rows = max(1, BLOCK_ELEMENTS // max(1, theta_b.shape[0] * d))

    for start in range(0, n, rows):
        ta, fa = theta_a[start:start + rows, None, :], f_a[start:start + rows, None, :]
        num = fa * f_b[None, :, :]
        den = fa + f_b[None, :, :]
        weight = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
        cost[start:start + rows] = np.sum(weight * (ta - theta_b[None, :, :]) ** 2, axis=2)

    return cost


def _square_distance(theta_a, theta_b):
    sq = np.sum(theta_a ** 2, axis=1)[:, None] + np.sum(theta_b ** 2, axis=1)[None, :] - 2 * theta_a @ theta_b.T
    return np.maximum(sq, 0.)


def pair_cost(layer_a, layer_b, fisher_a, fisher_b, next_a=None, next_b=None, next_fisher_a=None,
              next_fisher_b=None):
    """
    Cost of pairing node k of a hidden layer of network A with node l of the same layer of network B: the increase
    of the two quadratic loss approximations when both nodes' parameters move to their Fisher-weighted mean.

    Parameters
    ----------
    layer_a, layer_b: DenseLayer
        The layers whose nodes are paired (their presynaptic weights and biases enter the cost).
    fisher_a, fisher_b: LayerParams
        Fisher values of those layers.
    next_a, next_b, next_fisher_a, next_fisher_b: DenseLayer / LayerParams or None
        If given, the outgoing (postsynaptic) weights of every node also enter the cost as one extra term: the
        root mean square of the node's outgoing weights, weighted by the mean of their Fisher values. Neither
        depends on the order or number of the next layer's units, which are not paired yet (or, in an output layer,
        stand for different classes). The next layers may differ in width.

    Returns
    -------
    cost: numpy.ndarray
        Nonnegative (n, n) matrix, rows indexing nodes of A and columns nodes of B.
    """
    if layer_a.weights.shape != layer_b.weights.shape:
        raise AssignmentError('Cannot pair layers of shapes {0} and {1}'.format(
            layer_a.weights.shape, layer_b.weights.shape))
    if fisher_a.weights.shape != layer_a.weights.shape or fisher_b.weights.shape != layer_b.weights.shape:
        raise AssignmentError('Fisher values are not shape-parallel to the layers')

    theta_a, theta_b = _presynaptic(layer_a), _presynaptic(layer_b)
    f_a, f_b = _presynaptic(fisher_a), _presynaptic(fisher_b)

    if next_a is not None:
        for nxt, nxt_fisher, layer in ((next_a, next_fisher_a, layer_a), (next_b, next_fisher_b, layer_b)):
            if nxt.weights.shape[1] != layer.out_width or nxt_fisher.weights.shape != nxt.weights.shape:
                raise AssignmentError('Postsynaptic layers do not fit the paired layers')
        theta_a = np.hstack((theta_a, _outgoing_rms(next_a)))
        theta_b = np.hstack((theta_b, _outgoing_rms(next_b)))
        f_a = np.hstack((f_a, next_fisher_a.weights.mean(axis=0)[:, None]))
        f_b = np.hstack((f_b, next_fisher_b.weights.mean(axis=0)[:, None]))

    return _fisher_cost(theta_a, theta_b, f_a, f_b)


def _outgoing_rms(nxt):
    return np.sqrt(np.mean(nxt.weights ** 2, axis=0))[:, None]


def solve_assignment(cost):
    """
    Exact minimum-cost perfect matching (Hungarian-type algorithm, O(n^3)).

    Returns
    -------
    solution: AssignmentSolution
    """
    cost = np.asarray(cost, dtype=np.float64)

    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise AssignmentError('Cost matrix must be square, got shape {0}'.format(cost.shape))
    if not np.all(np.isfinite(cost)):
        raise AssignmentError('Cost matrix entries must be finite')
    if np.any(cost < 0):
        raise AssignmentError('Cost matrix entries must be nonnegative')

    rows, cols = linear_sum_assignment(cost)
    perm = np.empty(cost.shape[0], dtype=np.intp)
    perm[rows] = cols

    idx = np.arange(cost.shape[0])
    return AssignmentSolution(perm, float(cost[idx, perm].sum()), float(np.trace(cost)))


def check_permutation(perm, n):
    perm = np.asarray(perm)
    if perm.shape != (n,) or not np.array_equal(np.sort(perm), np.arange(n)):
        raise AssignmentError('Not a permutation of {0} elements: {1}'.format(n, perm))
    return perm.astype(np.intp)


def permute_hidden(net, layer_index, perm):
    """
    Reorder the nodes of a hidden layer so that new node k is old node perm[k]: rows of the layer's weights and bias
    and columns of the next layer's weights move together, leaving the network function unchanged.

    Works on a Network and on any shape-parallel ParamStack (e.g. Fisher values).
    """
    n_layers = len(net.layers)
    if not 0 <= layer_index < n_layers - 1:
        raise AssignmentError('Layer {0} is not a hidden layer (the network has {1} hidden layers)'.format(
            layer_index, n_layers - 1))

    layer, nxt = net.layers[layer_index], net.layers[layer_index + 1]
    perm = check_permutation(perm, layer.weights.shape[0])

    layers = list(net.layers)
    layers[layer_index] = dataclasses.replace(layer, weights=layer.weights[perm], bias=layer.bias[perm])
    layers[layer_index + 1] = dataclasses.replace(nxt, weights=nxt.weights[:, perm])

    return net.replace_layers(layers)


def _tie_broken(cost, layer_a, layer_b, tie_break):
    """
    Among matchings of (numerically) minimal Fisher cost prefer the one with the smallest plain squared distance.
    Silent nodes (all Fisher values zero) cost nothing against any partner, so the Fisher cost alone leaves them
    unpaired in any meaningful sense.
    """
    exact = solve_assignment(cost)
    if tie_break <= 0:
        return exact

    distance = _square_distance(_presynaptic(layer_a), _presynaptic(layer_b))
    if np.mean(cost) == 0:
        scale = 1.
    elif np.mean(distance) > 0:
        scale = np.mean(cost) / np.mean(distance)
    else:
        return exact

    candidate = solve_assignment(cost + tie_break * scale * distance).permutation
    idx = np.arange(len(candidate))
    candidate_cost = float(cost[idx, candidate].sum())

    if candidate_cost <= exact.total_cost + 1e-12 * max(1., exact.total_cost):
        return AssignmentSolution(candidate, candidate_cost, exact.identity_cost)
    return exact


def align_networks(model_a, model_b, include_postsynaptic=False, tie_break=TIE_BREAK):
    """
    Permute the hidden nodes of B so that they pair with the corresponding nodes of A.

    Hidden layers are processed from the input side outward. When a layer's cost is built, its presynaptic weights
    are already in a consistent order because the previous layer's permutation has been applied to B (and to B's
    Fisher values).

    Parameters
    ----------
    model_a, model_b: TrainedModel
        Models with identical hidden architecture and Fisher values.
    include_postsynaptic: bool (default False)
        Add an order-independent summary of every node's outgoing weights to its cost (see pair_cost). Works for
        the last hidden layer too, whose outgoing weights feed output heads of different classes.
    tie_break: float
        Relative weight of the plain squared distance used to choose among equally cheap matchings (0 disables).

    Returns
    -------
    (aligned_b, solutions): 2-tuple
        The permuted model B and one AssignmentSolution per hidden layer.
    """
    check_compatible(model_a.network, model_b.network)
    if model_a.fisher is None or model_b.fisher is None:
        raise MissingFisherError('Alignment needs Fisher values on both models')

    net_b, fisher_b = model_b.network, model_b.fisher
    net_a, fisher_a = model_a.network, model_a.fisher
    solutions = []

    for l in range(net_a.n_hidden):
        post = {}
        if include_postsynaptic:
            post = dict(next_a=net_a.layers[l + 1], next_b=net_b.layers[l + 1],
                        next_fisher_a=fisher_a.layers[l + 1], next_fisher_b=fisher_b.layers[l + 1])

        cost = pair_cost(net_a.layers[l], net_b.layers[l], fisher_a.layers[l], fisher_b.layers[l], **post)
        solution = _tie_broken(cost, net_a.layers[l], net_b.layers[l], tie_break)

        net_b = permute_hidden(net_b, l, solution.permutation)
        fisher_b = permute_hidden(fisher_b, l, solution.permutation)
        solutions.append(solution)

        logger.info('layer %d aligned: cost %.6g before, %.6g after', l, solution.identity_cost, solution.total_cost)

    aligned = dataclasses.replace(model_b, network=net_b, fisher=fisher_b)
    return aligned, solutions
