import itertools

import numpy as np
import pytest

from pykfusion.fusion.align import (AssignmentError, ArchitectureMismatch, MissingFisherError, pair_cost,
                                    solve_assignment, permute_hidden, align_networks)
from pykfusion.model.fisher import FisherDiag
from pykfusion.model.network import DenseLayer, LayerParams, predict_proba
from pykfusion.model.training import TrainedModel
from pykfusion.tests.helpers import random_network, random_inputs


def random_fisher(net, seed=0):
    rng = np.random.default_rng(seed)
    return FisherDiag(tuple(LayerParams(rng.uniform(0.1, 1., l.weights.shape), rng.uniform(0.1, 1., l.out_width))
                            for l in net.layers))


def random_model(widths, seed=0):
    net = random_network(widths, ['relu'] * (len(widths) - 2) + ['softmax'], seed=seed)
    return TrainedModel(net, random_fisher(net, seed + 100))


def shuffled(model, seed=0):
    rng = np.random.default_rng(seed)
    net, fisher = model.network, model.fisher
    for l, width in enumerate(net.hidden_widths):
        perm = rng.permutation(width)
        net, fisher = permute_hidden(net, l, perm), permute_hidden(fisher, l, perm)
    return TrainedModel(net, fisher)


def assert_same_network(a, b):
    for la, lb in zip(a.layers, b.layers):
        assert np.array_equal(la.weights, lb.weights)
        assert np.array_equal(la.bias, lb.bias)


def single_node(weight, bias):
    return DenseLayer(np.array([[weight]]), np.array([bias]), 'relu')


def ones(weight=1., bias=1.):
    return LayerParams(np.array([[weight]]), np.array([bias]))


def test_pair_cost_examples():
    cost = pair_cost(single_node(1., 0.), single_node(3., 0.), ones(), ones())
    assert cost[0, 0] == pytest.approx(2.)

    # nothing is lost when B's parameter is unimportant
    cost = pair_cost(single_node(1., 0.), single_node(3., 0.), ones(), ones(0., 1.))
    assert cost[0, 0] == 0.


def test_pair_cost_is_zero_for_identical_nodes():
    model = random_model([5, 4, 3])
    layer, fisher = model.network.layers[0], model.fisher.layers[0]

    cost = pair_cost(layer, layer, fisher, fisher)

    assert cost.shape == (4, 4)
    assert np.all(np.diag(cost) == 0.)
    assert np.all(cost[~np.eye(4, dtype=bool)] > 0.)


def test_pair_cost_with_postsynaptic_weights():
    model = random_model([5, 4, 3])
    net, fisher = model.network, model.fisher

    pre = pair_cost(net.layers[0], net.layers[0], fisher.layers[0], fisher.layers[0])
    both = pair_cost(net.layers[0], net.layers[0], fisher.layers[0], fisher.layers[0],
                     net.layers[1], net.layers[1], fisher.layers[1], fisher.layers[1])

    assert np.all(both >= pre)
    assert np.all(np.diag(both) == 0.)


def test_pair_cost_rejects_mismatched_layers():
    model = random_model([5, 4, 3])
    other = random_model([5, 3, 3])
    with pytest.raises(AssignmentError):
        pair_cost(model.network.layers[0], other.network.layers[0], model.fisher.layers[0], other.fisher.layers[0])


def test_solve_assignment_examples():
    solution = solve_assignment([[4., 1., 3.], [2., 0., 5.], [3., 2., 2.]])
    assert list(solution.permutation) == [1, 0, 2]
    assert solution.total_cost == 5.
    assert solution.identity_cost == 6.

    assert solve_assignment([[7.]]).total_cost == 7.


def test_solve_assignment_is_optimal():
    rng = np.random.default_rng(0)
    perms = {n: np.array(list(itertools.permutations(range(n)))) for n in range(2, 8)}

    for _ in range(200):
        n = int(rng.integers(2, 8))
        cost = rng.random((n, n))

        best = cost[np.arange(n), perms[n]].sum(axis=1).min()
        solution = solve_assignment(cost)

        assert sorted(solution.permutation) == list(range(n))
        assert solution.total_cost == pytest.approx(best, rel=0, abs=1e-12)

    # ties between integer costs
    for _ in range(50):
        n = int(rng.integers(2, 8))
        cost = rng.integers(0, 4, size=(n, n)).astype(float)
        assert solve_assignment(cost).total_cost == cost[np.arange(n), perms[n]].sum(axis=1).min()


@pytest.mark.parametrize('cost', [np.ones((2, 3)), [[1., -1.], [0., 0.]], [[np.inf, 0.], [0., 0.]]])
def test_solve_assignment_rejects(cost):
    with pytest.raises(AssignmentError):
        solve_assignment(cost)


def test_permute_hidden_preserves_function():
    net = random_network([4, 6, 5, 3], ['relu', 'sigmoid', 'softmax'], seed=1)
    X = random_inputs(10, 4)
    perm = np.random.default_rng(2).permutation(6)

    moved = permute_hidden(net, 0, perm)

    assert np.array_equal(moved.layers[0].weights, net.layers[0].weights[perm])
    assert np.allclose(predict_proba(moved, X), predict_proba(net, X), rtol=0, atol=1e-12)

    identity = permute_hidden(net, 1, np.arange(5))
    assert_same_network(identity, net)

    back = permute_hidden(moved, 0, np.argsort(perm))
    assert_same_network(back, net)


def test_permute_hidden_rejects():
    net = random_network([4, 6, 3], ['relu', 'softmax'])
    with pytest.raises(AssignmentError):
        permute_hidden(net, 1, np.arange(3))
    with pytest.raises(AssignmentError):
        permute_hidden(net, 0, [0, 0, 1, 2, 3, 4])


@pytest.mark.parametrize('widths', [[5, 7, 3], [5, 6, 4, 3]])
def test_alignment_recovers_permuted_copy(widths):
    model_a = random_model(widths, seed=3)
    model_b = shuffled(model_a, seed=4)

    aligned, solutions = align_networks(model_a, model_b)

    assert_same_network(aligned.network, model_a.network)
    assert all(s.total_cost == pytest.approx(0., abs=1e-12) for s in solutions)
    assert len(solutions) == len(widths) - 2


def test_alignment_recovers_trained_network(trained_pair):
    model_a, _ = trained_pair
    aligned, _ = align_networks(model_a, shuffled(model_a, seed=5))

    assert_same_network(aligned.network, model_a.network)


def test_self_alignment_is_identity():
    model = random_model([5, 6, 4, 3], seed=6)
    _, solutions = align_networks(model, model)

    assert all(s.is_identity() for s in solutions)


def test_alignment_never_increases_cost_and_is_idempotent():
    model_a = random_model([6, 8, 3], seed=7)
    model_b = random_model([6, 8, 3], seed=8)

    aligned, (solution,) = align_networks(model_a, model_b)
    assert solution.total_cost <= solution.identity_cost

    _, (again,) = align_networks(model_a, aligned)
    assert again.is_identity()
    assert again.total_cost == pytest.approx(solution.total_cost)


def test_postsynaptic_cost_ignores_order_and_width_of_next_layer():
    model_a, model_b = random_model([5, 4, 3], seed=1), random_model([5, 4, 2], seed=2)
    net_a, net_b = model_a.network, model_b.network
    fisher_a, fisher_b = model_a.fisher, model_b.fisher

    cost = pair_cost(net_a.layers[0], net_b.layers[0], fisher_a.layers[0], fisher_b.layers[0],
                     net_a.layers[1], net_b.layers[1], fisher_a.layers[1], fisher_b.layers[1])
    assert cost.shape == (4, 4)

    reversed_head = DenseLayer(net_a.layers[1].weights[::-1], net_a.layers[1].bias[::-1], 'softmax')
    reversed_fisher = LayerParams(fisher_a.layers[1].weights[::-1], fisher_a.layers[1].bias[::-1])
    again = pair_cost(net_a.layers[0], net_b.layers[0], fisher_a.layers[0], fisher_b.layers[0],
                      reversed_head, net_b.layers[1], reversed_fisher, fisher_b.layers[1])
    assert np.allclose(again, cost, rtol=1e-12, atol=0)


@pytest.mark.parametrize('widths', [[5, 7, 3], [5, 6, 4, 3]])
def test_postsynaptic_alignment_recovers_permuted_copy(widths):
    model_a = random_model(widths, seed=3)
    model_b = shuffled(model_a, seed=4)

    aligned, solutions = align_networks(model_a, model_b, include_postsynaptic=True)

    assert_same_network(aligned.network, model_a.network)
    assert all(s.total_cost == pytest.approx(0., abs=1e-12) for s in solutions)


def test_postsynaptic_alignment_with_output_heads_of_different_widths():
    model_a = random_model([5, 6, 4, 3], seed=5)
    model_b = random_model([5, 6, 4, 2], seed=6)

    aligned, solutions = align_networks(model_a, model_b, include_postsynaptic=True)

    assert len(solutions) == 2
    assert all(s.total_cost <= s.identity_cost for s in solutions)
    assert aligned.fisher.matches(aligned.network)


def test_alignment_keeps_fisher_parallel():
    model_a = random_model([5, 7, 3], seed=9)
    model_b = random_model([5, 7, 3], seed=10)

    aligned, (solution,) = align_networks(model_a, model_b)

    assert np.array_equal(aligned.fisher.layers[0].weights, model_b.fisher.layers[0].weights[solution.permutation])
    assert np.array_equal(aligned.fisher.layers[1].weights,
                          model_b.fisher.layers[1].weights[:, solution.permutation])


def test_linear_networks_need_no_alignment():
    model_a, model_b = random_model([4, 3], seed=1), random_model([4, 3], seed=2)
    aligned, solutions = align_networks(model_a, model_b)

    assert solutions == []
    assert_same_network(aligned.network, model_b.network)


def test_alignment_errors():
    model = random_model([5, 7, 3])

    with pytest.raises(ArchitectureMismatch):
        align_networks(model, random_model([5, 6, 3]))
    with pytest.raises(ArchitectureMismatch):
        align_networks(model, random_model([4, 7, 3]))
    with pytest.raises(MissingFisherError):
        align_networks(model, TrainedModel(model.network))
