from collections import deque

import numpy as np
import pytest

from jointopt.errors import InvalidArgument, PreconditionViolation
from jointopt.graph import (
    Topology,
    TopologySequence,
    WeightMatrix,
    generate_topology,
    is_connected,
    metropolis_weights,
    spanning_tree,
    validate_weights,
)


def _bfs_reachable(m, edges):
    adj = {i: set() for i in range(m)}
    for a, b in edges:
        adj[a].add(b)
        adj[b].add(a)
    seen = {0}
    q = deque([0])
    while q:
        u = q.popleft()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                q.append(v)
    return len(seen) == m


def _is_forest_spanning(m, edges):
    parent = list(range(m))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in edges:
        ra, rb = find(a), find(b)
        if ra == rb:
            return False
        parent[ra] = rb
    return len(edges) == m - 1


def test_complete_three_nodes():
    g = generate_topology("complete", 3, 0, seed=99)
    assert g.edges == {(0, 1), (0, 2), (1, 2)}


def test_ring_four_nodes():
    g = generate_topology("ring", 4, 0, seed=5)
    assert g.edges == {(0, 1), (1, 2), (2, 3), (0, 3)}
    assert is_connected(g)


def test_random_connected_example():
    g = generate_topology("random_connected", 6, 7, seed=42)
    assert g.m == 6 and g.epoch == 7
    assert _bfs_reachable(6, g.edges)
    assert is_connected(g)


def test_generate_is_deterministic():
    a = generate_topology("random_connected", 7, 600, seed=3, edge_prob=0.4)
    b = generate_topology("random_connected", 7, 600, seed=3, edge_prob=0.4)
    assert a == b
    seq = TopologySequence("random_connected", 7, seed=3, edge_prob=0.4)
    assert seq.topology(600) == a


def test_zero_nodes_rejected():
    with pytest.raises(InvalidArgument):
        generate_topology("ring", 0)
    with pytest.raises(InvalidArgument):
        generate_topology("star", 3)


def test_disconnected_detected():
    g = Topology.from_edges(3, [(0, 1)])
    assert not is_connected(g)
    with pytest.raises(PreconditionViolation):
        spanning_tree(g)
    with pytest.raises(PreconditionViolation):
        metropolis_weights(g)


def test_random_connected_many_seeds():
    for seed in range(100):
        g = generate_topology("random_connected", 1 + seed % 12, seed, seed=seed)
        assert _bfs_reachable(g.m, g.edges)
        assert is_connected(g)


def test_spanning_tree_examples():
    assert spanning_tree(generate_topology("complete", 3)) == [(0, 1), (0, 2)]
    ring = spanning_tree(generate_topology("ring", 4))
    assert ring == [(0, 1), (0, 3), (1, 2)]
    assert _is_forest_spanning(4, ring)
    assert spanning_tree(generate_topology("ring", 1)) == []


@pytest.mark.parametrize("kind", ["complete", "ring", "random_connected"])
def test_spanning_tree_is_tree(kind):
    for seed in range(30):
        m = 2 + seed % 10
        g = generate_topology(kind, m, seed, seed=seed)
        tree = spanning_tree(g)
        assert len(tree) == m - 1
        assert set(tree) <= g.edges
        assert _is_forest_spanning(m, tree)


def test_metropolis_complete_is_uniform():
    w = metropolis_weights(generate_topology("complete", 3))
    assert np.allclose(w.entries, 1.0 / 3.0, atol=0, rtol=1e-15)


def test_metropolis_ring_four():
    g = generate_topology("ring", 4)
    w = metropolis_weights(g)
    expected = np.array([[1, 1, 0, 1], [1, 1, 1, 0], [0, 1, 1, 1], [1, 0, 1, 1]]) / 3.0
    assert np.allclose(w.entries, expected, atol=1e-15)
    assert np.allclose(w.entries.sum(axis=0), 1.0) and np.allclose(w.entries.sum(axis=1), 1.0)
    assert validate_weights(w, g) == []


def test_metropolis_single_node():
    w = metropolis_weights(generate_topology("complete", 1))
    assert w.entries.tolist() == [[1.0]]


def test_generated_weights_all_valid():
    for kind in ("complete", "ring", "random_connected"):
        for m in range(1, 13):
            for seed in range(100 if kind == "random_connected" else 1):
                g = generate_topology(kind, m, seed, seed=seed)
                assert is_connected(g)
                w = metropolis_weights(g)
                assert validate_weights(w, g) == []
                assert w.eta >= 1.0 / m - 1e-15


def test_validate_reports_zero_diagonal():
    g = generate_topology("complete", 2)
    w = WeightMatrix(np.array([[0.0, 1.0], [1.0, 0.0]]), 0.5)
    report = validate_weights(w, g)
    assert any("diagonal" in r for r in report)


def test_validate_reports_column_sum():
    g = generate_topology("complete", 3)
    a = np.array([[0.6, 0.2, 0.2], [0.2, 0.6, 0.2], [0.4, 0.2, 0.4]])
    assert np.allclose(a.sum(axis=1), 1.0)
    assert np.isclose(a.sum(axis=0)[0], 1.2)
    report = validate_weights(WeightMatrix(a, 0.2), g)
    assert any("column-sum" in r for r in report)
    assert not any("row-sum" in r for r in report)


def test_validate_reports_sparsity_mismatch():
    g = generate_topology("ring", 4)
    a = np.full((4, 4), 0.25)
    report = validate_weights(WeightMatrix(a, 0.25), g)
    assert any("sparsity" in r for r in report)


def test_validate_dimension_mismatch():
    with pytest.raises(InvalidArgument):
        validate_weights(WeightMatrix(np.eye(2), 1.0), generate_topology("ring", 3))


def test_mass_conservation(rng):
    for seed in range(50):
        g = generate_topology("random_connected", 2 + seed % 8, seed, seed=seed)
        W = metropolis_weights(g).entries
        x = rng.standard_normal((g.m, 3))
        assert np.allclose((W @ x).sum(axis=0), x.sum(axis=0), atol=1e-10)


def test_static_sequence_freezes_epoch_zero():
    seq = TopologySequence("random_connected", 6, seed=1, static=True)
    assert np.array_equal(seq.weights(0), seq.weights(1234))
    assert seq.topology(999).edges == generate_topology("random_connected", 6, 0, seed=1).edges


def test_sequence_changes_over_time():
    seq = TopologySequence("random_connected", 8, seed=1, edge_prob=0.3)
    distinct = {seq.topology(k).edges for k in range(0, 2000, 97)}
    assert len(distinct) > 5
