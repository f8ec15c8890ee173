import numpy as np
import pytest

from graphcf.graphs import (
    GraphError,
    GraphInstance,
    SimpleGraph,
    complete_graph,
    cycle_graph,
    from_dense,
    is_connected,
    path_graph,
    random_graph,
    to_dense,
)


def test_path_is_connected():
    assert is_connected(path_graph(8))


def test_two_four_cycles_disconnected():
    g = SimpleGraph(8, frozenset(cycle_graph(4).edges | {(u + 4, v + 4) for u, v in cycle_graph(4).edges}))
    assert not is_connected(g)


def test_singleton_connected():
    assert is_connected(SimpleGraph(1))


def test_simple_graph_rejects_self_loop_and_range():
    with pytest.raises(GraphError):
        SimpleGraph(3, frozenset({(1, 1)}))
    with pytest.raises(GraphError):
        SimpleGraph(3, frozenset({(0, 3)}))


def test_edges_normalised():
    assert SimpleGraph(3, frozenset({(2, 0)})) == SimpleGraph(3, frozenset({(0, 2)}))


def test_empty_round_trip():
    g = SimpleGraph(3)
    G = to_dense(g)
    assert np.all(G.E[..., 0] == 1)
    assert from_dense(G) == g


def test_triangle_round_trip():
    g = complete_graph(3)
    G = to_dense(g)
    off = ~np.eye(3, dtype=bool)
    assert np.all(G.E[off][:, 1] == 1)
    assert from_dense(G) == g


def test_random_round_trip(rng):
    for _ in range(1000):
        g = random_graph(8, rng.uniform(), rng)
        assert from_dense(to_dense(g)) == g


def test_from_dense_rejects_other_categories():
    G = GraphInstance.from_labels(np.array([0, 1, 2]), np.zeros((3, 3), dtype=int), a=3, b=2)
    with pytest.raises(GraphError, match="a=1, b=2"):
        from_dense(G)
    G = GraphInstance.from_labels(np.zeros(3, dtype=int), np.zeros((3, 3), dtype=int), a=1, b=3)
    with pytest.raises(GraphError):
        from_dense(G)


@pytest.mark.parametrize("mutate, msg", [
    (lambda X, E: E.__setitem__((0, 1), [0, 1]), "symmetric"),
    (lambda X, E: E.__setitem__((0, 0), [0, 1]), "diagonal"),
    (lambda X, E: X.__setitem__(0, [0.5]), "one-hot"),
])
def test_instance_invariants(mutate, msg):
    X = np.ones((3, 1))
    E = np.eye(2)[np.zeros((3, 3), dtype=int)]
    mutate(X, E)
    with pytest.raises(GraphError, match=msg):
        GraphInstance(X, E)


def test_instance_needs_two_edge_categories():
    with pytest.raises(GraphError):
        GraphInstance(np.ones((2, 1)), np.ones((2, 2, 1)))
