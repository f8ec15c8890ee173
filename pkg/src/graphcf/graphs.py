"""Graph containers: plain undirected graphs and one-hot categorical graphs."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np


class GraphError(ValueError):
    """Raised for malformed graphs or incompatible graph operations."""


@dataclass(frozen=True)
class SimpleGraph:
    """Undirected simple graph on nodes ``0..n-1``.

    Edges are stored as sorted pairs ``(i, j)`` with ``i < j``.
    """

    n: int
    edges: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if self.n < 1:
            raise GraphError(f"node count must be >= 1, got {self.n}")
        norm = set()
        for u, v in self.edges:
            if u == v:
                raise GraphError(f"self-loop at node {u}")
            if not (0 <= u < self.n and 0 <= v < self.n):
                raise GraphError(f"edge ({u}, {v}) out of range for n={self.n}")
            norm.add((min(u, v), max(u, v)))
        object.__setattr__(self, "edges", frozenset(norm))

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]]) -> "SimpleGraph":
        return cls(n, frozenset(edges))

    @classmethod
    def from_masks(cls, masks: list[int]) -> "SimpleGraph":
        n = len(masks)
        return cls(n, frozenset((i, j) for i in range(n) for j in range(i + 1, n) if masks[i] >> j & 1))

    @property
    def m(self) -> int:
        return len(self.edges)

    def masks(self) -> list[int]:
        """Neighbourhood bitmask per node."""
        out = [0] * self.n
        for u, v in self.edges:
            out[u] |= 1 << v
            out[v] |= 1 << u
        return out

    def degrees(self) -> list[int]:
        return [bin(x).count("1") for x in self.masks()]

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n, self.n), dtype=np.uint8)
        for u, v in self.edges:
            a[u, v] = a[v, u] = 1
        return a

    def relabel(self, perm) -> "SimpleGraph":
        """Return the graph with node ``i`` renamed to ``perm[i]``."""
        return SimpleGraph(self.n, frozenset((perm[u], perm[v]) for u, v in self.edges))

    def add_edge(self, u: int, v: int) -> "SimpleGraph":
        return SimpleGraph(self.n, self.edges | {(min(u, v), max(u, v))})

    def remove_edge(self, u: int, v: int) -> "SimpleGraph":
        return SimpleGraph(self.n, self.edges - {(min(u, v), max(u, v))})


@dataclass
class GraphInstance:
    """Categorical graph with one-hot node matrix ``X`` (n, a) and edge tensor ``E`` (n, n, b).

    Edge category 0 means "no edge"; the diagonal is always category 0.
    """

    X: np.ndarray
    E: np.ndarray
    y: Optional[int] = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.E = np.asarray(self.E, dtype=np.float64)
        check_instance(self.X, self.E)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def a(self) -> int:
        return self.X.shape[1]

    @property
    def b(self) -> int:
        return self.E.shape[2]

    def node_labels(self) -> np.ndarray:
        return self.X.argmax(-1)

    def edge_labels(self) -> np.ndarray:
        return self.E.argmax(-1)

    @classmethod
    def from_labels(cls, nodes, edges, a: int, b: int, y: Optional[int] = None) -> "GraphInstance":
        """Build from integer category arrays (``nodes`` (n,), ``edges`` (n, n) symmetric)."""
        nodes = np.asarray(nodes)
        edges = np.asarray(edges)
        return cls(np.eye(a)[nodes], np.eye(b)[edges], y)

    def __eq__(self, other):
        if not isinstance(other, GraphInstance):
            return NotImplemented
        return (self.y == other.y and self.X.shape == other.X.shape and self.E.shape == other.E.shape
                and np.array_equal(self.X, other.X) and np.array_equal(self.E, other.E))


def check_instance(X: np.ndarray, E: np.ndarray) -> None:
    if X.ndim != 2 or E.ndim != 3:
        raise GraphError(f"expected X (n, a) and E (n, n, b), got {X.shape} and {E.shape}")
    n, a = X.shape
    if n < 1 or a < 1:
        raise GraphError("need n >= 1 and a >= 1")
    if E.shape[:2] != (n, n) or E.shape[2] < 2:
        raise GraphError(f"E must be ({n}, {n}, b>=2), got {E.shape}")
    for name, arr in (("X", X), ("E", E)):
        if not np.all((arr == 0) | (arr == 1)) or not np.all(arr.sum(-1) == 1):
            raise GraphError(f"{name} is not one-hot")
    if not np.array_equal(E, E.transpose(1, 0, 2)):
        raise GraphError("E is not symmetric")
    if not np.all(E[np.arange(n), np.arange(n), 0] == 1):
        raise GraphError("diagonal of E must be category 0")


def is_connected(g: SimpleGraph) -> bool:
    masks = g.masks()
    seen = 1
    frontier = 1
    while frontier:
        nxt = 0
        for v in range(g.n):
            if frontier >> v & 1:
                nxt |= masks[v]
        frontier = nxt & ~seen
        seen |= nxt
    return seen == (1 << g.n) - 1


def to_dense(g: SimpleGraph, y: Optional[int] = None) -> GraphInstance:
    labels = g.adjacency().astype(np.int64)
    return GraphInstance.from_labels(np.zeros(g.n, dtype=np.int64), labels, a=1, b=2, y=y)


def from_dense(G: GraphInstance) -> SimpleGraph:
    if G.a != 1 or G.b != 2:
        raise GraphError(f"from_dense needs a=1, b=2; got a={G.a}, b={G.b}")
    lab = G.edge_labels()
    n = G.n
    return SimpleGraph(n, frozenset((i, j) for i in range(n) for j in range(i + 1, n) if lab[i, j] == 1))


def cycle_graph(n: int) -> SimpleGraph:
    return SimpleGraph(n, frozenset((i, (i + 1) % n) for i in range(n)))


def path_graph(n: int) -> SimpleGraph:
    return SimpleGraph(n, frozenset((i, i + 1) for i in range(n - 1)))


def complete_graph(n: int) -> SimpleGraph:
    return SimpleGraph(n, frozenset((i, j) for i in range(n) for j in range(i + 1, n)))


def complete_bipartite(p: int, q: int) -> SimpleGraph:
    return SimpleGraph(p + q, frozenset((i, p + j) for i in range(p) for j in range(q)))


def random_graph(n: int, p: float, rng: np.random.Generator) -> SimpleGraph:
    return SimpleGraph(n, frozenset((i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < p))
