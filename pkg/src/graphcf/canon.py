"""Canonical labelling by individualisation-refinement.

The canonical key of a graph is the lexicographically smallest upper-triangle
adjacency bitstring over all relabellings that the search tree reaches. The
search tree is label-invariant (refinement splits cells by neighbour-count
signatures, ordered by signature), so the minimum over its leaves is an
isomorphism invariant. Twins inside a target cell are explored only once,
which is sound because swapping twins is an automorphism.
"""

from __future__ import annotations

from dataclasses import dataclass

from .graphs import GraphError, SimpleGraph

MAX_EXACT_N = 10


@dataclass(frozen=True, order=True)
class CanonicalForm:
    n: int
    key: int

    def to_graph(self) -> SimpleGraph:
        """The canonical representative."""
        edges = []
        bit = self.n * (self.n - 1) // 2 - 1
        for j in range(1, self.n):
            for i in range(j):
                if self.key >> bit & 1:
                    edges.append((i, j))
                bit -= 1
        return SimpleGraph(self.n, frozenset(edges))


def _popcount(x: int) -> int:
    return bin(x).count("1")


def _refine(cells: list[list[int]], masks: list[int]) -> list[list[int]]:
    while True:
        cell_masks = [sum(1 << v for v in c) for c in cells]
        out = []
        for c in cells:
            if len(c) == 1:
                out.append(c)
                continue
            groups: dict[tuple, list[int]] = {}
            for v in c:
                sig = tuple(_popcount(masks[v] & cm) for cm in cell_masks)
                groups.setdefault(sig, []).append(v)
            out.extend(groups[s] for s in sorted(groups))
        if len(out) == len(cells):
            return out
        cells = out


def _leaf_key(order: list[int], masks: list[int]) -> int:
    key = 0
    n = len(order)
    for j in range(1, n):
        mj = masks[order[j]]
        for i in range(j):
            key = (key << 1) | (mj >> order[i] & 1)
    return key


def canonical_labelling(g: SimpleGraph, max_n: int = MAX_EXACT_N) -> tuple[int, list[int]]:
    """Return ``(key, order)`` where ``order[i]`` is the node placed at position ``i``."""
    if g.n > max_n:
        raise GraphError(f"exact canonical form is limited to n <= {max_n}, got {g.n}")
    masks = g.masks()
    best: list = [None, None]

    def search(cells):
        cells = _refine(cells, masks)
        if len(cells) == g.n:
            order = [c[0] for c in cells]
            key = _leaf_key(order, masks)
            if best[0] is None or key < best[0]:
                best[0], best[1] = key, order
            return
        ti = min((i for i, c in enumerate(cells) if len(c) > 1), key=lambda i: (len(cells[i]), i))
        target = cells[ti]
        done: list[int] = []
        for v in target:
            if any((masks[v] & ~(1 << w)) == (masks[w] & ~(1 << v)) for w in done):
                continue
            done.append(v)
            rest = [w for w in target if w != v]
            search(cells[:ti] + [[v], rest] + cells[ti + 1:])

    search([list(range(g.n))])
    return best[0], best[1]


def canonical_form(g: SimpleGraph, max_n: int = MAX_EXACT_N) -> CanonicalForm:
    return CanonicalForm(g.n, canonical_labelling(g, max_n)[0])


def canonical_graph(g: SimpleGraph) -> SimpleGraph:
    return canonical_form(g).to_graph()
