"""Exact planarity testing.

``is_planar`` runs the Demoucron-Malgrange-Pertuiset path-addition algorithm on
every biconnected block. ``is_planar_oracle`` is an independent brute-force
check that searches for a K5 or K3,3 minor over branch-set partitions; it is
exponential and restricted to eight nodes.
"""

from __future__ import annotations

import sys
from functools import lru_cache
from itertools import combinations

from .graphs import GraphError, SimpleGraph

ORACLE_MAX_N = 8


def is_planar(g: SimpleGraph) -> bool:
    n, m = g.n, g.m
    if n <= 4:
        return True
    if m > 3 * n - 6:
        return False
    adj = {v: set() for v in range(n)}
    for u, v in g.edges:
        adj[u].add(v)
        adj[v].add(u)
    for block in _biconnected_blocks(adj):
        verts = {x for e in block for x in e}
        if len(verts) <= 4:
            continue
        if len(block) > 3 * len(verts) - 6:
            return False
        if not _block_planar(block):
            return False
    return True


def _biconnected_blocks(adj: dict[int, set[int]]) -> list[list[tuple[int, int]]]:
    """Edge sets of the biconnected components (Hopcroft-Tarjan)."""
    disc: dict[int, int] = {}
    low: dict[int, int] = {}
    stack: list[tuple[int, int]] = []
    blocks = []
    counter = [0]

    def visit(u, parent):
        disc[u] = low[u] = counter[0]
        counter[0] += 1
        for w in adj[u]:
            if w not in disc:
                stack.append((u, w))
                visit(w, u)
                low[u] = min(low[u], low[w])
                if low[w] >= disc[u]:
                    block = []
                    while True:
                        e = stack.pop()
                        block.append(e)
                        if e == (u, w):
                            break
                    blocks.append(block)
            elif w != parent and disc[w] < disc[u]:
                stack.append((u, w))
                low[u] = min(low[u], disc[w])

    limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(limit, 2 * len(adj) + 100))
    try:
        for v in adj:
            if v not in disc:
                visit(v, -1)
    finally:
        sys.setrecursionlimit(limit)
    return blocks


def _block_planar(block: list[tuple[int, int]]) -> bool:
    adj: dict[int, set[int]] = {}
    for u, v in block:
        adj.setdefault(u, set()).add(v)
        adj.setdefault(v, set()).add(u)
    all_edges = {frozenset(e) for e in block}

    # initial cycle through the first edge
    u0, v0 = block[0]
    prev = {u0: None}
    queue = [u0]
    for x in queue:
        for w in adj[x]:
            if w not in prev and not (x == u0 and w == v0):
                prev[w] = x
                queue.append(w)
    cycle = [v0]
    while cycle[-1] != u0:
        cycle.append(prev[cycle[-1]])
    faces = [list(cycle), list(cycle)]
    h_verts = set(cycle)
    h_edges = {frozenset((cycle[i], cycle[i - 1])) for i in range(len(cycle))}

    while len(h_edges) < len(all_edges):
        fragments = _fragments(adj, h_verts, h_edges)
        face_sets = [set(f) for f in faces]
        best = None
        for frag in fragments:
            ok = [i for i, fs in enumerate(face_sets) if frag[1] <= fs]
            if not ok:
                return False
            if best is None or len(ok) < len(best[1]):
                best = (frag, ok)
                if len(ok) == 1:
                    break
        (inner, attach), (fi, *_) = best
        path = _fragment_path(adj, inner, attach)
        face = faces.pop(fi)
        i, j = face.index(path[0]), face.index(path[-1])
        k = len(face)
        arc_ij = [face[(i + s) % k] for s in range((j - i) % k + 1)]
        arc_ji = [face[(j + s) % k] for s in range((i - j) % k + 1)]
        mid = path[1:-1]
        faces.append(arc_ij + mid[::-1])
        faces.append(arc_ji + mid)
        h_verts.update(path)
        h_edges.update(frozenset((path[s], path[s + 1])) for s in range(len(path) - 1))
    return True


def _fragments(adj, h_verts, h_edges):
    """Bridges of the embedded subgraph as ``(inner vertices, attachment set)``."""
    out = []
    for u in h_verts:
        for w in adj[u]:
            if u < w and w in h_verts and frozenset((u, w)) not in h_edges:
                out.append(((), {u, w}))
    seen = set()
    for s in adj:
        if s in h_verts or s in seen:
            continue
        comp = [s]
        seen.add(s)
        attach = set()
        for x in comp:
            for w in adj[x]:
                if w in h_verts:
                    attach.add(w)
                elif w not in seen:
                    seen.add(w)
                    comp.append(w)
        out.append((tuple(comp), attach))
    return out


def _fragment_path(adj, inner, attach):
    """Path through a fragment joining two distinct attachment vertices."""
    if not inner:
        return sorted(attach)
    inner_set = set(inner)
    a1 = min(attach)
    start = next(w for w in sorted(adj[a1]) if w in inner_set)
    prev = {start: None}
    queue = [start]
    for x in queue:
        for w in adj[x]:
            if w in attach and w != a1:
                path = [w, x]
                while prev[path[-1]] is not None:
                    path.append(prev[path[-1]])
                path.append(a1)
                return path[::-1]
        for w in adj[x]:
            if w in inner_set and w not in prev:
                prev[w] = x
                queue.append(w)
    raise AssertionError("fragment of a biconnected block has a single attachment")


@lru_cache(maxsize=None)
def _branch_partitions(n: int, k: int) -> tuple[tuple[int, ...], ...]:
    """All ways to pick ``k`` disjoint non-empty unordered vertex sets from ``range(n)``."""
    out = []
    blocks: list[int] = []

    def rec(v):
        if k - len(blocks) > n - v:
            return
        if v == n:
            out.append(tuple(blocks))
            return
        rec(v + 1)  # v unused
        for i in range(len(blocks)):
            blocks[i] |= 1 << v
            rec(v + 1)
            blocks[i] &= ~(1 << v)
        if len(blocks) < k:
            blocks.append(1 << v)
            rec(v + 1)
            blocks.pop()

    rec(0)
    return tuple(out)


def _connected_masks(masks: list[int]) -> list[bool]:
    n = len(masks)
    out = [False] * (1 << n)
    for s in range(1, 1 << n):
        low = s & -s
        seen = frontier = low
        while frontier:
            nxt = 0
            f = frontier
            while f:
                b = f & -f
                nxt |= masks[b.bit_length() - 1]
                f ^= b
            nxt &= s
            frontier = nxt & ~seen
            seen |= nxt
        out[s] = seen == s
    return out


def is_planar_oracle(g: SimpleGraph) -> bool:
    """Planarity by exhaustive search for a K5 or K3,3 minor (n <= 8 only)."""
    if g.n > ORACLE_MAX_N:
        raise GraphError(f"minor-search oracle supports n <= {ORACLE_MAX_N}, got {g.n}")
    masks = g.masks()
    conn = _connected_masks(masks)

    def block_nbrs(blocks):
        out = []
        for b in blocks:
            nb = 0
            f = b
            while f:
                low = f & -f
                nb |= masks[low.bit_length() - 1]
                f ^= low
            out.append(nb)
        return out

    for blocks in _branch_partitions(g.n, 5):
        if not all(conn[b] for b in blocks):
            continue
        nb = block_nbrs(blocks)
        if all(nb[i] & blocks[j] for i, j in combinations(range(5), 2)):
            return False
    for blocks in _branch_partitions(g.n, 6):
        if not all(conn[b] for b in blocks):
            continue
        nb = block_nbrs(blocks)
        for rest in combinations(range(1, 6), 2):
            side_a = (0,) + rest
            side_b = [j for j in range(6) if j not in side_a]
            if all(nb[i] & blocks[j] for i in side_a for j in side_b):
                return False
    return True
