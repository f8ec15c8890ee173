"""Exact graph edit distance for equal-order graphs under unit edge insert/delete costs."""

from __future__ import annotations

from functools import lru_cache
from itertools import permutations

import numpy as np

from .canon import canonical_form
from .graphs import GraphError, SimpleGraph

MAX_EXACT_N = 10


def ged(g1: SimpleGraph, g2: SimpleGraph) -> int:
    """Minimum number of edge insertions/deletions turning ``g1`` into a relabelling of ``g2``.

    Branch and bound over node bijections. Nodes of ``g1`` are placed in BFS order
    starting at the highest degree node; candidates in ``g2`` are tried by
    closest degree first. The bound on a partial map is its committed cost plus
    the difference in not-yet-committed edge counts.
    """
    if g1.n != g2.n:
        raise GraphError(f"ged requires equal node counts, got {g1.n} and {g2.n}")
    if g1.n > MAX_EXACT_N:
        raise GraphError(f"exact ged is limited to n <= {MAX_EXACT_N}")
    n = g1.n
    m1, m2 = g1.m, g2.m
    floor = abs(m1 - m2)
    if n == 1:
        return 0

    deg1, deg2 = g1.degrees(), g2.degrees()
    raw1 = g1.masks()
    order = _bfs_order(raw1, deg1)
    pos = {v: k for k, v in enumerate(order)}
    # g1 adjacency re-indexed so that node at position k is k
    a1 = [sum(1 << pos[w] for w in range(n) if raw1[order[k]] >> w & 1) for k in range(n)]
    d1 = [deg1[v] for v in order]
    # edges of g1 among positions < k, for k = 0..n
    inner1 = [0] * (n + 1)
    for k in range(n):
        inner1[k + 1] = inner1[k] + _popcount(a1[k] & ((1 << k) - 1))
    masks2 = g2.masks()

    best = [_initial_upper_bound(a1, masks2, d1, deg2, n)]
    if best[0] == floor:
        return floor
    img = [0] * n  # img[k] = g2 node at position k
    used = [False] * n

    def rec(k, cost, inner2):
        if k == n:
            if cost < best[0]:
                best[0] = cost
            return
        u_mask = a1[k]
        cands = sorted((v for v in range(n) if not used[v]), key=lambda v: abs(deg2[v] - d1[k]))
        for v in cands:
            mv = masks2[v]
            add = 0
            new_inner = 0
            for p in range(k):
                e1 = u_mask >> p & 1
                e2 = mv >> img[p] & 1
                add += e1 ^ e2
                new_inner += e2
            c = cost + add
            i2 = inner2 + new_inner
            if c + abs((m1 - inner1[k + 1]) - (m2 - i2)) >= best[0]:
                continue
            used[v] = True
            img[k] = v
            rec(k + 1, c, i2)
            used[v] = False
            if best[0] == floor:
                return

    rec(0, 0, 0)
    return best[0]


def _popcount(x: int) -> int:
    return bin(x).count("1")


def _bfs_order(masks, deg):
    n = len(masks)
    order: list[int] = []
    seen = 0
    while len(order) < n:
        start = max((v for v in range(n) if not seen >> v & 1), key=lambda v: deg[v])
        queue = [start]
        seen |= 1 << start
        for x in queue:
            order.append(x)
            nb = sorted((w for w in range(n) if masks[x] >> w & 1 and not seen >> w & 1), key=lambda w: -deg[w])
            for w in nb:
                seen |= 1 << w
                queue.append(w)
    return order


def _initial_upper_bound(a1, masks2, d1, deg2, n):
    """Cost of the greedy degree-matched bijection."""
    img = []
    free = set(range(n))
    for k in range(n):
        v = min(free, key=lambda v: (abs(deg2[v] - d1[k]), v))
        free.remove(v)
        img.append(v)
    cost = 0
    for j in range(n):
        for i in range(j):
            cost += (a1[j] >> i & 1) ^ (masks2[img[j]] >> img[i] & 1)
    return cost


def ged_bruteforce(g1: SimpleGraph, g2: SimpleGraph) -> int:
    """Unpruned minimum over all ``n!`` bijections (vectorised)."""
    if g1.n != g2.n:
        raise GraphError("ged requires equal node counts")
    n = g1.n
    A1 = g1.adjacency().astype(np.int16)
    A2 = g2.adjacency().astype(np.int16)
    perms = np.array(list(permutations(range(n))), dtype=np.int64)
    iu = np.triu_indices(n, 1)
    P2 = A2[perms[:, :, None], perms[:, None, :]]
    diff = np.abs(P2[:, iu[0], iu[1]] - A1[iu])
    return int(diff.sum(1).min())


@lru_cache(maxsize=200_000)
def _ged_canonical(c1, c2) -> int:
    return ged(c1.to_graph(), c2.to_graph())


def ged_cached(g1: SimpleGraph, g2: SimpleGraph) -> int:
    """``ged`` memoised on the pair of isomorphism classes."""
    c1, c2 = canonical_form(g1), canonical_form(g2)
    if c2 < c1:
        c1, c2 = c2, c1
    return _ged_canonical(c1, c2)
