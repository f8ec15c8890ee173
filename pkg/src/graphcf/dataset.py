"""The connected planar graph benchmark: enumeration, splitting and persistence."""

from __future__ import annotations

import json
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import graph6
from .canon import canonical_form
from .graphs import GraphError, SimpleGraph, is_connected
from .planarity import is_planar

log = logging.getLogger(__name__)

FORMAT_VERSION = "graphcf-dataset/1"
MAX_ENUM_N = 8
METHOD_VERTEX = "vertex-augmentation+canonical-dedup"
METHOD_EDGE = "edge-growth+pairwise-isomorphism"


class DatasetError(ValueError):
    pass


@dataclass
class LabeledDataset:
    graphs: list[SimpleGraph]
    labels: list[int]
    n: int
    marginals_x: tuple[float, ...] = (1.0,)
    marginals_e: tuple[float, ...] = (1.0, 0.0)
    methods: tuple[str, ...] = field(default_factory=tuple)

    def __len__(self):
        return len(self.graphs)

    @property
    def a(self) -> int:
        return len(self.marginals_x)

    @property
    def b(self) -> int:
        return len(self.marginals_e)

    def subset(self, idx) -> "LabeledDataset":
        return make_dataset([self.graphs[i] for i in idx], self.n, self.methods)


def edge_marginals(graphs: list[SimpleGraph], n: int) -> tuple[float, float]:
    slots = len(graphs) * n * (n - 1) // 2
    if slots == 0:
        return (1.0, 0.0)
    p = sum(g.m for g in graphs) / slots
    return (1.0 - p, p)


def make_dataset(graphs: list[SimpleGraph], n: int, methods=()) -> LabeledDataset:
    return LabeledDataset(
        graphs=list(graphs),
        labels=[g.m for g in graphs],
        n=n,
        marginals_x=(1.0,),
        marginals_e=edge_marginals(graphs, n),
        methods=tuple(methods),
    )


def enumerate_connected_planar(n: int, method: str = METHOD_VERTEX) -> LabeledDataset:
    """All connected planar graphs on ``n`` nodes up to isomorphism, sorted by canonical form.

    Each returned graph is the canonical representative of its class.
    """
    if not 1 <= n <= MAX_ENUM_N:
        raise DatasetError(f"enumeration supports 1 <= n <= {MAX_ENUM_N}, got {n}")
    if method == METHOD_VERTEX:
        reps = _by_vertex_augmentation(n)
    elif method == METHOD_EDGE:
        reps = _by_edge_growth(n)
    else:
        raise DatasetError(f"unknown enumeration method {method!r}")
    forms = sorted(canonical_form(g) for g in reps)
    if len(set(forms)) != len(forms):
        raise AssertionError(f"{method} produced isomorphic duplicates")
    log.info("n=%d: %d connected planar graphs via %s", n, len(forms), method)
    return make_dataset([f.to_graph() for f in forms], n, (method,))


def _by_vertex_augmentation(n: int) -> list[SimpleGraph]:
    # Every connected graph has a non-cut vertex, so each connected planar
    # n-graph extends some connected planar (n-1)-graph by one vertex.
    level = {canonical_form(SimpleGraph(1))}
    for k in range(2, n + 1):
        nxt = set()
        for form in level:
            g = form.to_graph()
            for nb in range(1, 1 << (k - 1)):
                h = SimpleGraph(k, g.edges | {(i, k - 1) for i in range(k - 1) if nb >> i & 1})
                if h.m > 3 * k - 6 and k >= 3:
                    continue
                c = canonical_form(h)
                if c not in nxt and is_planar(h):
                    nxt.add(c)
        level = nxt
    return [f.to_graph() for f in level]


def _by_edge_growth(n: int) -> list[SimpleGraph]:
    # Planarity is closed under edge deletion, so growing planar graphs edge by
    # edge from the empty graph reaches every planar graph on n nodes.
    pairs = [(i, j) for j in range(1, n) for i in range(j)]
    level = [SimpleGraph(n)]
    planar_all = [SimpleGraph(n)]
    while level:
        buckets: dict[tuple, list[list[int]]] = defaultdict(list)
        nxt = []
        for g in level:
            for p in pairs:
                if p in g.edges:
                    continue
                h = g.add_edge(*p)
                masks = h.masks()
                inv = _invariant(masks)
                if any(_isomorphic(masks, other) for other in buckets[inv]):
                    continue
                if not is_planar(h):
                    continue
                buckets[inv].append(masks)
                nxt.append(h)
        planar_all.extend(nxt)
        level = nxt
    return [g for g in planar_all if is_connected(g)]


def _invariant(masks: list[int]) -> tuple:
    deg = [bin(x).count("1") for x in masks]
    profile = []
    for v, mv in enumerate(masks):
        nd = sorted(deg[w] for w in range(len(masks)) if mv >> w & 1)
        tri = sum(bin(masks[w] & mv).count("1") for w in range(len(masks)) if mv >> w & 1) // 2
        profile.append((deg[v], tri, tuple(nd)))
    return tuple(sorted(profile))


def _isomorphic(m1: list[int], m2: list[int]) -> bool:
    """Backtracking isomorphism test with local-invariant candidate filtering."""
    n = len(m1)
    def local(masks):
        deg = [bin(x).count("1") for x in masks]
        return [(deg[v], tuple(sorted(deg[w] for w in range(n) if masks[v] >> w & 1))) for v in range(n)]
    l1, l2 = local(m1), local(m2)
    if sorted(l1) != sorted(l2):
        return False
    order = sorted(range(n), key=lambda v: (-l1[v][0], v))
    img = [-1] * n
    used = [False] * n

    def rec(k):
        if k == n:
            return True
        u = order[k]
        for v in range(n):
            if used[v] or l2[v] != l1[u]:
                continue
            if all((m1[u] >> order[p] & 1) == (m2[v] >> img[order[p]] & 1) for p in range(k)):
                used[v] = True
                img[u] = v
                if rec(k + 1):
                    return True
                used[v] = False
        img[u] = -1
        return False

    return rec(0)


def split(ds: LabeledDataset, test_fraction: float, seed: int) -> tuple[LabeledDataset, LabeledDataset]:
    """Seeded split stratified by label; singleton label classes go to train."""
    if not 0 < test_fraction < 1:
        raise DatasetError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    rng = np.random.default_rng(seed)
    by_label = defaultdict(list)
    for i, y in enumerate(ds.labels):
        by_label[y].append(i)
    test_idx = []
    for y in sorted(by_label):
        idx = by_label[y]
        if len(idx) < 2:
            log.warning("label %d has %d member(s); kept in train", y, len(idx))
            continue
        k = min(int(round(test_fraction * len(idx))), len(idx) - 1)
        test_idx.extend(rng.permutation(idx)[:k].tolist())
    test_set = set(test_idx)
    train_idx = [i for i in range(len(ds)) if i not in test_set]
    return ds.subset(train_idx), ds.subset(sorted(test_set))


def label_histogram(ds: LabeledDataset) -> dict[int, int]:
    return dict(sorted(Counter(ds.labels).items()))


def _meta_path(path: Path) -> Path:
    return path.with_name(path.name + ".json")


def save(ds: LabeledDataset, path, provenance: dict | None = None) -> None:
    path = Path(path)
    path.write_text("".join(graph6.encode(g) + "\n" for g in ds.graphs))
    meta = {
        "format_version": FORMAT_VERSION,
        "n": ds.n,
        "a": ds.a,
        "b": ds.b,
        "count": len(ds),
        "labels": ds.labels,
        "marginals_x": list(ds.marginals_x),
        "marginals_e": list(ds.marginals_e),
        "methods": list(ds.methods),
    }
    if provenance:
        meta["provenance"] = provenance
    _meta_path(path).write_text(json.dumps(meta, indent=1))


def load(path) -> LabeledDataset:
    path = Path(path)
    try:
        meta = json.loads(_meta_path(path).read_text())
    except FileNotFoundError:
        raise DatasetError(f"missing metadata sidecar {_meta_path(path)}") from None
    if meta.get("format_version") != FORMAT_VERSION:
        raise DatasetError(f"dataset version {meta.get('format_version')!r} != {FORMAT_VERSION!r}")
    graphs = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            g = graph6.decode(line)
        except graph6.Graph6Error as exc:
            raise DatasetError(f"{path}:{lineno}: malformed graph6 line: {exc}") from None
        if g.n != meta["n"]:
            raise DatasetError(f"{path}:{lineno}: graph has {g.n} nodes, expected {meta['n']}")
        graphs.append(g)
    if len(graphs) != meta["count"] or len(meta["labels"]) != len(graphs):
        raise DatasetError(f"{path}: {len(graphs)} graphs but metadata lists {meta['count']}")
    return LabeledDataset(
        graphs=graphs,
        labels=[int(y) for y in meta["labels"]],
        n=meta["n"],
        marginals_x=tuple(meta["marginals_x"]),
        marginals_e=tuple(meta["marginals_e"]),
        methods=tuple(meta["methods"]),
    )


def check_dataset(ds: LabeledDataset) -> None:
    """Raise if any benchmark invariant is violated."""
    forms = [canonical_form(g) for g in ds.graphs]
    if len(set(forms)) != len(forms):
        raise GraphError("dataset contains isomorphic duplicates")
    for g, y in zip(ds.graphs, ds.labels):
        if not (is_connected(g) and is_planar(g)):
            raise GraphError("dataset graph is not connected and planar")
        if y != g.m:
            raise GraphError("label does not match edge count")
