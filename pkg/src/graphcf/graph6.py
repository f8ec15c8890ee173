"""graph6 encoding (undirected simple graphs, up to 62 nodes)."""

from __future__ import annotations

from .graphs import SimpleGraph


class Graph6Error(ValueError):
    def __init__(self, msg: str, offset: int | None = None):
        self.offset = offset
        super().__init__(msg if offset is None else f"{msg} (byte offset {offset})")


def encode(g: SimpleGraph) -> str:
    if g.n > 62:
        raise ValueError("only n <= 62 supported")
    masks = g.masks()
    bits = [masks[j] >> i & 1 for j in range(1, g.n) for i in range(j)]
    bits += [0] * (-len(bits) % 6)
    chars = [chr(63 + g.n)]
    for k in range(0, len(bits), 6):
        val = 0
        for b in bits[k:k + 6]:
            val = (val << 1) | b
        chars.append(chr(63 + val))
    return "".join(chars)


def decode(s: str) -> SimpleGraph:
    s = s.strip()
    if s.startswith(">>graph6<<"):
        s = s[10:]
    if not s:
        raise Graph6Error("empty graph6 string", 0)
    for off, ch in enumerate(s):
        if not 63 <= ord(ch) <= 126:
            raise Graph6Error(f"invalid graph6 character {ch!r}", off)
    n = ord(s[0]) - 63
    if n > 62:
        raise Graph6Error("large-graph graph6 headers are not supported", 0)
    if n < 1:
        raise Graph6Error("graph must have at least one node", 0)
    nbits = n * (n - 1) // 2
    need = (nbits + 5) // 6
    if len(s) - 1 != need:
        raise Graph6Error(f"expected {need} data bytes for n={n}, got {len(s) - 1}", min(len(s), need + 1))
    edges = []
    k = 0
    for j in range(1, n):
        for i in range(j):
            val = ord(s[1 + k // 6]) - 63
            if val >> (5 - k % 6) & 1:
                edges.append((i, j))
            k += 1
    if nbits % 6:
        pad = ord(s[-1]) - 63
        if pad & ((1 << (6 - nbits % 6)) - 1):
            raise Graph6Error("non-zero padding bits", len(s) - 1)
    return SimpleGraph(n, frozenset(edges))
