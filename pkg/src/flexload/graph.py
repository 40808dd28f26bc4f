"""Communication topology: neighbor sets, Laplacian, connectivity.

Loads are indexed 0..n-1 internally; config files and the edge-list text
format use 1-based load ids. The distributed update never touches the
Laplacian matrix itself -- it reads neighbor sets -- but L is exposed for
the dense reference computations and spectral checks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParam


@dataclass(frozen=True)
class GraphTopology:
    n: int
    neighbors: tuple[tuple[int, ...], ...]  # sorted, no self-loops, symmetric
    degrees: tuple[int, ...] = field(init=False)

    def __post_init__(self):
        if self.n < 1 or len(self.neighbors) != self.n:
            raise InvalidParam("neighbor list length must equal node count")
        for i, nbrs in enumerate(self.neighbors):
            for j in nbrs:
                if j == i:
                    raise InvalidParam(f"self-loop at node {i}")
                if not 0 <= j < self.n:
                    raise InvalidParam(f"neighbor {j} of node {i} out of range")
                if i not in self.neighbors[j]:
                    raise InvalidParam(f"edge ({i},{j}) is not symmetric")
        object.__setattr__(self, "degrees", tuple(len(nb) for nb in self.neighbors))

    def laplacian(self) -> np.ndarray:
        """Dense integer Laplacian: L_ii = degree, L_ij = -1 on edges."""
        lap = np.zeros((self.n, self.n), dtype=np.int64)
        for i, nbrs in enumerate(self.neighbors):
            lap[i, i] = len(nbrs)
            for j in nbrs:
                lap[i, j] = -1
        return lap

    def edge_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Directed edge lists (src, dst), each undirected edge appearing twice."""
        src, dst = [], []
        for i, nbrs in enumerate(self.neighbors):
            for j in nbrs:
                src.append(i)
                dst.append(j)
        return np.asarray(src, dtype=np.intp), np.asarray(dst, dtype=np.intp)


def from_edges(n: int, edges) -> GraphTopology:
    """Topology from an iterable of 0-based (i, j) pairs."""
    nbrs = [set() for _ in range(n)]
    for i, j in edges:
        if i == j:
            raise InvalidParam(f"self-loop ({i},{j})")
        if not (0 <= i < n and 0 <= j < n):
            raise InvalidParam(f"edge ({i},{j}) out of range for n={n}")
        nbrs[i].add(j)
        nbrs[j].add(i)
    return GraphTopology(n, tuple(tuple(sorted(s)) for s in nbrs))


def band_graph(n: int, n0: int) -> GraphTopology:
    """Band topology: load i talks to every load within n0 positions.

    With 1-based ids this is the max{1, i-n0}..min{n, i+n0} rule; internally
    node i (0-based) connects to max(0, i-n0)..min(n-1, i+n0). Connected by
    construction for n0 >= 1.
    """
    if n < 2:
        raise InvalidParam(f"band graph needs n >= 2, got {n}")
    if not 1 <= n0 <= n:
        raise InvalidParam(f"band half-width must satisfy 1 <= n0 <= n, got {n0}")
    edges = []
    for i in range(n):
        for j in range(i + 1, min(n - 1, i + n0) + 1):
            edges.append((i, j))
    return from_edges(n, edges)


def is_connected(t: GraphTopology) -> bool:
    """BFS reachability of every node from node 0."""
    if t.n <= 1:
        return True
    seen = [False] * t.n
    seen[0] = True
    stack = [0]
    count = 1
    while stack:
        i = stack.pop()
        for j in t.neighbors[i]:
            if not seen[j]:
                seen[j] = True
                count += 1
                stack.append(j)
    return count == t.n


def parse_edge_list(text: str, n: int) -> GraphTopology:
    """Edge-list format: one 'emitter receiver' pair of 1-based ids per line.

    Blank lines and '#' comments are allowed.
    """
    edges = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise InvalidParam(f"edge list line {lineno}: expected 'i j', got {raw!r}")
        try:
            i, j = int(parts[0]), int(parts[1])
        except ValueError as exc:
            raise InvalidParam(f"edge list line {lineno}: non-integer id") from exc
        if not (1 <= i <= n and 1 <= j <= n):
            raise InvalidParam(f"edge list line {lineno}: id out of range 1..{n}")
        edges.append((i - 1, j - 1))
    return from_edges(n, edges)
