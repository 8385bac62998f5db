"""Communication graphs and the stacked constraint matrices derived from them.

Edges are undirected pairs ``(i, j)`` with ``i < j``, indexed by position in
``Graph.edges``. Directed dual coordinates follow one fixed layout used by
every other module: for edge ``e = (i, j)`` the block ``lambda_{i|j}`` lives
in row block ``e`` and ``lambda_{j|i}`` in row block ``m + e``. The swap
``P`` exchanges the two halves.
"""
from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np


class GraphError(ValueError):
    """Raised for invalid or disconnected graphs."""


@dataclass(frozen=True)
class Graph:
    n: int
    edges: tuple[tuple[int, int], ...]
    coords: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.n < 1:
            raise GraphError("graph needs at least one node")
        seen = set()
        for i, j in self.edges:
            if not (0 <= i < j < self.n):
                raise GraphError(f"edge ({i}, {j}) must satisfy 0 <= i < j < n")
            if (i, j) in seen:
                raise GraphError(f"duplicate edge ({i}, {j})")
            seen.add((i, j))
        if not _is_connected(self.n, self.edges):
            raise GraphError("graph is not connected")

    @property
    def m(self) -> int:
        return len(self.edges)

    @property
    def neighbors(self) -> tuple[tuple[int, ...], ...]:
        nbrs: list[list[int]] = [[] for _ in range(self.n)]
        for i, j in self.edges:
            nbrs[i].append(j)
            nbrs[j].append(i)
        return tuple(tuple(sorted(x)) for x in nbrs)

    @property
    def degrees(self) -> np.ndarray:
        d = np.zeros(self.n, dtype=np.int64)
        for i, j in self.edges:
            d[i] += 1
            d[j] += 1
        return d

    def edge_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Lower and upper endpoint of every edge, as int64 arrays."""
        if not self.edges:
            return np.zeros(0, np.int64), np.zeros(0, np.int64)
        arr = np.asarray(self.edges, dtype=np.int64)
        return np.ascontiguousarray(arr[:, 0]), np.ascontiguousarray(arr[:, 1])

    def incident_edges(self) -> tuple[tuple[int, ...], ...]:
        inc: list[list[int]] = [[] for _ in range(self.n)]
        for e, (i, j) in enumerate(self.edges):
            inc[i].append(e)
            inc[j].append(e)
        return tuple(tuple(x) for x in inc)

    def to_dict(self) -> dict:
        out = {"n": self.n, "edges": [list(e) for e in self.edges]}
        if self.coords is not None:
            out["coords"] = [[float(a), float(b)] for a, b in self.coords]
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "Graph":
        coords = data.get("coords")
        edges = tuple(sorted(_normalize_edge(a, b) for a, b in data["edges"]))
        return cls(
            n=int(data["n"]),
            edges=edges,
            coords=None if coords is None else np.asarray(coords, dtype=float),
        )

    @classmethod
    def from_json(cls, text: str) -> "Graph":
        return cls.from_dict(json.loads(text))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path: str | Path) -> "Graph":
        return cls.from_json(Path(path).read_text())


def _normalize_edge(a: int, b: int) -> tuple[int, int]:
    a, b = int(a), int(b)
    if a == b:
        raise GraphError(f"self-loop at node {a}")
    return (a, b) if a < b else (b, a)


def _is_connected(n: int, edges) -> bool:
    adj: list[list[int]] = [[] for _ in range(n)]
    for i, j in edges:
        adj[i].append(j)
        adj[j].append(i)
    seen = {0}
    queue = deque([0])
    while queue:
        v = queue.popleft()
        for w in adj[v]:
            if w not in seen:
                seen.add(w)
                queue.append(w)
    return len(seen) == n


def from_edges(n: int, edges) -> Graph:
    return Graph(n=n, edges=tuple(sorted({_normalize_edge(a, b) for a, b in edges})))


def path_graph(n: int) -> Graph:
    return from_edges(n, [(i, i + 1) for i in range(n - 1)])


def complete_graph(n: int) -> Graph:
    return from_edges(n, [(i, j) for i in range(n) for j in range(i + 1, n)])


def default_radius_sq(n: int) -> float:
    """Connectivity-threshold radius ``2 ln(n) / n`` for random geometric graphs."""
    return 2.0 * math.log(n) / n


def generate_geometric_graph(
    n: int, radius_sq: float | None = None, seed: int = 0, max_attempts: int = 1000
) -> Graph:
    """Random geometric graph on the unit square, resampled until connected.

    Nodes are placed i.i.d. uniformly; ``(i, j)`` is an edge iff the squared
    distance is below ``radius_sq``. Every attempt draws from the same seeded
    stream, so the result is a deterministic function of ``seed``.
    """
    if n < 2:
        raise GraphError("n must be at least 2")
    if radius_sq is None:
        radius_sq = default_radius_sq(n)
    if radius_sq <= 0:
        raise GraphError("radius_sq must be positive")
    rng = np.random.default_rng(seed)
    for _ in range(max_attempts):
        coords = rng.random((n, 2))
        diff = coords[:, None, :] - coords[None, :, :]
        d2 = np.einsum("ijk,ijk->ij", diff, diff)
        ii, jj = np.nonzero(np.triu(d2 < radius_sq, k=1))
        edges = tuple(zip(ii.tolist(), jj.tolist()))
        if _is_connected(n, edges):
            return Graph(n=n, edges=edges, coords=coords)
    raise GraphError(
        f"no connected placement after {max_attempts} attempts; radius_sq={radius_sq} is too small"
    )


@dataclass(frozen=True)
class ConstraintMatrices:
    """Dense stacked matrices for edge constraints ``x_i = x_j``.

    ``perm`` is the index map of ``P``: ``(P v)[k] = v[perm[k]]``.
    """

    graph: Graph
    u: int
    B: np.ndarray
    Bplus: np.ndarray
    Bminus: np.ndarray
    C: np.ndarray
    M: np.ndarray
    W: np.ndarray
    perm: np.ndarray
    b: np.ndarray
    d: np.ndarray

    @property
    def PC(self) -> np.ndarray:
        return self.C[self.perm]

    @property
    def P(self) -> np.ndarray:
        return np.eye(self.perm.size)[self.perm]

    def apply_P(self, v: np.ndarray) -> np.ndarray:
        return v[self.perm]

    @cached_property
    def edge_index(self) -> tuple[np.ndarray, np.ndarray]:
        return self.graph.edge_arrays()

    @cached_property
    def degrees(self) -> np.ndarray:
        return self.graph.degrees

    @cached_property
    def incident(self) -> tuple[tuple[int, ...], ...]:
        return self.graph.incident_edges()

    @property
    def primal_dim(self) -> int:
        return self.graph.n * self.u

    @property
    def edge_dim(self) -> int:
        return self.graph.m * self.u


def build_constraint_matrices(g: Graph, u: int = 1) -> ConstraintMatrices:
    if u < 1:
        raise ValueError("block size u must be >= 1")
    n, m = g.n, g.m
    inc = np.zeros((m, n))
    for e, (i, j) in enumerate(g.edges):
        inc[e, i] = 1.0
        inc[e, j] = -1.0
    eye = np.eye(u)
    B = np.kron(inc, eye)
    Bplus = np.where(B > 0, B, 0.0)
    Bminus = np.where(B < 0, B, 0.0)
    C = np.vstack([Bplus, Bminus])
    M = np.vstack([Bplus, -Bminus])
    W = np.vstack([-np.eye(m * u), -np.eye(m * u)])
    half = m * u
    perm = np.concatenate([np.arange(half, 2 * half), np.arange(half)])
    b = np.zeros(half)
    d = 0.5 * np.concatenate([b, b])
    return ConstraintMatrices(
        graph=g, u=u, B=B, Bplus=Bplus, Bminus=Bminus, C=C, M=M, W=W, perm=perm, b=b, d=d
    )
