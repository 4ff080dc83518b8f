"""Graphs, oriented simplicial complexes and the local complex around an edge."""

from __future__ import annotations

import hashlib
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np

Simplex = tuple[int, ...]


class GraphError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected simple graph on vertices ``0..num_vertices-1``.

    ``edges`` is an ``(E, 2)`` int array with ``u < v`` in each row, rows sorted
    lexicographically. Build instances with :func:`load_graph`.
    """

    num_vertices: int
    edges: np.ndarray
    features: np.ndarray | None = None
    labels: np.ndarray | None = None

    def __post_init__(self):
        if self.features is not None and self.features.shape[0] != self.num_vertices:
            raise GraphError(
                f"feature rows ({self.features.shape[0]}) != num_vertices ({self.num_vertices})"
            )
        if self.labels is not None and self.labels.shape[0] != self.num_vertices:
            raise GraphError(
                f"label count ({self.labels.shape[0]}) != num_vertices ({self.num_vertices})"
            )

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def neighbors(self) -> tuple[np.ndarray, ...]:
        """Sorted neighbor arrays, one per vertex."""
        n = self.num_vertices
        if self.num_edges == 0:
            return tuple(np.empty(0, dtype=np.int64) for _ in range(n))
        src = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
        dst = np.concatenate([self.edges[:, 1], self.edges[:, 0]])
        order = np.lexsort((dst, src))
        src, dst = src[order], dst[order]
        bounds = np.searchsorted(src, np.arange(n + 1))
        return tuple(dst[bounds[i] : bounds[i + 1]] for i in range(n))

    @cached_property
    def degree(self) -> np.ndarray:
        return np.bincount(self.edges.ravel(), minlength=self.num_vertices).astype(np.int64)

    @cached_property
    def _edge_set(self) -> frozenset[tuple[int, int]]:
        return frozenset(map(tuple, self.edges.tolist()))

    def has_edge(self, u: int, v: int) -> bool:
        if u > v:
            u, v = v, u
        return (u, v) in self._edge_set

    def fingerprint(self) -> bytes:
        """SHA-256 over N and the sorted edge list; independent of input order."""
        h = hashlib.sha256()
        h.update(np.int64(self.num_vertices).tobytes())
        h.update(np.ascontiguousarray(self.edges, dtype="<i8").tobytes())
        return h.digest()

    def with_edges(self, edges: Iterable[tuple[int, int]]) -> "Graph":
        """Same vertex set, features and labels; a different edge set."""
        return load_graph(
            list(edges), self.num_vertices, features=self.features, labels=self.labels
        )

    def relabel(self, perm: Sequence[int]) -> "Graph":
        """Graph with vertex ``v`` renamed to ``perm[v]``."""
        perm = np.asarray(perm, dtype=np.int64)
        feats = None if self.features is None else self.features[np.argsort(perm)]
        labels = None if self.labels is None else self.labels[np.argsort(perm)]
        return load_graph(perm[self.edges].tolist(), self.num_vertices, features=feats, labels=labels)


def load_graph(
    edge_list: Sequence[tuple[int, int]] | np.ndarray,
    num_vertices: int,
    features: np.ndarray | None = None,
    labels: np.ndarray | None = None,
) -> Graph:
    """Build a simple undirected graph, dropping self-loops and duplicate edges.

    Raises GraphError naming the first offending pair if an index falls outside
    ``[0, num_vertices)``.
    """
    arr = np.asarray(edge_list, dtype=np.int64).reshape(-1, 2)
    bad = np.flatnonzero((arr < 0).any(axis=1) | (arr >= num_vertices).any(axis=1))
    if len(bad):
        i = int(bad[0])
        raise GraphError(
            f"edge #{i} {tuple(arr[i].tolist())} out of range for num_vertices={num_vertices}"
        )
    arr = arr[arr[:, 0] != arr[:, 1]]
    arr = np.sort(arr, axis=1)
    arr = np.unique(arr, axis=0) if len(arr) else np.empty((0, 2), dtype=np.int64)
    if features is not None:
        features = np.asarray(features, dtype=np.float64)
    if labels is not None:
        labels = np.asarray(labels, dtype=np.int64)
    return Graph(int(num_vertices), arr, features, labels)


@dataclass(frozen=True, eq=False)
class SimplicialComplex:
    """Oriented simplicial complex.

    ``simplices[p]`` holds the p-simplices as strictly increasing tuples of
    ambient vertex IDs, sorted lexicographically. That order is the chain basis
    and fixes the orientation of every simplex.
    """

    simplices: tuple[tuple[Simplex, ...], ...]
    vertex_ids: tuple[int, ...] = field(default=())

    @classmethod
    def from_simplices(cls, simplices: Iterable[Iterable[int]]) -> "SimplicialComplex":
        """Closure under faces of an arbitrary collection of simplices."""
        by_dim: dict[int, set[Simplex]] = {}
        for s in simplices:
            s = tuple(sorted(set(int(v) for v in s)))
            if not s:
                continue
            for k in range(1, len(s) + 1):
                by_dim.setdefault(k - 1, set()).update(combinations(s, k))
        if not by_dim:
            return cls((), ())
        top = max(by_dim)
        layers = tuple(tuple(sorted(by_dim.get(p, ()))) for p in range(top + 1))
        return cls(layers, tuple(v for (v,) in layers[0]))

    @property
    def dimension(self) -> int:
        return len(self.simplices) - 1

    def __len__(self) -> int:
        return sum(len(s) for s in self.simplices)

    def count(self, p: int) -> int:
        return len(self.simplices[p]) if 0 <= p <= self.dimension else 0

    def index(self, p: int) -> dict[Simplex, int]:
        return {s: i for i, s in enumerate(self.simplices[p])}

    def relabel(self, mapping: dict[int, int] | Sequence[int]) -> "SimplicialComplex":
        return SimplicialComplex.from_simplices(
            [mapping[v] for v in s] for layer in self.simplices for s in layer
        )

    def dump(self) -> str:
        """Text form: one simplex per line, a ``# dim p`` header per section."""
        out = []
        for p, layer in enumerate(self.simplices):
            out.append(f"# dim {p}")
            out.extend(" ".join(map(str, s)) for s in layer)
        return "\n".join(out) + "\n"


def parse_complex(text: str) -> SimplicialComplex:
    """Inverse of :meth:`SimplicialComplex.dump`; any list of simplices is accepted."""
    simplices = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line[0] in "#%":
            continue
        simplices.append([int(t) for t in line.replace(",", " ").split()])
    return SimplicialComplex.from_simplices(simplices)


def clique_complex(vertices: Iterable[int], graph: Graph, n: int) -> SimplicialComplex:
    """Clique complex of the subgraph of ``graph`` induced on ``vertices``, truncated at order n."""
    if n < 1:
        raise ValueError(f"order n must be >= 1, got {n}")
    vs = sorted(set(int(v) for v in vertices))
    inside = set(vs)
    adj = {}
    for v in vs:
        nb = graph.neighbors[v]
        adj[v] = [int(w) for w in nb[nb > v] if int(w) in inside]
    if n == 1:
        # fast path: no clique search needed
        layers = [[(v,) for v in vs], [(v, w) for v in vs for w in adj[v]]]
    else:
        adj_sets = {v: set(a) for v, a in adj.items()}
        layers = _cliques(adj, adj_sets, n + 1)
    while len(layers) > 1 and not layers[-1]:
        layers.pop()
    layers = tuple(tuple(sorted(layer)) for layer in layers)
    return SimplicialComplex(layers, tuple(vs))


def _cliques(adj, adj_sets, max_size):
    # depth-first extension over higher-indexed neighbors; no duplicates by construction
    out: list[list[Simplex]] = [[] for _ in range(max_size)]

    def extend(clique, candidates):
        out[len(clique) - 1].append(clique)
        if len(clique) == max_size:
            return
        for i, w in enumerate(candidates):
            nw = adj_sets[w]
            extend(clique + (w,), [c for c in candidates[i + 1 :] if c in nw])

    for v in sorted(adj):
        extend((v,), adj[v])
    return out


def clique_expand(g: Graph, n: int) -> SimplicialComplex:
    """Clique complex of the whole graph up to order n."""
    return clique_complex(range(g.num_vertices), g, n)


def ball(g: Graph, sources: Iterable[int], hops: int) -> set[int]:
    """Vertices within ``hops`` steps of any source (multi-source BFS)."""
    dist = {int(s): 0 for s in sources}
    queue = deque(dist)
    while queue:
        v = queue.popleft()
        if dist[v] == hops:
            continue
        for w in g.neighbors[v]:
            w = int(w)
            if w not in dist:
                dist[w] = dist[v] + 1
                queue.append(w)
    return set(dist)


def local_complex(g: Graph, x: int, y: int, l_sub: int, n: int) -> SimplicialComplex:
    """The local complex K_{x,y}.

    Vertices within ``l_sub`` hops of x or of y, the induced subgraph on them,
    clique-expanded to order n. ``x == y`` gives the ball around x alone.
    """
    if x != y and not g.has_edge(x, y):
        raise GraphError(f"({x}, {y}) is not an edge")
    if l_sub < 0:
        raise ValueError(f"l_sub must be >= 0, got {l_sub}")
    return clique_complex(ball(g, {x, y}, l_sub), g, n)
