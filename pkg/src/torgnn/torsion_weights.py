"""Per-edge analytic-torsion weights |log T(K_{x,y})|, with a binary cache."""

from __future__ import annotations

import logging
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from torgnn.complex_core import Graph, local_complex
from torgnn.spectral import log_analytic_torsion_fast

log = logging.getLogger(__name__)

MAGIC = b"TORW"
VERSION = 1
_HEADER = struct.Struct("<4sIIIQQ32s")  # magic, version, l_sub, n, N, E, graph hash


class WeightTableError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class TorsionWeightTable:
    """|log T| for every edge (``edge_weights[i]`` belongs to ``edges[i]``) and every vertex."""

    l_sub: int
    n: int
    edges: np.ndarray
    edge_weights: np.ndarray
    self_weights: np.ndarray
    graph_hash: bytes

    @property
    def num_vertices(self) -> int:
        return len(self.self_weights)

    @cached_property
    def _lookup(self) -> dict[tuple[int, int], float]:
        return dict(zip(map(tuple, self.edges.tolist()), self.edge_weights.tolist()))

    def weight(self, x: int, y: int) -> float:
        if x == y:
            return float(self.self_weights[x])
        key = (x, y) if x < y else (y, x)
        try:
            return self._lookup[key]
        except KeyError:
            raise WeightTableError(f"no weight for pair ({x}, {y})") from None

    def matches(self, g: Graph) -> bool:
        return self.graph_hash == g.fingerprint()

    def to_text(self) -> str:
        """Lines ``x y weight`` (and ``x x weight``) sorted by pair, 17 significant digits."""
        rows = [(int(u), int(v), float(w)) for (u, v), w in zip(self.edges, self.edge_weights)]
        rows += [(x, x, float(w)) for x, w in enumerate(self.self_weights)]
        rows.sort(key=lambda r: (r[0], r[1]))
        return "".join(f"{u} {v} {w:.17g}\n" for u, v, w in rows)


def torsion_edge_weight(g: Graph, x: int, y: int, l_sub: int, n: int) -> float:
    return abs(log_analytic_torsion_fast(local_complex(g, x, y, l_sub, n)))


_worker_graph: Graph | None = None


def _init_worker(g: Graph):
    global _worker_graph
    _worker_graph = g


def _weights_chunk(pairs: np.ndarray, l_sub: int, n: int) -> np.ndarray:
    g = _worker_graph
    out = np.empty(len(pairs))
    for i, (x, y) in enumerate(pairs.tolist()):
        try:
            out[i] = torsion_edge_weight(g, x, y, l_sub, n)
        except Exception as exc:
            raise WeightTableError(f"torsion weight failed for pair ({x}, {y}): {exc}") from exc
    return out


def precompute_weights(g: Graph, l_sub: int, n: int, workers: int = 1, chunk: int = 256) -> TorsionWeightTable:
    """Torsion weights for all edges and all self pairs of ``g``.

    Each pair fills its own slot, so the table does not depend on ``workers``.
    """
    if g.num_vertices == 0:
        raise WeightTableError("graph has no vertices")
    selfs = np.repeat(np.arange(g.num_vertices, dtype=np.int64)[:, None], 2, axis=1)
    pairs = np.concatenate([g.edges, selfs])
    slots = np.empty(len(pairs))
    bounds = list(range(0, len(pairs), chunk)) + [len(pairs)]
    if workers <= 1:
        _init_worker(g)
        for a, b in zip(bounds[:-1], bounds[1:]):
            slots[a:b] = _weights_chunk(pairs[a:b], l_sub, n)
    else:
        with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(g,)) as pool:
            futures = {
                a: pool.submit(_weights_chunk, pairs[a:b], l_sub, n)
                for a, b in zip(bounds[:-1], bounds[1:])
            }
            for a, b in zip(bounds[:-1], bounds[1:]):
                slots[a:b] = futures[a].result()
    log.debug("computed %d torsion weights (l_sub=%d, n=%d)", len(pairs), l_sub, n)
    e = g.num_edges
    return TorsionWeightTable(l_sub, n, g.edges.copy(), slots[:e], slots[e:], g.fingerprint())


def save_table(t: TorsionWeightTable, path: str | Path) -> None:
    header = _HEADER.pack(
        MAGIC, VERSION, t.l_sub, t.n, t.num_vertices, len(t.edges), t.graph_hash
    )
    records = np.empty(len(t.edges), dtype=[("x", "<u4"), ("y", "<u4"), ("w", "<f8")])
    records["x"], records["y"], records["w"] = t.edges[:, 0], t.edges[:, 1], t.edge_weights
    with open(path, "wb") as f:
        f.write(header)
        f.write(records.tobytes())
        f.write(np.ascontiguousarray(t.self_weights, dtype="<f8").tobytes())


def load_table(path: str | Path, g: Graph | None = None) -> TorsionWeightTable:
    """Read a cached table; with ``g`` given, refuse a cache built from another graph."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise WeightTableError(f"{path}: truncated header")
    magic, version, l_sub, n, num_v, num_e, ghash = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise WeightTableError(f"{path}: not a torsion weight cache")
    if version != VERSION:
        raise WeightTableError(f"{path}: unsupported cache version {version}")
    rec = np.dtype([("x", "<u4"), ("y", "<u4"), ("w", "<f8")])
    expected = _HEADER.size + num_e * rec.itemsize + num_v * 8
    if len(data) != expected:
        raise WeightTableError(f"{path}: expected {expected} bytes, found {len(data)}")
    records = np.frombuffer(data, dtype=rec, count=num_e, offset=_HEADER.size)
    selfs = np.frombuffer(data, dtype="<f8", count=num_v, offset=_HEADER.size + num_e * rec.itemsize)
    edges = np.stack([records["x"], records["y"]], axis=1).astype(np.int64)
    table = TorsionWeightTable(l_sub, n, edges, records["w"].astype(np.float64), selfs.astype(np.float64), ghash)
    if g is not None and not table.matches(g):
        raise WeightTableError(f"{path}: graph hash mismatch (stale cache)")
    return table


SCALES = ("none", "mean")


def propagation_matrix(g: Graph, table: TorsionWeightTable, scale: str = "none") -> sp.csr_matrix:
    """Sparse P with P[x, y] = |log T(K_{x,y})| / sqrt(d(x) d(y)) over y in N(x) and x itself.

    Isolated vertices use degree 1. ``scale="mean"`` divides every weight by
    the mean over all nonzero slots of P (each edge counted in both
    directions). Without biases in the message-passing layers this is a
    reparametrization of the layer weights, but it keeps the signal scale
    comparable across (l_sub, n), where raw weights grow with the ball size.
    """
    if scale not in SCALES:
        raise ValueError(f"scale must be one of {SCALES}, got {scale!r}")
    if not table.matches(g):
        raise WeightTableError("weight table was built for a different graph")
    deg = np.maximum(g.degree, 1).astype(np.float64)
    inv = 1.0 / np.sqrt(deg)
    u, v = g.edges[:, 0], g.edges[:, 1]
    diag = np.arange(g.num_vertices)
    rows = np.concatenate([u, v, diag])
    cols = np.concatenate([v, u, diag])
    vals = np.concatenate([table.edge_weights, table.edge_weights, table.self_weights])
    if scale == "mean" and vals.size and vals.mean() > 0:
        vals = vals / vals.mean()
    vals = vals * inv[rows] * inv[cols]
    return sp.csr_matrix((vals, (rows, cols)), shape=(g.num_vertices, g.num_vertices))
