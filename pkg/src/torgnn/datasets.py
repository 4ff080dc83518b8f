"""Dataset ingestion, link-prediction samples and node-classification splits."""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from torgnn.complex_core import Graph, GraphError, load_graph

_SEP = re.compile(r"[\s,]+")


class DatasetError(ValueError):
    pass


def read_edge_list(path: str | Path, num_vertices: int | None = None) -> tuple[Graph, np.ndarray]:
    """Read an edge-list file into a graph.

    Pairs are whitespace- or comma-separated, one per line; lines starting
    with ``#`` or ``%`` are skipped. Extra columns after the pair are ignored.
    Without ``num_vertices`` the raw IDs are remapped to a dense ``[0, N)``
    range in ascending order. With it, IDs must already be dense. Returns the
    graph and ``ids``, where ``ids[i]`` is the raw ID of vertex ``i``.
    """
    pairs = []
    lines = []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line or line[0] in "#%":
                continue
            parts = [t for t in _SEP.split(line) if t]
            if len(parts) < 2:
                raise DatasetError(f"{path}:{lineno}: expected a vertex pair, got {line!r}")
            try:
                pairs.append((int(parts[0]), int(parts[1])))
            except ValueError:
                raise DatasetError(f"{path}:{lineno}: non-integer vertex in {line!r}") from None
            lines.append(lineno)
    arr = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if num_vertices is None:
        ids, dense = np.unique(arr, return_inverse=True)
        return load_graph(dense.reshape(-1, 2), len(ids)), ids
    bad = np.flatnonzero(((arr < 0) | (arr >= num_vertices)).any(axis=1))
    if len(bad):
        i = int(bad[0])
        raise GraphError(f"{path}:{lines[i]}: vertex out of range [0, {num_vertices}) in {tuple(arr[i])}")
    return load_graph(arr, num_vertices), np.arange(num_vertices)


def write_edge_list(g: Graph, path: str | Path) -> None:
    with open(path, "w") as f:
        f.writelines(f"{u} {v}\n" for u, v in g.edges.tolist())


def read_features(path: str | Path, num_vertices: int | None = None) -> np.ndarray:
    """One whitespace-separated row of reals per vertex."""
    try:
        x = np.loadtxt(path, dtype=np.float64, ndmin=2, comments=("#", "%"))
    except ValueError as exc:
        raise DatasetError(f"{path}: {exc}") from None
    if num_vertices is not None and x.shape[0] != num_vertices:
        raise DatasetError(f"{path}: {x.shape[0]} feature rows for {num_vertices} vertices")
    return x


def read_labels(path: str | Path, num_vertices: int | None = None, num_classes: int | None = None) -> np.ndarray:
    """One integer class per line."""
    out = []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line or line[0] in "#%":
                continue
            try:
                out.append(int(line))
            except ValueError:
                raise DatasetError(f"{path}:{lineno}: non-integer label {line!r}") from None
    labels = np.asarray(out, dtype=np.int64)
    if num_vertices is not None and len(labels) != num_vertices:
        raise DatasetError(f"{path}: {len(labels)} labels for {num_vertices} vertices")
    if len(labels) and labels.min() < 0:
        raise DatasetError(f"{path}: negative label")
    if num_classes is not None and len(labels) and labels.max() >= num_classes:
        raise DatasetError(f"{path}: label {labels.max()} >= num_classes {num_classes}")
    return labels


def load_dataset(
    edge_list: str | Path,
    features: str | Path | None = None,
    labels: str | Path | None = None,
    num_classes: int | None = None,
) -> Graph:
    """Edge list plus optional feature and label files sharing one 0-based vertex index.

    When features or labels are given their row count fixes N, so isolated
    vertices are kept.
    """
    x = read_features(features) if features else None
    y = read_labels(labels, num_classes=num_classes) if labels else None
    n = x.shape[0] if x is not None else (len(y) if y is not None else None)
    if x is not None and y is not None and len(y) != n:
        raise DatasetError(f"{len(y)} labels for {n} feature rows")
    g, _ = read_edge_list(edge_list, n)
    return load_graph(g.edges, g.num_vertices, features=x, labels=y)


def convert_linqs(content: str | Path, cites: str | Path, out_dir: str | Path) -> dict[str, Path]:
    """Convert a LINQS ``.content``/``.cites`` pair (Cora, Citeseer) into plain files.

    Writes ``edges.txt``, ``features.txt``, ``labels.txt`` and ``classes.txt``
    to ``out_dir``. Vertices follow the order of the content file. Citations
    that name a document missing from the content file are dropped.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ids, rows, names = {}, [], []
    with open(content) as f:
        for line in f:
            parts = line.split()
            if not parts:
                continue
            ids[parts[0]] = len(ids)
            rows.append(parts[1:-1])
            names.append(parts[-1])
    classes = sorted(set(names))
    cls_index = {c: i for i, c in enumerate(classes)}
    edges = []
    with open(cites) as f:
        for line in f:
            parts = line.split()
            if len(parts) == 2 and parts[0] in ids and parts[1] in ids:
                edges.append((ids[parts[1]], ids[parts[0]]))
    paths = {k: out_dir / f"{k}.txt" for k in ("edges", "features", "labels", "classes")}
    paths["edges"].write_text("".join(f"{u} {v}\n" for u, v in edges))
    paths["features"].write_text("".join(" ".join(r) + "\n" for r in rows))
    paths["labels"].write_text("".join(f"{cls_index[c]}\n" for c in names))
    paths["classes"].write_text("".join(f"{c}\n" for c in classes))
    return paths


def row_normalize(x: np.ndarray) -> np.ndarray:
    s = x.sum(axis=1, keepdims=True)
    s[s == 0] = 1.0
    return x / s


@dataclass(frozen=True, eq=False)
class LinkSplit:
    """Labelled vertex pairs per split; ``observed_graph`` holds only training positives."""

    train: np.ndarray  # (k, 3) rows of x, y, label
    val: np.ndarray
    test: np.ndarray
    observed_graph: Graph

    @staticmethod
    def pairs(samples: np.ndarray) -> np.ndarray:
        return samples[:, :2]

    @staticmethod
    def labels(samples: np.ndarray) -> np.ndarray:
        return samples[:, 2]


def sample_negatives(g: Graph, count: int, rng: np.random.Generator, max_rounds: int = 20) -> np.ndarray:
    """``count`` distinct non-adjacent vertex pairs, uniformly without replacement."""
    n = g.num_vertices
    available = n * (n - 1) // 2 - g.num_edges
    if count > available:
        raise DatasetError(f"need {count} non-edges but the graph only has {available}")
    existing = set((g.edges[:, 0] * n + g.edges[:, 1]).tolist())
    chosen: dict[int, None] = {}
    for _ in range(max_rounds):
        need = count - len(chosen)
        if need == 0:
            break
        u = rng.integers(0, n, size=2 * need)
        v = rng.integers(0, n, size=2 * need)
        lo, hi = np.minimum(u, v), np.maximum(u, v)
        for key in (lo * n + hi)[lo != hi].tolist():
            if key not in existing and key not in chosen:
                chosen[key] = None
                if len(chosen) == count:
                    break
    if len(chosen) < count:
        # dense graph: enumerate what is left and draw from it
        iu, ju = np.triu_indices(n, 1)
        keys = iu * n + ju
        mask = ~np.isin(keys, list(existing | set(chosen)))
        extra = rng.choice(keys[mask], size=count - len(chosen), replace=False)
        chosen.update(dict.fromkeys(extra.tolist()))
    keys = np.fromiter(chosen, dtype=np.int64, count=count)
    return np.stack([keys // n, keys % n], axis=1)


def build_link_split(g: Graph, seed: int) -> LinkSplit:
    """Equal numbers of positives and sampled negatives, shuffled and cut 7:1:2.

    Validation and test take ``floor`` of their share; the remainder goes to
    training.
    """
    if g.num_edges < 10:
        raise DatasetError(f"link split needs at least 10 edges, graph has {g.num_edges}")
    rng = np.random.default_rng(seed)
    neg = sample_negatives(g, g.num_edges, rng)
    samples = np.concatenate([
        np.column_stack([g.edges, np.ones(g.num_edges, dtype=np.int64)]),
        np.column_stack([neg, np.zeros(len(neg), dtype=np.int64)]),
    ])
    samples = samples[rng.permutation(len(samples))]
    total = len(samples)
    n_val, n_test = total // 10, total * 2 // 10
    n_train = total - n_val - n_test
    train, val, test = np.split(samples, [n_train, n_train + n_val])
    observed = g.with_edges(train[train[:, 2] == 1, :2])
    return LinkSplit(train, val, test, observed)


@dataclass(frozen=True, eq=False)
class NodeSplit:
    labels: np.ndarray
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray


def build_node_split(g: Graph, seed: int, n_val: int = 500, n_test: int = 1000) -> NodeSplit:
    """Uniformly drawn disjoint vertex sets: ``n_val`` validation, ``n_test`` test, rest train."""
    if g.labels is None:
        raise DatasetError("graph has no labels")
    if g.num_vertices <= n_val + n_test:
        raise DatasetError(f"need more than {n_val + n_test} labelled vertices, have {g.num_vertices}")
    perm = np.random.default_rng(seed).permutation(g.num_vertices)
    val, test, train = np.split(perm, [n_val, n_val + n_test])
    return NodeSplit(g.labels, np.sort(train), np.sort(val), np.sort(test))


def community_graph(
    num_vertices: int,
    num_edges: int,
    num_communities: int,
    mixing: float,
    seed: int,
    num_features: int = 0,
    feature_noise: float = 0.0,
) -> Graph:
    """Planted-partition test graph with a target edge count.

    A fraction ``mixing`` of the edges join different communities. Vertex
    labels are the community index. With ``num_features`` > 0, each vertex gets
    a sparse binary bag-of-words drawn mostly from its community's vocabulary,
    with ``feature_noise`` of the words drawn uniformly.
    """
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, num_communities, size=num_vertices)
    members = [np.flatnonzero(labels == c) for c in range(num_communities)]
    # heavy-tailed activity so degrees are heterogeneous
    activity = rng.pareto(2.5, size=num_vertices) + 1.0
    edges: set[tuple[int, int]] = set()
    while len(edges) < num_edges:
        batch = num_edges - len(edges)
        u = rng.choice(num_vertices, size=batch, p=activity / activity.sum())
        cross = rng.random(batch) < mixing
        for a, c in zip(u.tolist(), cross.tolist()):
            pool = members[rng.integers(num_communities)] if c else members[labels[a]]
            w = pool[rng.choice(len(pool), p=activity[pool] / activity[pool].sum())]
            if a != w:
                edges.add((min(a, w), max(a, w)))
    features = None
    if num_features:
        vocab = np.array_split(rng.permutation(num_features), num_communities)
        features = np.zeros((num_vertices, num_features))
        for v in range(num_vertices):
            k = rng.integers(5, 20)
            own = rng.random(k) >= feature_noise
            words = np.where(own, rng.choice(vocab[labels[v]], size=k), rng.integers(0, num_features, size=k))
            features[v, words] = 1.0
    return load_graph(sorted(edges), num_vertices, features=features, labels=labels)
