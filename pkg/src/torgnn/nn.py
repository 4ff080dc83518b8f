"""Torsion-weighted message passing with hand-written reverse mode and Adam."""

from __future__ import annotations

import io
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.sparse as sp

from torgnn.complex_core import Graph
from torgnn.torsion_weights import TorsionWeightTable, propagation_matrix

log = logging.getLogger(__name__)

Params = dict[str, np.ndarray]


class TrainingError(RuntimeError):
    pass


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def forward_layer(
    h_prev: np.ndarray,
    g: Graph,
    table: TorsionWeightTable,
    w: np.ndarray,
    activation: Callable[[np.ndarray], np.ndarray] = relu,
    scale: str = "none",
) -> np.ndarray:
    """One round of torsion-weighted aggregation: ``activation(P @ h_prev @ w)``."""
    if h_prev.shape[0] != g.num_vertices:
        raise ValueError(f"h_prev has {h_prev.shape[0]} rows for {g.num_vertices} vertices")
    if h_prev.shape[1] != w.shape[0]:
        raise ValueError(f"cannot apply {w.shape} weight to width-{h_prev.shape[1]} features")
    return activation(propagation_matrix(g, table, scale) @ (h_prev @ w))


def pair_features(hx: np.ndarray, hy: np.ndarray) -> np.ndarray:
    """Concatenation (hx + hy, hx * hy, hx, hy) along the last axis."""
    if hx.shape != hy.shape:
        raise ValueError(f"representation shapes differ: {hx.shape} vs {hy.shape}")
    return np.concatenate([hx + hy, hx * hy, hx, hy], axis=-1)


def mlp(x: np.ndarray, head: Params) -> np.ndarray:
    """Two-layer perceptron ``relu(x W1 + b1) W2 + b2``."""
    if x.shape[-1] != head["W1"].shape[0]:
        raise ValueError(f"input width {x.shape[-1]} != MLP input width {head['W1'].shape[0]}")
    return relu(x @ head["W1"] + head["b1"]) @ head["W2"] + head["b2"]


def link_score(hx: np.ndarray, hy: np.ndarray, head: Params) -> np.ndarray:
    """Edge probability for one pair (vectors) or a batch of pairs (rows)."""
    logit = mlp(pair_features(hx, hy), head)
    return sigmoid(logit[..., 0])


def node_logits(hx: np.ndarray, head: Params) -> np.ndarray:
    return mlp(hx, head)


def predict_class(logits: np.ndarray) -> np.ndarray:
    # np.argmax breaks ties toward the lowest index
    return np.argmax(logits, axis=-1)


def binary_cross_entropy(probs: np.ndarray, targets: np.ndarray) -> float:
    probs = np.asarray(probs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if probs.size == 0:
        raise ValueError("empty batch")
    eps = np.finfo(np.float64).tiny
    return float(-np.mean(targets * np.log(probs + eps) + (1 - targets) * np.log(1 - probs + eps)))


def bce_with_logits(logits: np.ndarray, targets: np.ndarray) -> float:
    if logits.size == 0:
        raise ValueError("empty batch")
    return float(np.mean(np.logaddexp(0.0, logits) - targets * logits))


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray, targets: np.ndarray) -> float:
    if len(logits) == 0:
        raise ValueError("empty batch")
    z = logits - logits.max(axis=1, keepdims=True)
    logz = np.log(np.exp(z).sum(axis=1))
    return float(np.mean(logz - z[np.arange(len(targets)), targets]))


@dataclass
class ModelConfig:
    task: str  # "link" or "node"
    in_dim: int
    hidden: int = 64
    num_layers: int = 2
    mlp_hidden: int = 64
    num_classes: int = 1
    num_vertices: int = 0
    use_embedding: bool = False


class TorGNN:
    """Message-passing encoder plus one task head.

    Parameter names: ``embed`` (only for featureless graphs), ``gnn.<l>`` for
    the aggregation weights, ``head.W1/b1/W2/b2`` for the perceptron.
    """

    def __init__(self, config: ModelConfig, params: Params):
        self.config = config
        self.params = params

    @classmethod
    def init(cls, config: ModelConfig, rng: np.random.Generator) -> "TorGNN":
        params: Params = {}
        if config.use_embedding:
            bound = 1.0 / np.sqrt(config.in_dim)
            params["embed"] = rng.uniform(-bound, bound, size=(config.num_vertices, config.in_dim))
        dims = [config.in_dim] + [config.hidden] * config.num_layers
        for l in range(config.num_layers):
            params[f"gnn.{l}"] = glorot(rng, dims[l], dims[l + 1])
        head_in = 4 * config.hidden if config.task == "link" else config.hidden
        head_out = 1 if config.task == "link" else config.num_classes
        params["head.W1"] = glorot(rng, head_in, config.mlp_hidden)
        params["head.b1"] = np.zeros(config.mlp_hidden)
        params["head.W2"] = glorot(rng, config.mlp_hidden, head_out)
        params["head.b2"] = np.zeros(head_out)
        return cls(config, params)

    @property
    def head(self) -> Params:
        return {k[5:]: v for k, v in self.params.items() if k.startswith("head.")}

    def copy(self) -> "TorGNN":
        return TorGNN(self.config, {k: v.copy() for k, v in self.params.items()})

    def inputs(self, features: np.ndarray | None) -> np.ndarray:
        if self.config.use_embedding:
            return self.params["embed"]
        if features is None:
            raise ValueError("model expects node features")
        return features

    def encode(self, p: sp.spmatrix, features: np.ndarray | None = None, cache: list | None = None) -> np.ndarray:
        """Final node representations; hidden layers use ReLU, the last layer is linear."""
        h = self.inputs(features)
        last = self.config.num_layers - 1
        for l in range(self.config.num_layers):
            z = p @ (h @ self.params[f"gnn.{l}"])
            if cache is not None:
                cache.append((h, z))
            h = relu(z) if l < last else z
        return h

    def predict(self, p: sp.spmatrix, features: np.ndarray | None, items: np.ndarray) -> np.ndarray:
        """Link probabilities for pair rows, or class logits for vertex indices."""
        h = self.encode(p, features)
        if self.config.task == "link":
            return link_score(h[items[:, 0]], h[items[:, 1]], self.head)
        return node_logits(h[items], self.head)

    def loss(self, p, features, items, targets) -> float:
        h = self.encode(p, features)
        if self.config.task == "link":
            logit = mlp(pair_features(h[items[:, 0]], h[items[:, 1]]), self.head)[:, 0]
            return bce_with_logits(logit, targets)
        return softmax_cross_entropy(node_logits(h[items], self.head), targets)

    def loss_and_grads(
        self, p: sp.spmatrix, features: np.ndarray | None, items: np.ndarray, targets: np.ndarray
    ) -> tuple[float, Params]:
        """Mean loss over the batch and its exact gradient for every parameter.

        ``p`` must be symmetric (true for any propagation matrix built here).
        """
        if len(items) == 0:
            raise ValueError("empty batch")
        cache: list = []
        h = self.encode(p, features, cache)
        head = self.head
        grads: Params = {}
        b = len(items)

        if self.config.task == "link":
            hx, hy = h[items[:, 0]], h[items[:, 1]]
            x = pair_features(hx, hy)
        else:
            x = h[items]
        a1 = x @ head["W1"] + head["b1"]
        r1 = relu(a1)
        out = r1 @ head["W2"] + head["b2"]

        if self.config.task == "link":
            logit = out[:, 0]
            loss = bce_with_logits(logit, targets)
            d_out = ((sigmoid(logit) - targets) / b)[:, None]
        else:
            loss = softmax_cross_entropy(out, targets)
            d_out = softmax(out)
            d_out[np.arange(b), targets] -= 1.0
            d_out /= b

        grads["head.W2"] = r1.T @ d_out
        grads["head.b2"] = d_out.sum(axis=0)
        d_a1 = (d_out @ head["W2"].T) * (a1 > 0)
        grads["head.W1"] = x.T @ d_a1
        grads["head.b1"] = d_a1.sum(axis=0)
        d_x = d_a1 @ head["W1"].T

        d_h = np.zeros_like(h)
        if self.config.task == "link":
            w = h.shape[1]
            d_sum, d_prod, d_hx, d_hy = (d_x[:, i * w : (i + 1) * w] for i in range(4))
            np.add.at(d_h, items[:, 0], d_sum + d_prod * hy + d_hx)
            np.add.at(d_h, items[:, 1], d_sum + d_prod * hx + d_hy)
        else:
            np.add.at(d_h, items, d_x)
        _check_finite(d_h, "head")

        last = self.config.num_layers - 1
        for l in range(last, -1, -1):
            h_in, z = cache[l]
            d_z = d_h if l == last else d_h * (z > 0)
            pd_z = p.T @ d_z
            grads[f"gnn.{l}"] = h_in.T @ pd_z
            d_h = pd_z @ self.params[f"gnn.{l}"].T
            _check_finite(d_h, f"gnn.{l}")
        if self.config.use_embedding:
            grads["embed"] = d_h
        return loss, grads


def _check_finite(arr: np.ndarray, layer: str):
    if not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"non-finite gradient at layer {layer}")


@dataclass
class AdamState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: Params = field(default_factory=dict)
    v: Params = field(default_factory=dict)


def adam_step(params: Params, grads: Params, state: AdamState) -> tuple[Params, AdamState]:
    """Bias-corrected Adam update, in place."""
    state.step += 1
    bc1 = 1.0 - state.beta1**state.step
    bc2 = 1.0 - state.beta2**state.step
    for k, g in grads.items():
        if g.shape != params[k].shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {params[k].shape} for {k}")
        if k not in state.m:
            state.m[k] = np.zeros_like(params[k])
            state.v[k] = np.zeros_like(params[k])
        m, v = state.m[k], state.v[k]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        params[k] -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params, state


_CKPT_MAGIC = b"TGNN"
_CKPT_VERSION = 1


def save_checkpoint(model: TorGNN, path: str | Path) -> None:
    """Versioned binary dump: config, then every array with its shape, in name order."""
    c = model.config
    buf = io.BytesIO()
    buf.write(struct.pack("<4sI", _CKPT_MAGIC, _CKPT_VERSION))
    buf.write(struct.pack(
        "<B7I", c.task == "link", c.in_dim, c.hidden, c.num_layers, c.mlp_hidden,
        c.num_classes, c.num_vertices, int(c.use_embedding),
    ))
    buf.write(struct.pack("<I", len(model.params)))
    for name in sorted(model.params):
        arr = np.ascontiguousarray(model.params[name], dtype="<f8")
        raw = name.encode()
        buf.write(struct.pack("<H", len(raw)) + raw)
        buf.write(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape))
        buf.write(arr.tobytes())
    Path(path).write_bytes(buf.getvalue())


def load_checkpoint(path: str | Path) -> TorGNN:
    data = memoryview(Path(path).read_bytes())
    off = 0

    def take(fmt):
        nonlocal off
        vals = struct.unpack_from(fmt, data, off)
        off += struct.calcsize(fmt)
        return vals

    try:
        magic, version = take("<4sI")
        if magic != _CKPT_MAGIC or version != _CKPT_VERSION:
            raise ValueError(f"{path}: not a version-{_CKPT_VERSION} checkpoint")
        is_link, in_dim, hidden, layers, mlp_h, n_cls, n_v, use_emb = take("<B7I")
        config = ModelConfig("link" if is_link else "node", in_dim, hidden, layers, mlp_h, n_cls, n_v, bool(use_emb))
        (count,) = take("<I")
        params: Params = {}
        for _ in range(count):
            (length,) = take("<H")
            name = bytes(data[off : off + length]).decode()
            off += length
            (ndim,) = take("<B")
            shape = take(f"<{ndim}Q")
            size = int(np.prod(shape)) if ndim else 1
            params[name] = np.frombuffer(data, "<f8", size, off).reshape(shape).copy()
            off += 8 * size
    except struct.error as exc:
        raise ValueError(f"{path}: truncated checkpoint") from exc
    if off != len(data):
        raise ValueError(f"{path}: trailing bytes in checkpoint")
    return TorGNN(config, params)


@dataclass
class TrainConfig:
    epochs: int = 100
    lr: float = 5e-3
    batch: int = 128
    hidden: int = 64
    num_layers: int = 2
    mlp_hidden: int = 64
    embed_dim: int = 64
    seed: int = 0
    weight_scale: str = "mean"


@dataclass
class TrainResult:
    model: TorGNN
    history: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_val: float = float("nan")


def train(
    task: str,
    split,
    graph: Graph,
    table: TorsionWeightTable,
    config: TrainConfig,
) -> TrainResult:
    """Fit a model and keep the parameters with the best validation score.

    ``task`` is ``"link"`` (minibatches of ``config.batch`` labelled pairs,
    representations recomputed over the whole graph for every batch, scored by
    AUC) or ``"node"`` (full batch, scored by accuracy). ``graph`` is the
    message-passing graph: the observed training graph for links, the full
    graph for nodes. Epoch 0 in the history is the untrained model.
    """
    from torgnn.metrics import accuracy, auc

    rng = np.random.default_rng(config.seed)
    p = propagation_matrix(graph, table, config.weight_scale)
    features = graph.features
    if task == "link":
        items, targets = split.train[:, :2], split.train[:, 2].astype(np.float64)
        val_items, val_targets = split.val[:, :2], split.val[:, 2]
        model_cfg = ModelConfig(
            "link", features.shape[1] if features is not None else config.embed_dim,
            config.hidden, config.num_layers, config.mlp_hidden, 1, graph.num_vertices,
            use_embedding=features is None,
        )
        batch = config.batch

        def score(m):
            return auc(m.predict(p, features, val_items), val_targets)
    elif task == "node":
        items, targets = split.train, split.labels[split.train]
        val_items, val_targets = split.val, split.labels[split.val]
        num_classes = int(split.labels.max()) + 1
        model_cfg = ModelConfig(
            "node", features.shape[1] if features is not None else config.embed_dim,
            config.hidden, config.num_layers, config.mlp_hidden, num_classes, graph.num_vertices,
            use_embedding=features is None,
        )
        batch = len(items)

        def score(m):
            return accuracy(predict_class(m.predict(p, features, val_items)), val_targets)
    else:
        raise ValueError(f"unknown task {task!r}")

    model = TorGNN.init(model_cfg, rng)
    state = AdamState(lr=config.lr)
    best = model.copy()
    best_val = score(model)
    result = TrainResult(best, [{"epoch": 0, "loss": model.loss(p, features, items, targets), "val": best_val}], 0, best_val)

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(items)) if task == "link" else np.arange(len(items))
        total = 0.0
        for start in range(0, len(items), batch):
            idx = order[start : start + batch]
            loss, grads = model.loss_and_grads(p, features, items[idx], targets[idx])
            if not np.isfinite(loss):
                raise TrainingError(f"loss diverged at epoch {epoch}")
            adam_step(model.params, grads, state)
            total += loss * len(idx)
        val = score(model)
        result.history.append({"epoch": epoch, "loss": total / len(items), "val": val})
        if val > result.best_val:
            result.best_val, result.best_epoch = val, epoch
            best = model.copy()
        log.debug("epoch %d loss %.5f val %.4f", epoch, total / len(items), val)
    result.model = best
    return result
