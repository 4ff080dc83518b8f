"""Random small models for comparing analytic and numerical gradients."""

import numpy as np

from oracles import central_difference, random_graph, relative_error
from torgnn.complex_core import load_graph
from torgnn.nn import ModelConfig, TorGNN
from torgnn.torsion_weights import precompute_weights, propagation_matrix


def random_instance(rng, task, use_embedding=None):
    n, edges = random_graph(rng, max_vertices=10, p=0.4, min_vertices=4)
    g = load_graph(edges, n)
    p = propagation_matrix(g, precompute_weights(g, 1, int(rng.integers(1, 3))))
    if use_embedding is None:
        use_embedding = bool(rng.integers(2))
    in_dim, hidden, mlp_hidden = (int(v) for v in rng.integers(1, 5, size=3))
    classes = int(rng.integers(2, 5))
    cfg = ModelConfig(
        task, in_dim, hidden, int(rng.integers(1, 4)), mlp_hidden,
        1 if task == "link" else classes, n, use_embedding,
    )
    model = TorGNN.init(cfg, rng)
    # zero biases put zero input rows exactly on the ReLU kink
    for name in ("head.b1", "head.b2"):
        model.params[name] = rng.normal(size=model.params[name].shape)
    features = None if use_embedding else rng.normal(size=(n, in_dim))
    batch = int(rng.integers(1, 7))
    if task == "link":
        items = rng.integers(0, n, size=(batch, 2))
        targets = rng.integers(0, 2, size=batch).astype(float)
    else:
        items = rng.integers(0, n, size=batch)
        targets = rng.integers(0, classes, size=batch)
    return model, p, features, items, targets


def max_gradient_error(model, p, features, items, targets, step=1e-5):
    """Largest relative error over all parameters, keyed by parameter name."""
    _, analytic = model.loss_and_grads(p, features, items, targets)
    numeric = central_difference(lambda: model.loss(p, features, items, targets), model.params, step)
    return {k: float(relative_error(analytic[k], numeric[k]).max()) for k in model.params}
