"""Repeat-and-average experiment harness driven by a flat key = value config."""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from torgnn import datasets
from torgnn.metrics import accuracy, auc, aupr
from torgnn.nn import TrainConfig, predict_class, save_checkpoint, train
from torgnn.torsion_weights import SCALES, precompute_weights, propagation_matrix

log = logging.getLogger(__name__)

STAGES = ("config", "datasets", "weights", "train", "evaluate")
EXIT_CODES = {stage: 2 + i for i, stage in enumerate(STAGES)}

# used when a config leaves lr / epochs unset
TASK_DEFAULTS = {"link": {"lr": 5e-3, "epochs": 20}, "node": {"lr": 0.02, "epochs": 200}}


class ExperimentError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@dataclass
class ExperimentConfig:
    task: str = "link"
    edge_list: str = ""
    features: str = ""
    labels: str = ""
    l_sub: int = 1
    n: int = 1
    lr: float | None = None
    epochs: int | None = None
    batch: int = 128
    hidden: int = 64
    num_layers: int = 2
    mlp_hidden: int = 64
    embed_dim: int = 64
    repeats: int = 10
    seed: int = 0
    workers: int = 1
    parallel_repeats: bool = False
    normalize_features: bool = True
    weight_scale: str = "mean"
    out: str = ""
    checkpoint_dir: str = ""
    predictions: str = ""

    def __post_init__(self):
        defaults = TASK_DEFAULTS.get(self.task, TASK_DEFAULTS["link"])
        if self.lr is None:
            self.lr = defaults["lr"]
        if self.epochs is None:
            self.epochs = defaults["epochs"]

    @property
    def seeds(self) -> list[int]:
        return [self.seed + i for i in range(self.repeats)]

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs, lr=self.lr, batch=self.batch, hidden=self.hidden,
            num_layers=self.num_layers, mlp_hidden=self.mlp_hidden,
            embed_dim=self.embed_dim, seed=seed, weight_scale=self.weight_scale,
        )


def parse_config(text: str, **overrides) -> ExperimentConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment. Unknown keys are an error."""
    types = {f.name: f.type.split(" |")[0] for f in fields(ExperimentConfig)}
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ExperimentError("config", f"line {lineno}: expected key = value, got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        values[key] = val
    values.update({k: v for k, v in overrides.items() if v is not None})
    unknown = sorted(set(values) - set(types))
    if unknown:
        raise ExperimentError("config", f"unknown key {unknown[0]!r}")
    cfg = ExperimentConfig(task=str(values.get("task", "link")))
    for key, val in values.items():
        kind = types[key]
        try:
            if kind == "bool":
                val = val if isinstance(val, bool) else str(val).lower() in ("1", "true", "yes", "on")
            elif kind == "int":
                val = int(val)
            elif kind == "float":
                val = float(val)
            else:
                val = str(val)
        except ValueError:
            raise ExperimentError("config", f"bad value for {key}: {val!r}") from None
        setattr(cfg, key, val)
    if cfg.task not in ("link", "node"):
        raise ExperimentError("config", f"task must be 'link' or 'node', got {cfg.task!r}")
    if cfg.repeats < 1 or cfg.l_sub < 0 or cfg.n < 1:
        raise ExperimentError("config", "need repeats >= 1, l_sub >= 0, n >= 1")
    if cfg.weight_scale not in SCALES:
        raise ExperimentError("config", f"weight_scale must be one of {SCALES}")
    return cfg


def load_config(path: str | Path, **overrides) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ExperimentError("config", str(exc)) from None
    return parse_config(text, **overrides)


@dataclass
class MetricsReport:
    task: str
    repeats: int
    metrics: dict[str, list[float]]
    mean: dict[str, float]
    std: dict[str, float]
    runtime_s: float
    config: dict
    seeds: list[int] = field(default_factory=list)

    @classmethod
    def from_runs(cls, cfg: ExperimentConfig, runs: list[dict[str, float]], runtime: float) -> "MetricsReport":
        names = list(runs[0])
        metrics = {k: [r[k] for r in runs] for k in names}
        return cls(
            task=cfg.task,
            repeats=len(runs),
            metrics=metrics,
            mean={k: float(np.mean(v)) for k, v in metrics.items()},
            std={k: float(np.std(v)) for k, v in metrics.items()},
            runtime_s=runtime,
            config=asdict(cfg),
            seeds=cfg.seeds,
        )

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "MetricsReport":
        return cls(**json.loads(text))

    def summary(self) -> str:
        parts = [f"{k}={self.mean[k]:.4f}+-{self.std[k]:.4f}" for k in self.metrics]
        c = self.config
        return (
            f"TorGNN({c['l_sub']},{c['n']}) {self.task}: " + " ".join(parts)
            + f" over {self.repeats} repeats in {self.runtime_s:.1f}s"
        )


def load_graph_for(cfg: ExperimentConfig):
    if not cfg.edge_list:
        raise ExperimentError("datasets", "config has no edge_list")
    try:
        g = datasets.load_dataset(cfg.edge_list, cfg.features or None, cfg.labels or None)
    except (OSError, ValueError) as exc:
        raise ExperimentError("datasets", str(exc)) from None
    if cfg.task == "node" and g.labels is None:
        raise ExperimentError("datasets", "node task needs a labels file")
    if g.features is not None and cfg.normalize_features:
        g = datasets.load_graph(g.edges, g.num_vertices, datasets.row_normalize(g.features), g.labels)
    return g


def _weights(g, cfg):
    try:
        return precompute_weights(g, cfg.l_sub, cfg.n, workers=cfg.workers)
    except Exception as exc:
        raise ExperimentError("weights", str(exc)) from exc


def run_repeat(cfg: ExperimentConfig, g, seed: int, table=None) -> dict[str, float]:
    """One split -> weights -> train -> test evaluation cycle."""
    try:
        split = datasets.build_link_split(g, seed) if cfg.task == "link" else datasets.build_node_split(g, seed)
    except ValueError as exc:
        raise ExperimentError("datasets", str(exc)) from None
    mp_graph = split.observed_graph if cfg.task == "link" else g
    if table is None:
        table = _weights(mp_graph, cfg)
    try:
        result = train(cfg.task, split, mp_graph, table, cfg.train_config(seed))
    except Exception as exc:
        raise ExperimentError("train", str(exc)) from exc
    if cfg.checkpoint_dir:
        Path(cfg.checkpoint_dir).mkdir(parents=True, exist_ok=True)
        save_checkpoint(result.model, Path(cfg.checkpoint_dir) / f"model_seed{seed}.ckpt")
    try:
        p = propagation_matrix(mp_graph, table, cfg.weight_scale)
        if cfg.task == "link":
            scores = result.model.predict(p, mp_graph.features, split.test[:, :2])
            labels = split.test[:, 2]
            _write_predictions(cfg, seed, scores, labels)
            return {"auc": auc(scores, labels), "aupr": aupr(scores, labels)}
        pred = predict_class(result.model.predict(p, g.features, split.test))
        _write_predictions(cfg, seed, pred, split.labels[split.test])
        return {"accuracy": accuracy(pred, split.labels[split.test])}
    except ValueError as exc:
        raise ExperimentError("evaluate", str(exc)) from None


def _write_predictions(cfg, seed, values, labels):
    if cfg.predictions:
        path = Path(f"{cfg.predictions}.seed{seed}.txt")
        path.write_text("".join(f"{v:.17g} {int(y)}\n" for v, y in zip(values.tolist(), labels.tolist())))


def _repeat_job(args):
    cfg, g, seed, table = args
    return run_repeat(cfg, g, seed, table)


def run_experiment(cfg: ExperimentConfig, graph=None) -> MetricsReport:
    """Run every configured repeat and average the test metrics.

    The node task uses the full graph for message passing, so its weights are
    computed once. The link task recomputes them per repeat on that repeat's
    observed training graph.
    """
    start = time.perf_counter()
    g = graph if graph is not None else load_graph_for(cfg)
    table = _weights(g, cfg) if cfg.task == "node" else None
    jobs = [(cfg, g, seed, table) for seed in cfg.seeds]
    if cfg.parallel_repeats and cfg.repeats > 1:
        with ProcessPoolExecutor() as pool:
            runs = list(pool.map(_repeat_job, jobs))
    else:
        runs = []
        for job in jobs:
            runs.append(_repeat_job(job))
            log.info("seed %d: %s", job[2], runs[-1])
    report = MetricsReport.from_runs(cfg, runs, time.perf_counter() - start)
    if cfg.out:
        Path(cfg.out).write_text(report.to_json())
    return report
