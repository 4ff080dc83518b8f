import json
import math

import numpy as np
import pytest

from torgnn import datasets
from torgnn.cli import main
from torgnn.experiment import (
    EXIT_CODES,
    ExperimentConfig,
    ExperimentError,
    MetricsReport,
    load_config,
    parse_config,
    run_experiment,
)
from torgnn.nn import load_checkpoint
from torgnn.torsion_weights import load_table, precompute_weights


@pytest.fixture(scope="module")
def link_files(tmp_path_factory):
    d = tmp_path_factory.mktemp("link")
    g = datasets.community_graph(150, 500, 4, 0.1, seed=2)
    datasets.write_edge_list(g, d / "edges.txt")
    (d / "run.cfg").write_text(f"task = link\nedge_list = {d / 'edges.txt'}\nepochs = 3\nrepeats = 2\nhidden = 16\n")
    return d


@pytest.fixture(scope="module")
def node_files(tmp_path_factory):
    d = tmp_path_factory.mktemp("node")
    g = datasets.community_graph(1600, 4000, 4, 0.1, seed=3, num_features=40, feature_noise=0.2)
    datasets.write_edge_list(g, d / "edges.txt")
    np.savetxt(d / "features.txt", g.features, fmt="%g")
    (d / "labels.txt").write_text("".join(f"{c}\n" for c in g.labels))
    (d / "run.cfg").write_text(
        f"task = node\nedge_list = {d / 'edges.txt'}\nfeatures = {d / 'features.txt'}\n"
        f"labels = {d / 'labels.txt'}\nepochs = 30\nrepeats = 1\nhidden = 16\n"
    )
    return d


def test_parse_config_types_and_comments():
    cfg = parse_config("task = node  # classify\nl_sub=2\nlr = 0.1\nparallel_repeats = yes\n\n")
    assert (cfg.task, cfg.l_sub, cfg.lr, cfg.parallel_repeats) == ("node", 2, 0.1, True)


def test_task_defaults():
    assert (parse_config("").lr, parse_config("").epochs) == (5e-3, 20)
    assert (parse_config("task = node").lr, parse_config("task = node").epochs) == (0.02, 200)
    assert ExperimentConfig(task="node").lr == 0.02


def test_overrides_win_over_file():
    cfg = parse_config("l_sub = 1\nseed = 4", l_sub=2, seed=None)
    assert (cfg.l_sub, cfg.seed) == (2, 4)
    assert cfg.seeds == list(range(4, 14))


@pytest.mark.parametrize(
    "text", ["bogus = 1", "l_sub = two", "task = graph", "repeats = 0", "just words", "weight_scale = max"]
)
def test_config_errors_are_config_stage(text):
    with pytest.raises(ExperimentError) as info:
        parse_config(text)
    assert info.value.stage == "config"


def test_missing_config_file(tmp_path):
    with pytest.raises(ExperimentError) as info:
        load_config(tmp_path / "none.cfg")
    assert info.value.stage == "config"


def test_missing_edge_list_is_datasets_stage(tmp_path):
    cfg = parse_config(f"edge_list = {tmp_path / 'absent.txt'}\nrepeats = 1")
    with pytest.raises(ExperimentError) as info:
        run_experiment(cfg)
    assert info.value.stage == "datasets"


def test_report_round_trip():
    cfg = ExperimentConfig(repeats=2)
    report = MetricsReport.from_runs(cfg, [{"auc": 0.8, "aupr": 0.7}, {"auc": 0.9, "aupr": 0.75}], 1.5)
    assert report.mean["auc"] == pytest.approx(0.85)
    assert report.std["auc"] == pytest.approx(0.05)
    assert MetricsReport.from_json(report.to_json()) == report
    assert "auc=0.8500" in report.summary()


def test_single_repeat_link_run(link_files, tmp_path):
    cfg = load_config(
        link_files / "run.cfg", repeats=1, out=str(tmp_path / "r.json"),
        checkpoint_dir=str(tmp_path / "ck"), predictions=str(tmp_path / "pred"),
    )
    report = run_experiment(cfg)
    assert report.repeats == 1 and report.seeds == [0]
    assert report.mean["auc"] == report.metrics["auc"][0]
    assert 0 <= report.mean["auc"] <= 1
    assert json.loads((tmp_path / "r.json").read_text())["task"] == "link"
    assert load_checkpoint(tmp_path / "ck" / "model_seed0.ckpt").config.task == "link"
    rows = np.loadtxt(tmp_path / "pred.seed0.txt")
    assert rows.shape[1] == 2 and set(rows[:, 1]) == {0, 1}


def test_repeats_are_reproducible(link_files):
    a = run_experiment(load_config(link_files / "run.cfg"))
    b = run_experiment(load_config(link_files / "run.cfg"))
    assert a.metrics == b.metrics and a.repeats == 2


def test_parallel_repeats_match_sequential(link_files):
    seq = run_experiment(load_config(link_files / "run.cfg"))
    par = run_experiment(load_config(link_files / "run.cfg", parallel_repeats=True))
    assert par.metrics == seq.metrics


def test_same_seed_same_split_different_tables(link_files):
    g = datasets.load_dataset(link_files / "edges.txt")
    a, b = datasets.build_link_split(g, 0), datasets.build_link_split(g, 0)
    assert np.array_equal(a.test, b.test)
    t11 = precompute_weights(a.observed_graph, 1, 1)
    t12 = precompute_weights(a.observed_graph, 1, 2)
    assert not np.array_equal(t11.edge_weights, t12.edge_weights)


def test_node_run(node_files):
    report = run_experiment(load_config(node_files / "run.cfg"))
    assert report.task == "node" and report.metrics["accuracy"][0] > 0.5


def test_cli_torsion(tmp_path, capsys):
    (tmp_path / "k.txt").write_text("# dim 0\n0\n1\n2\n# dim 1\n0 1\n0 2\n1 2\n# dim 2\n0 1 2\n")
    assert main(["torsion", str(tmp_path / "k.txt"), "--betti"]) == 0
    out = capsys.readouterr().out.split("\n")
    assert float(out[0].split()[1]) == pytest.approx(0.5 * math.log(3), abs=1e-12)
    assert out[1] == "betti 1 0 0"


def test_cli_weights(link_files, tmp_path, capsys):
    code = main([
        "weights", str(link_files / "edges.txt"), "--l-sub", "1", "--n", "2",
        "--out", str(tmp_path / "w.bin"), "--text", str(tmp_path / "w.txt"),
    ])
    assert code == 0
    g = datasets.load_dataset(link_files / "edges.txt")
    t = load_table(tmp_path / "w.bin", g)
    assert (t.l_sub, t.n) == (1, 2)
    assert len((tmp_path / "w.txt").read_text().splitlines()) == g.num_edges + g.num_vertices


def test_cli_train_link_and_export(link_files, tmp_path, capsys):
    code = main([
        "train-link", str(link_files / "run.cfg"), "--repeats", "1", "--epochs", "2",
        "--out", str(tmp_path / "r.json"),
    ])
    assert code == 0
    assert "TorGNN(1,1) link" in capsys.readouterr().out
    report = MetricsReport.from_json((tmp_path / "r.json").read_text())
    assert report.config["epochs"] == 2
    cfg_path = tmp_path / "ck.cfg"
    cfg_path.write_text((link_files / "run.cfg").read_text() + f"checkpoint_dir = {tmp_path}\nrepeats = 1\nepochs = 1\n")
    run_experiment(load_config(cfg_path))
    code = main([
        "export-embeddings", str(cfg_path), "--checkpoint", str(tmp_path / "model_seed0.ckpt"),
        "--out", str(tmp_path / "emb.txt"),
    ])
    assert code == 0
    rows = (tmp_path / "emb.txt").read_text().splitlines()
    assert len(rows) == 150 and len(rows[0].split()) == 17


def test_cli_stage_exit_codes(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text(f"edge_list = {tmp_path / 'missing.txt'}\n")
    assert main(["train-link", str(cfg)]) == EXIT_CODES["datasets"]
    cfg.write_text("nonsense = 1\n")
    assert main(["train-link", str(cfg)]) == EXIT_CODES["config"]
    assert "error: [config]" in capsys.readouterr().err


def test_cli_eval(tmp_path, capsys):
    (tmp_path / "s.txt").write_text("0.9 1\n0.4 1\n0.6 0\n0.2 0\n")
    assert main(["eval", str(tmp_path / "s.txt")]) == 0
    assert "auc 0.750000" in capsys.readouterr().out
    (tmp_path / "p.txt").write_text("1 1\n2 2\n3 0\n")
    assert main(["eval", str(tmp_path / "p.txt"), "--kind", "node"]) == 0
    assert "accuracy 0.666667" in capsys.readouterr().out


def test_cli_synth_and_convert(tmp_path, capsys):
    assert main(["synth", str(tmp_path / "s"), "--vertices", "100", "--edges", "300", "--communities", "3"]) == 0
    g = datasets.load_dataset(tmp_path / "s" / "edges.txt", labels=tmp_path / "s" / "labels.txt")
    assert (g.num_vertices, g.num_edges) == (100, 300)
    (tmp_path / "c.content").write_text("a 1 0 X\nb 0 1 Y\n")
    (tmp_path / "c.cites").write_text("a b\n")
    assert main(["convert-linqs", str(tmp_path / "c.content"), str(tmp_path / "c.cites"), str(tmp_path / "c")]) == 0
    assert (tmp_path / "c" / "edges.txt").read_text() == "1 0\n"
