import math

import numpy as np
import pytest

from oracles import brute_log_torsion_layers, random_graph
from torgnn.complex_core import load_graph, local_complex
from torgnn.torsion_weights import (
    WeightTableError,
    load_table,
    precompute_weights,
    propagation_matrix,
    save_table,
    torsion_edge_weight,
)

TRIANGLE = load_graph([(0, 1), (1, 2), (0, 2)], 3)
PATH = load_graph([(0, 1), (1, 2)], 3)
EDGE = load_graph([(0, 1)], 2)


def test_edge_weight_examples():
    assert torsion_edge_weight(TRIANGLE, 0, 1, 1, 1) == pytest.approx(math.log(3), abs=1e-12)
    assert torsion_edge_weight(TRIANGLE, 0, 1, 1, 2) == pytest.approx(0.5 * math.log(3), abs=1e-12)
    assert torsion_edge_weight(EDGE, 0, 0, 1, 1) == pytest.approx(0.5 * math.log(2), abs=1e-12)


def test_edge_weight_needs_an_edge():
    with pytest.raises(ValueError):
        torsion_edge_weight(PATH, 0, 2, 1, 1)


def test_triangle_table():
    t = precompute_weights(TRIANGLE, 1, 1)
    np.testing.assert_allclose(t.edge_weights, [math.log(3)] * 3, atol=1e-12)
    np.testing.assert_allclose(t.self_weights, [math.log(3)] * 3, atol=1e-12)


def test_path_table():
    t = precompute_weights(PATH, 1, 1)
    half3, half2 = 0.5 * math.log(3), 0.5 * math.log(2)
    assert t.weight(0, 1) == pytest.approx(half3, abs=1e-12)
    assert t.weight(2, 1) == pytest.approx(half3, abs=1e-12)
    assert t.weight(1, 1) == pytest.approx(half3, abs=1e-12)
    assert t.weight(0, 0) == pytest.approx(half2, abs=1e-12)
    assert t.weight(2, 2) == pytest.approx(half2, abs=1e-12)


def test_single_edge_table():
    t = precompute_weights(EDGE, 1, 1)
    assert t.weight(0, 1) == pytest.approx(0.5 * math.log(2), abs=1e-12)


def test_missing_pair_is_an_error():
    with pytest.raises(WeightTableError):
        precompute_weights(PATH, 1, 1).weight(0, 2)


def test_empty_graph_rejected():
    with pytest.raises(WeightTableError):
        precompute_weights(load_graph([], 0), 1, 1)


def test_weights_are_symmetric_and_non_negative():
    rng = np.random.default_rng(5)
    n, edges = random_graph(rng, max_vertices=10, p=0.4, min_vertices=6)
    g = load_graph(edges, n)
    t = precompute_weights(g, 1, 2)
    assert (t.edge_weights >= 0).all() and (t.self_weights >= 0).all()
    for x, y in g.edges.tolist():
        assert t.weight(x, y) == t.weight(y, x)
        assert torsion_edge_weight(g, y, x, 1, 2) == t.weight(x, y)


def test_table_matches_single_calls_and_oracle():
    rng = np.random.default_rng(8)
    n, edges = random_graph(rng, max_vertices=9, p=0.5, min_vertices=5)
    g = load_graph(edges, n)
    t = precompute_weights(g, 1, 2)
    for x, y in g.edges.tolist():
        assert t.weight(x, y) == torsion_edge_weight(g, x, y, 1, 2)
        k = local_complex(g, x, y, 1, 2)
        layers = [list(layer) for layer in k.simplices]
        assert t.weight(x, y) == pytest.approx(abs(brute_log_torsion_layers(layers)), abs=1e-8)


def test_worker_count_does_not_change_table():
    rng = np.random.default_rng(2)
    n, edges = random_graph(rng, max_vertices=30, p=0.2, min_vertices=30)
    g = load_graph(edges, n)
    serial = precompute_weights(g, 2, 2, workers=1, chunk=7)
    parallel = precompute_weights(g, 2, 2, workers=2, chunk=7)
    assert serial.to_text() == parallel.to_text()
    assert np.array_equal(serial.edge_weights, parallel.edge_weights)


@pytest.mark.parametrize(
    "g",
    [
        load_graph([(i, (i + 1) % 7) for i in range(7)], 7),
        load_graph([(i, j) for i in range(5) for j in range(i + 1, 5)], 5),
    ],
    ids=["cycle", "complete"],
)
def test_vertex_transitive_graphs_have_uniform_weights(g):
    for l_sub, n in [(1, 1), (1, 2), (2, 1)]:
        t = precompute_weights(g, l_sub, n)
        np.testing.assert_allclose(t.edge_weights, t.edge_weights[0], atol=1e-12)
        np.testing.assert_allclose(t.self_weights, t.self_weights[0], atol=1e-12)


def test_cache_round_trip_is_bit_exact(tmp_path):
    t = precompute_weights(TRIANGLE, 1, 2)
    path = tmp_path / "w.bin"
    save_table(t, path)
    back = load_table(path, TRIANGLE)
    assert (back.l_sub, back.n, back.graph_hash) == (1, 2, t.graph_hash)
    assert np.array_equal(back.edges, t.edges)
    assert back.edge_weights.tobytes() == t.edge_weights.tobytes()
    assert back.self_weights.tobytes() == t.self_weights.tobytes()


def test_cache_rejects_other_graph(tmp_path):
    path = tmp_path / "w.bin"
    save_table(precompute_weights(TRIANGLE, 1, 1), path)
    with pytest.raises(WeightTableError, match="mismatch"):
        load_table(path, PATH)


def test_cache_rejects_truncated_file(tmp_path):
    path = tmp_path / "w.bin"
    save_table(precompute_weights(TRIANGLE, 1, 1), path)
    data = path.read_bytes()
    for cut in (10, len(data) - 3):
        path.write_bytes(data[:cut])
        with pytest.raises(WeightTableError):
            load_table(path)


def test_cache_rejects_foreign_file(tmp_path):
    path = tmp_path / "w.bin"
    path.write_bytes(b"\0" * 200)
    with pytest.raises(WeightTableError, match="not a torsion"):
        load_table(path)


def test_text_export():
    lines = precompute_weights(PATH, 1, 1).to_text().splitlines()
    assert [tuple(map(int, l.split()[:2])) for l in lines] == [(0, 0), (0, 1), (1, 1), (1, 2), (2, 2)]
    assert float(lines[0].split()[2]) == 0.5 * math.log(2)
    assert len(lines[1].split()[2].replace(".", "").lstrip("0")) >= 16


def test_propagation_matrix_entries():
    t = precompute_weights(PATH, 1, 1)
    p = propagation_matrix(PATH, t).toarray()
    half3, half2 = 0.5 * math.log(3), 0.5 * math.log(2)
    expected = np.array([
        [half2, half3 / math.sqrt(2), 0],
        [half3 / math.sqrt(2), half3 / 2, half3 / math.sqrt(2)],
        [0, half3 / math.sqrt(2), half2],
    ])
    np.testing.assert_allclose(p, expected, atol=1e-14)
    assert np.array_equal(p, p.T)


def test_isolated_vertex_uses_unit_degree():
    g = load_graph([(0, 1)], 3)
    p = propagation_matrix(g, precompute_weights(g, 1, 1)).toarray()
    assert p[2, 2] == 0.0  # a lone vertex has log T = log 1
    assert p[2].sum() == p[:, 2].sum() == 0.0


def test_mean_scaling_divides_by_mean_weight():
    t = precompute_weights(PATH, 1, 1)
    raw = propagation_matrix(PATH, t).toarray()
    scaled = propagation_matrix(PATH, t, "mean").toarray()
    w = np.concatenate([t.edge_weights, t.edge_weights, t.self_weights])
    np.testing.assert_allclose(scaled * w.mean(), raw, atol=1e-15)
    with pytest.raises(ValueError):
        propagation_matrix(PATH, t, "max")


def test_mean_scaling_leaves_all_zero_table_alone():
    g = load_graph([], 3)
    assert not propagation_matrix(g, precompute_weights(g, 1, 1), "mean").toarray().any()


def test_propagation_rejects_stale_table():
    with pytest.raises(WeightTableError):
        propagation_matrix(PATH, precompute_weights(TRIANGLE, 1, 1))
