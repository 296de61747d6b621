import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from weightnet.errors import DataError, FormatError, InvalidConfigError
from weightnet.growth import GrowthConfig, MultiGraph, generate
from weightnet.weights import (WeightedPanel, WeightModel, assign_initial_weights, evolve_weights,
                               growth_rates, log_growth, node_strength, read_panel, read_strengths,
                               write_panel, write_strengths)


@pytest.fixture(scope="module")
def graph():
    return generate(GrowthConfig(a=0.05, b=0.2, n0=20, m=2000, seed=4))


def test_model_validation():
    with pytest.raises(InvalidConfigError):
        WeightModel(sigma_w=-1)
    with pytest.raises(InvalidConfigError):
        WeightModel(mu_x=math.inf)
    assert WeightModel(sigma_x=0.2, martingale=True).shock_location == pytest.approx(-0.02)


@pytest.mark.parametrize("mu_w, expected", [(0.0, 1.0), (math.log(5), 5.0)])
def test_degenerate_initial_weights(graph, rng, mu_w, expected):
    panel = assign_initial_weights(graph, WeightModel(mu_w=mu_w, sigma_w=0), rng)
    assert panel.periods == 1
    assert np.all(panel.weights == pytest.approx(expected, rel=0, abs=1e-15))
    assert panel.weights.shape[1] == graph.n_links


def test_initial_weights_lognormal():
    n = 100_000
    g = MultiGraph(n + 1, np.column_stack([np.zeros(n, int), np.arange(1, n + 1)]))
    panel = assign_initial_weights(g, WeightModel(mu_w=0, sigma_w=1), np.random.default_rng(1))
    assert stats.kstest(np.log(panel.weights[0]), "norm").statistic < 0.01


def test_constant_shocks(graph, rng):
    panel = assign_initial_weights(graph, WeightModel(sigma_w=1.0), rng)
    flat = evolve_weights(panel, WeightModel(mu_x=0, sigma_x=0), 5, rng)
    assert flat.periods == 6
    assert np.all(flat.weights == flat.weights[0])
    assert np.all(growth_rates(flat, "edge").pooled() == 0)
    double = evolve_weights(panel, WeightModel(mu_x=math.log(2), sigma_x=0), 3, rng)
    for t in range(3):
        assert np.allclose(double.weights[t + 1], 2 * double.weights[t], rtol=1e-15)


def test_log_variance_growth():
    n = 10_000
    g = MultiGraph(n + 1, np.column_stack([np.zeros(n, int), np.arange(1, n + 1)]))
    rng = np.random.default_rng(9)
    model = WeightModel(sigma_w=0, mu_x=0, sigma_x=0.1)
    panel = evolve_weights(assign_initial_weights(g, model, rng), model, 100, rng)
    var = np.log(panel.weights[-1]).var(ddof=1)
    assert var == pytest.approx(1.0, rel=0.05)


@given(steps=st.integers(1, 20), sigma=st.floats(0, 3), seed=st.integers(0, 2**31))
def test_weights_stay_positive(steps, sigma, seed):
    g = MultiGraph(3, [[0, 1], [1, 2], [0, 2]])
    rng = np.random.default_rng(seed)
    model = WeightModel(mu_x=-1.0, sigma_x=sigma)
    panel = evolve_weights(assign_initial_weights(g, model, rng), model, steps, rng)
    assert np.all(panel.weights > 0)


def test_node_strength_examples(rng):
    g = MultiGraph(4, [[0, 0], [0, 1], [0, 2]], self_loop=[True, False, False])
    panel = WeightedPanel.from_graph(g, np.array([[2.0, 3.0]]))
    s = node_strength(panel, 0)
    assert s[0] == 5.0 and s[1] == 2.0 and s[2] == 3.0
    assert s[3] == 0.0
    with pytest.raises(IndexError):
        node_strength(panel, 1)


def test_strength_brute_force(graph, rng):
    model = WeightModel(sigma_w=1.2, sigma_x=0.3)
    panel = evolve_weights(assign_initial_weights(graph, model, rng), model, 3, rng)
    links = graph.links
    for t in range(panel.periods):
        brute = np.zeros(graph.node_count)
        for (i, j), w in zip(links.tolist(), panel.weights[t].tolist()):
            brute[i] += w
            brute[j] += w
        assert np.allclose(node_strength(panel, t), brute, rtol=1e-12, atol=0)


def test_growth_rate_examples():
    g, ok, skipped = log_growth([10.0, 5.0, 0.0], [10.0, 10.0, 4.0])
    assert g.tolist() == [0.0, pytest.approx(math.log(2))]
    assert skipped == 1 and ok.tolist() == [True, True, False]
    with pytest.raises(DataError):
        log_growth([1.0, -1.0], [1.0, 1.0], strict=True)


def test_single_link_node_growth_equals_shock(rng):
    g = MultiGraph(3, [[0, 1], [1, 2]])
    model = WeightModel(sigma_x=0.5)
    panel = evolve_weights(assign_initial_weights(g, model, rng), model, 1, rng)
    node = growth_rates(panel, "node")
    edge = growth_rates(panel, "edge")
    g_node = dict(zip(node.ids[0].tolist(), node.values[0].tolist()))
    assert g_node[0] == pytest.approx(edge.values[0][0], abs=1e-14)
    assert g_node[2] == pytest.approx(edge.values[0][1], abs=1e-14)


def test_isolated_nodes_skipped(rng):
    g = MultiGraph(4, [[0, 1]])
    model = WeightModel()
    panel = evolve_weights(assign_initial_weights(g, model, rng), model, 2, rng)
    rates = growth_rates(panel, "node")
    assert rates.skipped == 2 * 2
    assert all(ids.tolist() == [0, 1] for ids in rates.ids)


def test_growth_rates_need_two_periods(graph, rng):
    panel = assign_initial_weights(graph, WeightModel(), rng)
    with pytest.raises(InvalidConfigError):
        growth_rates(panel)


@pytest.mark.parametrize("k", [1, 2, 8])
def test_node_growth_mixture(k):
    # star-free construction: each node owns k disjoint links
    nodes = 4000
    rng = np.random.default_rng(k)
    src = np.repeat(np.arange(nodes), k)
    tgt = nodes + np.arange(nodes * k)
    g = MultiGraph(nodes + nodes * k, np.column_stack([src, tgt]))
    model = WeightModel(sigma_w=1.0, sigma_x=0.2)
    panel = evolve_weights(assign_initial_weights(g, model, rng), model, 1, rng)
    got = np.log(panel.strengths[1][:nodes] / panel.strengths[0][:nodes])
    # oracle: the K-fold sum built from fresh draws of the same ingredients
    w0 = np.exp(rng.normal(0, 1.0, (nodes, k)))
    x = np.exp(rng.normal(0, 0.2, (nodes, k)))
    ref = np.log((w0 * x).sum(1) / w0.sum(1))
    assert stats.ks_2samp(got, ref).pvalue > 0.001


def test_shock_stream_layout():
    # shocks are drawn as one (steps, links) block
    g = MultiGraph(3, [[0, 1], [1, 2]])
    model = WeightModel(sigma_w=0, sigma_x=0.3, mu_x=0.1)
    panel = evolve_weights(assign_initial_weights(g, model, np.random.default_rng(0)),
                           model, 4, np.random.default_rng(5))
    z = np.random.default_rng(5).standard_normal((4, 2))
    expected = np.exp(np.cumsum(0.1 + 0.3 * z, axis=0))
    assert np.allclose(panel.weights[1:], expected, rtol=1e-12)


def test_panel_round_trip(tmp_path, graph, rng):
    model = WeightModel(sigma_w=2.0, sigma_x=0.4)
    panel = evolve_weights(assign_initial_weights(graph, model, rng), model, 2, rng)
    write_panel(panel, tmp_path / "w.tsv")
    back = read_panel(tmp_path / "w.tsv", graph)
    assert np.allclose(back.weights, panel.weights, rtol=1e-11)
    write_panel(back, tmp_path / "w2.tsv")
    assert (tmp_path / "w.tsv").read_text() == (tmp_path / "w2.tsv").read_text()
    write_strengths(panel, tmp_path / "s.tsv")
    periods, s = read_strengths(tmp_path / "s.tsv")
    assert periods.tolist() == [0, 1, 2]
    assert np.allclose(s, panel.strengths, rtol=1e-11)


def test_strength_file_matches_weight_file(tmp_path, graph, rng):
    model = WeightModel(sigma_w=1.0, sigma_x=0.2)
    panel = evolve_weights(assign_initial_weights(graph, model, rng), model, 2, rng)
    write_panel(panel, tmp_path / "w.tsv")
    write_strengths(panel, tmp_path / "s.tsv")
    w = np.loadtxt(tmp_path / "w.tsv", skiprows=1)
    s = np.loadtxt(tmp_path / "s.tsv", skiprows=1)
    for p in range(panel.periods):
        assert s[s[:, 0] == p, 2].sum() == pytest.approx(2 * w[w[:, 0] == p, 2].sum(), rel=1e-10)


def test_read_panel_rejects_mismatch(tmp_path, graph, rng):
    panel = assign_initial_weights(graph, WeightModel(), rng)
    write_panel(panel, tmp_path / "w.tsv")
    other = generate(GrowthConfig(n0=3, m=5, seed=1))
    with pytest.raises(FormatError):
        read_panel(tmp_path / "w.tsv", other)
