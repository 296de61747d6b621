import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from weightnet import _kernels
from weightnet.errors import CapacityError, DegenerateModelError, FormatError, InvalidConfigError
from weightnet.growth import (MAX_LINKS, GrowthConfig, GrowthState, MultiGraph, a_from_entrants,
                              degree_sequence, expected_entrants, generate, grow_step, init_state,
                              read_edge_list, theoretical_degree_model, write_edge_list)


@pytest.mark.parametrize("n0", [1, 3, 166])
def test_init_state(n0):
    s = init_state(n0)
    g = s.to_graph()
    assert s.t == 0 and s.node_count == n0
    assert g.edges.shape == (n0, 2) and g.self_loop.all()
    assert np.array_equal(g.edges[:, 0], g.edges[:, 1])
    assert g.n_links == 0
    assert np.array_equal(degree_sequence(g, include_self_loops=True), np.ones(n0))


def test_init_state_rejects_zero():
    with pytest.raises(InvalidConfigError):
        init_state(0)


@pytest.mark.parametrize("kw", [dict(a=-0.1), dict(a=1.5), dict(b=2.0), dict(n0=0), dict(m=-1),
                                dict(n0=2.5)])
def test_config_validation(kw):
    with pytest.raises(InvalidConfigError):
        GrowthConfig(**kw)


def test_config_text_round_trip():
    c = GrowthConfig(a=0.123456789, b=0.5, n0=7, m=100, seed=99)
    assert GrowthConfig.from_text(c.to_text()) == c
    with pytest.raises(FormatError):
        GrowthConfig.from_text("a=0.1\nbogus=3\n")


def test_full_entry_builds_disjoint_dyads():
    g = generate(GrowthConfig(a=1.0, n0=2, m=50, seed=1))
    links = g.links
    assert g.node_count == 2 + 100
    assert np.array_equal(links.ravel(), np.arange(2, 102))
    assert np.all(degree_sequence(g)[2:] == 1)


# -- attachment probabilities ---------------------------------------------------


def _fixed_state(weights):
    w = np.zeros(len(weights) + 8, dtype=np.int64)
    w[: len(weights)] = weights
    tree = np.zeros(w.shape[0] + 1, dtype=np.int64)
    _kernels.fenwick_build(w, tree)
    return w, tree


def _one_step(weights, u, a, b):
    w, tree = _fixed_state(weights)
    src = np.empty(1, dtype=np.int64)
    tgt = np.empty(1, dtype=np.int64)
    _kernels.grow_chunk(tree, w, src, tgt, 0, len(weights), int(sum(weights)),
                        np.atleast_2d(u), a, b)
    return int(src[0]), int(tgt[0])


def test_fenwick_matches_cumsum(rng):
    vals = rng.integers(0, 9, 50)
    w, tree = _fixed_state(vals)
    csum = np.concatenate([[0], np.cumsum(w)])
    for i in range(w.shape[0] + 1):
        assert _kernels.fenwick_prefix(tree, i) == csum[i]
    for r in range(int(vals.sum())):
        j = _kernels.fenwick_find(tree, r)
        assert csum[j] <= r < csum[j + 1]


def test_preferential_source_enumeration():
    # weights {3, 1}: every integer slot of the cumulative weight maps to its owner
    total = 4
    hits = np.zeros(2)
    for r in range(total):
        u = [0.9, 0.9, (r + 0.5) / total, 0.9, 0.9, 0.5]
        hits[_one_step([3, 1], u, 0.0, 0.0)[0]] += 1
    assert np.array_equal(hits / total, [0.75, 0.25])


def test_preferential_source_frequency():
    rng = np.random.default_rng(5)
    n = 100_000
    u = rng.random((n, 6))
    w0, t0 = _fixed_state([3, 1])
    src = np.empty(1, dtype=np.int64)
    tgt = np.empty(1, dtype=np.int64)
    count0 = 0
    for k in range(n):
        w, tree = w0.copy(), t0.copy()
        _kernels.grow_chunk(tree, w, src, tgt, 0, 2, 4, u[k:k + 1], 0.0, 0.0)
        count0 += src[0] == 0
    se = math.sqrt(0.75 * 0.25 / n)
    assert abs(count0 / n - 0.75) < 4 * se


def test_uniform_source_two_nodes():
    rng = np.random.default_rng(6)
    n = 20_000
    u = rng.random((n, 6))
    first = [_one_step([1, 1], u[k], 0.0, 1.0)[0] for k in range(n)]
    assert abs(np.mean(first) - 0.5) < 4 * math.sqrt(0.25 / n)


def test_target_excludes_source_and_renormalizes():
    # source forced to node 0 (weight 3); the rest {1, 2} is split 1/3, 2/3
    weights = [3, 1, 2]
    rest = 3
    counts = np.zeros(3)
    for r in range(rest):
        u = [0.9, 0.9, 0.0, 0.9, 0.9, (r + 0.5) / rest]
        s, t = _one_step(weights, u, 0.0, 0.0)
        assert s == 0
        counts[t] += 1
    assert np.array_equal(counts, [0, 1, 2])
    # uniform part: node 0 excluded, others equally likely
    got = {_one_step(weights, [0.9, 0.9, 0.0, 0.9, 0.0, q], 0.0, 1.0)[1] for q in (0.1, 0.6)}
    assert got == {1, 2}


def test_single_node_forces_new_target():
    g = generate(GrowthConfig(a=0.0, b=0.0, n0=1, m=1, seed=0))
    assert g.node_count == 2 and tuple(g.links[0]) == (0, 1)


# -- generation invariants -------------------------------------------------------


@given(a=st.floats(0, 1), b=st.floats(0, 1), n0=st.integers(1, 20), m=st.integers(0, 400),
       seed=st.integers(0, 2**32 - 1))
def test_generation_invariants(a, b, n0, m, seed):
    cfg = GrowthConfig(a=a, b=b, n0=n0, m=m, seed=seed)
    g = generate(cfg)
    links = g.links
    assert links.shape == (m, 2)
    assert np.all(links[:, 0] != links[:, 1])
    assert degree_sequence(g).sum() == 2 * m
    assert n0 <= g.node_count <= n0 + 2 * m
    assert links.size == 0 or (links.min() >= 0 and links.max() < g.node_count)
    assert g.self_loop.sum() == n0
    assert generate(cfg) == g


@given(a=st.floats(0, 1), b=st.floats(0, 1), n0=st.integers(1, 10), m=st.integers(1, 150),
       seed=st.integers(0, 2**31))
def test_step_by_step_matches_generate(a, b, n0, m, seed):
    cfg = GrowthConfig(a=a, b=b, n0=n0, m=m, seed=seed)
    state = init_state(n0)
    rng = np.random.default_rng(seed)
    for t in range(1, m + 1):
        grow_step(state, cfg, rng)
        assert state.t == t
        assert state.degrees.sum() == 2 * t
    assert state.to_graph() == generate(cfg)


def test_node_array_growth_preserves_stream():
    # a large entry rate forces several capacity doublings mid-chunk
    cfg = GrowthConfig(a=0.9, b=0.3, n0=1, m=5000, seed=11)
    g = generate(cfg)
    state = init_state(1)
    rng = np.random.default_rng(11)
    for _ in range(5000):
        grow_step(state, cfg, rng)
    assert state.to_graph() == g


def test_m_zero_returns_initial_graph():
    g = generate(GrowthConfig(n0=4, m=0, seed=3))
    assert g == init_state(4).to_graph()


def test_capacity_error():
    with pytest.raises(CapacityError):
        generate(GrowthConfig(n0=1, m=MAX_LINKS + 1))


def test_degree_sequence_examples():
    g = MultiGraph(2, [[0, 1]])
    assert degree_sequence(g).tolist() == [1, 1]
    g3 = generate(GrowthConfig(n0=3, m=0))
    assert degree_sequence(g3, include_self_loops=True).tolist() == [1, 1, 1]
    assert degree_sequence(g3).tolist() == [0, 0, 0]


def test_handshake_large():
    g = generate(GrowthConfig(a=0, b=0, n0=100, m=100_000, seed=2))
    assert degree_sequence(g).sum() == 200_000


def test_entrant_count_mean():
    a, m, n0 = 0.05, 2000, 10
    counts = np.array([generate(GrowthConfig(a=a, n0=n0, m=m, seed=s)).node_count - n0
                       for s in range(200)])
    se = counts.std(ddof=1) / math.sqrt(counts.shape[0])
    assert abs(counts.mean() - expected_entrants(a, m)) < 3 * se


def test_trade_scale_node_count():
    m = 1_079_398
    a = a_from_entrants(16, m)
    counts = [generate(GrowthConfig(a=a, n0=150, m=m, seed=s)).node_count for s in range(10)]
    assert abs(np.mean(counts) - 166) <= 5


def test_entrant_conversion():
    assert a_from_entrants(expected_entrants(0.01, 5000), 5000) == pytest.approx(0.01)
    with pytest.raises(InvalidConfigError):
        a_from_entrants(3, 0)


# -- analytic degree models ----------------------------------------------------


def test_theoretical_no_entry():
    model = theoretical_degree_model(0.0, 100_000, 100)
    assert model.family == "exponential" and model["mean"] == 2000


def test_theoretical_entry():
    model = theoretical_degree_model(0.2, 100_000, 100)
    assert model.family == "yule_powerlaw_cutoff"
    assert model["exponent"] == pytest.approx(2.25)
    assert model["cutoff"] == pytest.approx(2001 ** 0.8 - 1)


def test_theoretical_limit_consistency():
    t, n0 = 10**6, 10
    a = 1e-9
    assert theoretical_degree_model(a, t, n0)["cutoff"] == pytest.approx(2 * t / n0, rel=1e-6)


def test_theoretical_degenerate():
    with pytest.raises(DegenerateModelError):
        theoretical_degree_model(1.0, 10, 1)


def test_edge_list_round_trip(tmp_path):
    g = generate(GrowthConfig(a=0.2, b=0.4, n0=5, m=300, seed=8))
    path = tmp_path / "edges.tsv"
    write_edge_list(g, path)
    assert read_edge_list(path) == g
    text = path.read_text()
    write_edge_list(read_edge_list(path), path)
    assert path.read_text() == text


def test_edge_list_rejects_bad_header(tmp_path):
    path = tmp_path / "e.tsv"
    path.write_text("a\tb\n0\t1\n")
    with pytest.raises(FormatError):
        read_edge_list(path)


def test_multigraph_is_immutable():
    g = MultiGraph(3, [[0, 1], [1, 2]])
    with pytest.raises(ValueError):
        g.edges[0, 0] = 2


def test_state_degrees_track_self_loops():
    s = GrowthState(3)
    assert s.degrees.tolist() == [0, 0, 0]
