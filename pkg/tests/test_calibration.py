import math

import numpy as np
import pytest
from scipy import stats

from weightnet.calibration import (SWEEP_HEADER, CellResult, ReferenceSummary, _pair_counts,
                                   _rank_labels, aligned_mantel, cell_as_dict, evaluate_cell,
                                   link_count_matrix, select_best, summarize_reference, sweep,
                                   write_sweep_table)
from weightnet.errors import EmptyInputError, FormatError, InvalidCellError
from weightnet.growth import GrowthConfig, MultiGraph, degree_sequence, generate

M = 3000


@pytest.fixture(scope="module")
def reference():
    return summarize_reference(generate(GrowthConfig(a=0.02, b=0.0, n0=60, m=M, seed=99)))


def test_link_count_matrix_examples():
    g = MultiGraph(2, [[0, 1], [1, 0], [0, 1]])
    mat = link_count_matrix(g)
    assert mat[0, 1] == 3 and mat[1, 0] == 3 and mat[0, 0] == 0
    empty = generate(GrowthConfig(n0=4, m=0))
    assert not link_count_matrix(empty).any()
    padded = link_count_matrix(g, 5)
    assert padded.shape == (5, 5) and padded.sum() == 6
    with pytest.raises(InvalidCellError):
        link_count_matrix(g, 1)


def test_link_count_conservation():
    g = generate(GrowthConfig(a=0.1, b=0.3, n0=10, m=2000, seed=1))
    mat = link_count_matrix(g)
    assert np.array_equal(mat, mat.T)
    assert np.triu(mat, 1).sum() == 2000 and np.all(np.diag(mat) == 0)
    sp = link_count_matrix(g, as_sparse=True)
    assert np.array_equal(sp.toarray(), mat)


def test_pair_counts_brute_force(rng):
    links = rng.integers(0, 30, (500, 2))
    links = links[links[:, 0] != links[:, 1]]
    pairs, counts = _pair_counts(links)
    brute = {}
    for i, j in links.tolist():
        key = (min(i, j), max(i, j))
        brute[key] = brute.get(key, 0) + 1
    assert dict(zip(map(tuple, pairs.tolist()), counts.tolist())) == brute


def test_summary_fields(reference):
    assert reference.link_count == M
    assert reference.counts.sum() == M
    vals, pmf = reference.degree_distribution
    assert pmf.sum() == pytest.approx(1.0)
    mat = reference.link_count_matrix
    assert (mat != mat.T).nnz == 0 and mat.sum() == 2 * M


def test_single_dyad_summary():
    ref = summarize_reference(MultiGraph(2, [[0, 1]]))
    vals, pmf = ref.degree_distribution
    assert vals.tolist() == [1] and pmf.tolist() == [1.0]


def test_empty_reference():
    with pytest.raises(EmptyInputError):
        summarize_reference(generate(GrowthConfig(n0=3, m=0)))


def test_summary_round_trip(tmp_path, reference):
    reference.write(tmp_path / "ref.tsv")
    back = ReferenceSummary.read(tmp_path / "ref.tsv")
    assert back == reference
    back.write(tmp_path / "ref2.tsv")
    assert (tmp_path / "ref.tsv").read_text() == (tmp_path / "ref2.tsv").read_text()


def test_summary_read_rejects_garbage(tmp_path):
    (tmp_path / "bad.tsv").write_text("hello\n")
    with pytest.raises(FormatError):
        ReferenceSummary.read(tmp_path / "bad.tsv")
    (tmp_path / "bad2.tsv").write_text("# node_count=3\n# link_count=5\ni\tj\tlinks\n0\t1\t2\n")
    with pytest.raises(FormatError):
        ReferenceSummary.read(tmp_path / "bad2.tsv")


def test_aligned_mantel_matches_dense_oracle(reference):
    g = generate(GrowthConfig(a=0.01, b=0.2, n0=55, m=M, seed=3))
    deg = degree_sequence(g)
    pairs, counts = _pair_counts(g.links)
    r, p = aligned_mantel(pairs, counts, deg, reference)
    assert p == 1.0
    # dense oracle: relabel both matrices by descending degree, pad to a common size
    n = max(g.node_count, reference.node_count)
    A = link_count_matrix(g, n)
    B = reference.link_count_matrix.toarray()
    B = np.pad(B, ((0, n - B.shape[0]), (0, n - B.shape[0])))
    oa = np.argsort(-np.pad(deg, (0, n - deg.size)), kind="stable")
    ob = np.argsort(-np.pad(reference.degrees, (0, n - reference.node_count)), kind="stable")
    A, B = A[np.ix_(oa, oa)], B[np.ix_(ob, ob)]
    iu = np.triu_indices(n, 1)
    assert r == pytest.approx(np.corrcoef(A[iu], B[iu])[0, 1], abs=1e-12)


def test_aligned_mantel_permutations(reference):
    deg = reference.degrees
    r, p = aligned_mantel(reference.pairs, reference.counts, deg, reference, permutations=49,
                          rng=np.random.default_rng(0))
    assert r == pytest.approx(1.0)
    assert p == 1 / 50
    r_rand, _ = aligned_mantel(reference.pairs, reference.counts, deg, reference,
                               alignment="random", rng=np.random.default_rng(1))
    assert r_rand < 0.5
    with pytest.raises(InvalidCellError):
        aligned_mantel(reference.pairs, reference.counts, deg, reference, alignment="random")
    with pytest.raises(InvalidCellError):
        aligned_mantel(reference.pairs, reference.counts, deg, reference, alignment="name")


def test_rank_labels():
    assert _rank_labels(np.array([1, 5, 5, 0])).tolist() == [2, 0, 1, 3]


def test_evaluate_cell_basic(reference):
    res = evaluate_cell(0.01, 0.0, reference, 3, seed=4)
    assert res.replicates == 3
    assert res.expected_entrants == pytest.approx(2 * 0.01 * M)
    assert res.n0 == round(reference.node_count - 60)
    assert -1 <= res.mantel_r <= 1 and 0 <= res.ks_degree <= 1
    assert res.mantel_r_se >= 0 and res.ks_se >= 0
    assert evaluate_cell(0.01, 0.0, reference, 3, seed=4) == res


def test_evaluate_cell_infeasible(reference):
    with pytest.raises(InvalidCellError):
        evaluate_cell(0.5, 0.0, reference, 1, seed=0)
    with pytest.raises(InvalidCellError):
        evaluate_cell(0.0, 0.0, reference, 0, seed=0)


def test_sweep_one_cell_equals_evaluate(reference):
    [cell] = sweep([0.005], [0.5], reference, 2, seed=8)
    assert cell == evaluate_cell(0.005, 0.5, reference, 2, seed=8)


def test_sweep_order_independent(reference):
    a, b = [0.0, 0.01], [0.0, 1.0]
    fwd = sweep(a, b, reference, 2, seed=5)
    rev = sweep(a[::-1], b[::-1], reference, 2, seed=5)
    key = lambda r: (r.a, r.b)
    assert sorted(fwd, key=key) == sorted(rev, key=key)
    assert [(r.a, r.b) for r in fwd] == [(0.0, 0.0), (0.0, 1.0), (0.01, 0.0), (0.01, 1.0)]


def test_sweep_parallel_matches_serial(reference):
    serial = sweep([0.0, 0.01], [0.0], reference, 2, seed=6)
    parallel = sweep([0.0, 0.01], [0.0], reference, 2, seed=6, workers=2)
    assert serial == parallel


def test_sweep_reports_failed_cells(reference):
    res = sweep([0.0, 0.9], [0.0], reference, 1, seed=1)
    assert not res[0].error
    assert "InvalidCellError" in res[1].error and math.isnan(res[1].mantel_r)
    assert select_best(res, "ks") is res[0]


def test_sweep_entrant_grid(reference):
    res = sweep(None, [0.0], reference, 1, seed=1, entrants_grid=[0, 30])
    assert [r.a for r in res] == [0.0, 30 / (2 * M)]
    with pytest.raises(InvalidCellError):
        sweep([], [0.0], reference, 1, seed=1)


def test_preferential_reference_prefers_b0(reference):
    b_grid = [0.0, 0.25, 0.5, 0.75, 1.0]
    res = sweep([0.02], b_grid, reference, 4, seed=2)
    r = [c.mantel_r for c in res]
    assert r[0] == max(r)
    rho, p = stats.spearmanr(b_grid, r)
    assert rho < 0 and p < 0.05


def _cell(a, b, r, ks, r_se=0.0):
    return CellResult(a, b, r, 1.0, ks, 1, 0.0, mantel_r_se=r_se)


def test_select_best_rules():
    one = _cell(0.1, 0.0, 0.5, 0.2)
    assert select_best([one]) is one
    lo, hi = _cell(0.1, 0.0, 0.4, 0.1), _cell(0.1, 0.0, 0.6, 0.1)
    assert select_best([lo, hi], "mantel") is hi
    assert select_best([lo, hi], "ks") is lo  # tie on KS: first by (a, b) order
    band = [_cell(0.0, 0.0, 0.80, 0.30, r_se=0.05), _cell(0.1, 0.0, 0.77, 0.10),
            _cell(0.2, 0.0, 0.70, 0.05)]
    assert select_best(band, "combined") is band[1]
    ties = [_cell(0.2, 0.5, 0.5, 0.1), _cell(0.1, 0.5, 0.5, 0.1), _cell(0.1, 0.0, 0.5, 0.1)]
    assert select_best(ties, "ks") is ties[2]
    with pytest.raises(InvalidCellError):
        select_best(ties, "best")
    with pytest.raises(InvalidCellError):
        select_best([CellResult(0, 0, math.nan, math.nan, math.nan, 1, 0, error="x")])


def test_sweep_table(tmp_path):
    cells = [_cell(0.0, 0.5, 0.25, 0.125)]
    write_sweep_table(cells, tmp_path / "s.tsv")
    lines = (tmp_path / "s.tsv").read_text().splitlines()
    assert lines[0] == SWEEP_HEADER
    assert lines[1] == "0.0\t0.5\t0.0\t0.25\t1.0\t0.125\t1"
    assert cell_as_dict(cells[0])["mantel_r"] == 0.25
