"""Grid calibration of the entry and random-assignment parameters.

Each (a, b) cell generates replicate networks with the reference's link count
and a node budget matched to the reference, then scores them against the
reference by

* Mantel correlation of the link-count matrices, nodes aligned by degree rank;
* two-sample KS distance between the degree samples.

Cells are seeded from ``(seed, a, b)`` alone, so results do not depend on the
order or grouping in which cells are evaluated.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy import sparse

from .errors import DegenerateMatrixError, EmptyInputError, FormatError, InvalidCellError, WeightnetError
from .growth import GrowthConfig, MultiGraph, a_from_entrants, generate
from .stats import ks_two_sample

SWEEP_HEADER = "a\tb\tentrants_expected\tmantel_r\tmantel_p\tks_degree\treplicates"
CRITERIA = ("mantel", "ks", "combined")


def _pair_counts(links: np.ndarray):
    """Unique undirected pairs (i < j) and their multiplicities."""
    if links.shape[0] == 0:
        return np.empty((0, 2), dtype=np.int64), np.empty(0, dtype=np.int64)
    lo = np.minimum(links[:, 0], links[:, 1]).astype(np.int64)
    hi = np.maximum(links[:, 0], links[:, 1]).astype(np.int64)
    base = int(hi.max()) + 1
    keys, counts = np.unique(lo * base + hi, return_counts=True)
    return np.column_stack([keys // base, keys % base]), counts.astype(np.int64)


def link_count_matrix(graph: MultiGraph, node_count: int | None = None, *, as_sparse: bool = False):
    """Symmetric matrix of parallel-link counts; diagonal zero.

    ``node_count`` may exceed the graph's own count (zero padding).
    """
    n = graph.node_count if node_count is None else int(node_count)
    if n < graph.node_count:
        raise InvalidCellError(f"node_count {n} is below the graph's {graph.node_count} nodes")
    pairs, counts = _pair_counts(graph.links)
    upper = sparse.coo_matrix((counts, (pairs[:, 0], pairs[:, 1])), shape=(n, n), dtype=np.int64)
    mat = (upper + upper.T).tocsr()
    return mat if as_sparse else mat.toarray()


@dataclass
class ReferenceSummary:
    node_count: int
    link_count: int
    pairs: np.ndarray
    counts: np.ndarray

    @property
    def degrees(self) -> np.ndarray:
        return (np.bincount(self.pairs[:, 0], self.counts, self.node_count)
                + np.bincount(self.pairs[:, 1], self.counts, self.node_count)).astype(np.int64)

    @property
    def link_count_matrix(self):
        upper = sparse.coo_matrix((self.counts, (self.pairs[:, 0], self.pairs[:, 1])),
                                  shape=(self.node_count, self.node_count), dtype=np.int64)
        return (upper + upper.T).tocsr()

    @property
    def degree_distribution(self):
        """``(values, pmf)`` of the degree sample."""
        vals, cnt = np.unique(self.degrees, return_counts=True)
        return vals, cnt / cnt.sum()

    def __eq__(self, other):
        if not isinstance(other, ReferenceSummary):
            return NotImplemented
        return (self.node_count == other.node_count and self.link_count == other.link_count
                and np.array_equal(self.pairs, other.pairs)
                and np.array_equal(self.counts, other.counts))

    __hash__ = None

    def _aligned(self):
        cached = self.__dict__.get("_aligned_cache")
        if cached is None:
            cached = _AlignedCounts(self.pairs, self.counts, _rank_labels(self.degrees))
            self.__dict__["_aligned_cache"] = cached
        return cached

    def write(self, path) -> None:
        lines = [f"# node_count={self.node_count}", f"# link_count={self.link_count}", "i\tj\tlinks"]
        lines += [f"{i}\t{j}\t{c}" for (i, j), c in zip(self.pairs.tolist(), self.counts.tolist())]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def read(cls, path) -> "ReferenceSummary":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        meta = {}
        body_start = None
        for k, line in enumerate(lines):
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                meta[key] = int(value)
            elif line.strip() == "i\tj\tlinks":
                body_start = k + 1
                break
            else:
                raise FormatError(f"{path}: unexpected line {k + 1}: {line!r}")
        if body_start is None or "node_count" not in meta or "link_count" not in meta:
            raise FormatError(f"{path}: not a reference summary")
        body = lines[body_start:]
        data = (np.loadtxt(body, dtype=np.int64, delimiter="\t", ndmin=2) if body
                else np.empty((0, 3), dtype=np.int64))
        out = cls(meta["node_count"], meta["link_count"], data[:, :2].copy(), data[:, 2].copy())
        if int(out.counts.sum()) != out.link_count:
            raise FormatError(f"{path}: link counts do not sum to link_count")
        return out


def summarize_reference(graph: MultiGraph) -> ReferenceSummary:
    if graph.n_links == 0:
        raise EmptyInputError("reference network has no links")
    pairs, counts = _pair_counts(graph.links)
    return ReferenceSummary(graph.node_count, graph.n_links, pairs, counts)


# ---------------------------------------------------------------------------
# sparse Mantel on rank-aligned link counts


def _rank_labels(degrees, rng=None):
    """Node -> rank position; rank 0 is the largest degree (ties by id)."""
    n = degrees.shape[0]
    order = np.argsort(-degrees, kind="stable") if rng is None else rng.permutation(n)
    rank = np.empty(n, dtype=np.int64)
    rank[order] = np.arange(n)
    return rank


# Fixed key base so keys do not depend on the padded size.
_KEY_BASE = 1 << 31


def _keys(pairs, labels):
    i = labels[pairs[:, 0]]
    j = labels[pairs[:, 1]]
    return np.minimum(i, j) * _KEY_BASE + np.maximum(i, j)


class _AlignedCounts:
    """Upper-triangle entries of a link-count matrix in an aligned label space."""

    def __init__(self, pairs, counts, labels):
        keys = _keys(pairs, labels)
        order = np.argsort(keys)
        self.keys = keys[order]
        self.counts = counts[order].astype(float)
        self.s1 = float(self.counts.sum())
        self.s2 = float((self.counts ** 2).sum())


def _cross(x: _AlignedCounts, y: _AlignedCounts) -> float:
    _, ix, iy = np.intersect1d(x.keys, y.keys, assume_unique=True, return_indices=True)
    return float(np.dot(x.counts[ix], y.counts[iy]))


def _corr(sxy, x, y, total):
    cov = total * sxy - x.s1 * y.s1
    vx = total * x.s2 - x.s1 ** 2
    vy = total * y.s2 - y.s1 ** 2
    if vx <= 0 or vy <= 0:
        raise DegenerateMatrixError("off-diagonal link counts have zero variance")
    return float(np.clip(cov / math.sqrt(vx * vy), -1.0, 1.0))


def aligned_mantel(sim_pairs, sim_counts, sim_degrees, ref: ReferenceSummary, *,
                   permutations: int = 0, rng: np.random.Generator | None = None,
                   alignment: str = "degree"):
    """Mantel r (and one-sided permutation p) between a simulated network and
    the reference after mapping both onto a shared rank space.

    Returns ``(r, p)``; ``p = 1`` when ``permutations == 0``.
    """
    n = max(sim_degrees.shape[0], ref.node_count)
    pad = lambda d: np.concatenate([d, np.zeros(n - d.shape[0], dtype=d.dtype)])
    if alignment == "degree":
        sim_lab = _rank_labels(pad(sim_degrees))
    elif alignment == "random":
        if rng is None:
            raise InvalidCellError("random alignment needs an rng")
        sim_lab = _rank_labels(pad(sim_degrees), rng)
    else:
        raise InvalidCellError(f"alignment must be 'degree' or 'random', got {alignment!r}")
    # zero padding appends the padded nodes after every real node in rank
    # order, so the reference side is the same for every n
    y = ref._aligned()
    x = _AlignedCounts(sim_pairs, sim_counts, sim_lab)
    total = n * (n - 1) / 2
    r = _corr(_cross(x, y), x, y, total)
    if permutations <= 0:
        return r, 1.0
    rng = rng if rng is not None else np.random.default_rng()
    hits = 0
    for _ in range(permutations):
        perm = rng.permutation(n)
        xp = _AlignedCounts(sim_pairs, sim_counts, perm[sim_lab])
        hits += _corr(_cross(xp, y), xp, y, total) >= r - 1e-12
    return r, (hits + 1) / (permutations + 1)


# ---------------------------------------------------------------------------
# cells


@dataclass
class CellResult:
    a: float
    b: float
    mantel_r: float
    mantel_p: float
    ks_degree: float
    replicates: int
    expected_entrants: float
    n0: int = 0
    mantel_r_se: float = 0.0
    ks_se: float = 0.0
    error: str = ""


def _cell_seed(seed: int, a: float, b: float) -> np.random.SeedSequence:
    words = np.frombuffer(np.array([a, b], dtype=np.float64).tobytes(), dtype=np.uint32)
    return np.random.SeedSequence([int(seed) & 0xFFFFFFFF, *words.tolist()])


def _se(values):
    values = np.asarray(values, dtype=float)
    return float(values.std(ddof=1) / math.sqrt(values.shape[0])) if values.shape[0] > 1 else 0.0


def evaluate_cell(a: float, b: float, reference: ReferenceSummary, replicates: int, seed: int, *,
                  m: int | None = None, permutations: int = 0,
                  alignment: str = "degree") -> CellResult:
    """Score one (a, b) cell against ``reference``.

    ``m`` defaults to the reference link count. The initial node budget is
    the reference node count minus the expected entrants ``2 a m``.
    """
    if replicates < 1:
        raise InvalidCellError("replicates must be >= 1")
    m = reference.link_count if m is None else int(m)
    entrants = 2.0 * a * m
    if entrants >= reference.node_count:
        raise InvalidCellError(
            f"expected entrants {entrants:g} >= reference node count {reference.node_count}")
    n0 = max(1, int(round(reference.node_count - entrants)))
    ref_deg = reference.degrees
    rs, ps, ks = [], [], []
    for child in _cell_seed(seed, a, b).spawn(replicates):
        gen_rng, test_rng = (np.random.default_rng(s) for s in child.spawn(2))
        graph = generate(GrowthConfig(a=a, b=b, n0=n0, m=m), rng=gen_rng)
        links = graph.links
        deg = (np.bincount(links[:, 0], minlength=graph.node_count)
               + np.bincount(links[:, 1], minlength=graph.node_count))
        pairs, counts = _pair_counts(links)
        r, p = aligned_mantel(pairs, counts, deg, reference, permutations=permutations,
                              rng=test_rng, alignment=alignment)
        rs.append(r)
        ps.append(p)
        ks.append(ks_two_sample(deg, ref_deg))
    return CellResult(float(a), float(b), float(np.mean(rs)), float(np.mean(ps)),
                      float(np.mean(ks)), replicates, entrants, n0, _se(rs), _se(ks))


def _safe_cell(args):
    a, b, reference, replicates, seed, kwargs = args
    try:
        return evaluate_cell(a, b, reference, replicates, seed, **kwargs)
    except WeightnetError as exc:
        m = kwargs.get("m") or reference.link_count
        return CellResult(float(a), float(b), math.nan, math.nan, math.nan, replicates,
                          2.0 * a * m, error=f"{type(exc).__name__}: {exc}")


def sweep(a_grid, b_grid, reference: ReferenceSummary, replicates: int, seed: int, *,
          entrants_grid=None, m: int | None = None, permutations: int = 0,
          alignment: str = "degree", workers: int = 1) -> list[CellResult]:
    """Evaluate every (a, b) cell; a varies slowest.

    Pass ``entrants_grid`` (expected entrant counts) instead of ``a_grid`` to
    parameterize entry the way it is usually plotted. Failed cells come back
    with ``error`` set and NaN statistics.
    """
    m_eff = reference.link_count if m is None else int(m)
    if entrants_grid is not None:
        a_grid = [a_from_entrants(e, m_eff) for e in entrants_grid]
    a_grid, b_grid = list(a_grid), list(b_grid)
    if not a_grid or not b_grid:
        raise InvalidCellError("grids must be nonempty")
    kwargs = {"m": m, "permutations": permutations, "alignment": alignment}
    jobs = [(a, b, reference, replicates, seed, kwargs) for a in a_grid for b in b_grid]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_safe_cell, jobs))
    return [_safe_cell(job) for job in jobs]


def select_best(results, criterion: str = "combined") -> CellResult:
    """Pick a cell. Ties go to the smaller a, then the smaller b.

    ``combined`` keeps the cells whose Mantel r is within one standard error
    of the best r and returns the one with the smallest KS distance.
    """
    if criterion not in CRITERIA:
        raise InvalidCellError(f"criterion must be one of {CRITERIA}")
    ok = [r for r in results if not r.error]
    if not ok:
        raise InvalidCellError("no successful cells to select from")
    if criterion == "mantel":
        return min(ok, key=lambda r: (-r.mantel_r, r.a, r.b))
    if criterion == "ks":
        return min(ok, key=lambda r: (r.ks_degree, r.a, r.b))
    top = min(ok, key=lambda r: (-r.mantel_r, r.a, r.b))
    band = [r for r in ok if r.mantel_r >= top.mantel_r - top.mantel_r_se]
    return min(band, key=lambda r: (r.ks_degree, r.a, r.b))


def write_sweep_table(results, path) -> None:
    lines = [SWEEP_HEADER]
    for r in results:
        lines.append("\t".join([repr(r.a), repr(r.b), repr(r.expected_entrants), repr(r.mantel_r),
                                repr(r.mantel_p), repr(r.ks_degree), str(r.replicates)]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def cell_as_dict(result: CellResult) -> dict:
    return asdict(result)
