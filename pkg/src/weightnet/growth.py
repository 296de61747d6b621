"""Multigraph growth by preferential attachment with node entry.

The network starts with ``n0`` nodes, each carrying one self-loop that only
seeds the attachment weights. Every step adds one link. Each endpoint is a
brand-new node with probability ``a``; otherwise it is drawn among existing
nodes from the mixture

    (1 - b) * w_i / D + b / N

where ``w_i`` is the node's degree plus its initialization self-loop, ``D`` is
the realized total of those weights and ``N`` the number of nodes before the
step. The target draw excludes the source and renormalizes.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import _kernels
from .distributions import DistributionModel
from .errors import CapacityError, DegenerateModelError, FormatError, InvalidConfigError

# Roughly 64 bytes per link between edge arrays and node arrays.
MAX_LINKS = 50_000_000
CHUNK_STEPS = 1 << 16

EDGE_HEADER = "edge_id\tsource\ttarget\tself_loop"


@dataclass(frozen=True)
class GrowthConfig:
    a: float = 0.0
    b: float = 0.0
    n0: int = 1
    m: int = 0
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.a <= 1.0):
            raise InvalidConfigError(f"a must lie in [0, 1], got {self.a}")
        if not (0.0 <= self.b <= 1.0):
            raise InvalidConfigError(f"b must lie in [0, 1], got {self.b}")
        if int(self.n0) != self.n0 or self.n0 < 1:
            raise InvalidConfigError(f"n0 must be an integer >= 1, got {self.n0}")
        if int(self.m) != self.m or self.m < 0:
            raise InvalidConfigError(f"m must be an integer >= 0, got {self.m}")

    def to_text(self) -> str:
        return "".join(f"{f.name}={getattr(self, f.name)!r}\n" for f in fields(self))

    @classmethod
    def from_text(cls, text: str) -> "GrowthConfig":
        raw = parse_key_values(text)
        types = {f.name: f.type for f in fields(cls)}
        unknown = set(raw) - set(types)
        if unknown:
            raise FormatError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {}
        for key, value in raw.items():
            kwargs[key] = float(value) if types[key] == "float" else int(value)
        return cls(**kwargs)


def parse_key_values(text: str) -> dict[str, str]:
    """Parse a flat ``key=value`` file; blank lines and ``#`` comments ignored."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise FormatError(f"line {lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


class GrowthState:
    """Mutable state of one growth run.

    ``grow_step`` advances the state in place and returns it. Node arrays are
    over-allocated and grown by doubling; only the first ``node_count``
    entries are meaningful.
    """

    def __init__(self, n0: int, capacity: int = 0):
        # capacity: expected number of links, sizes the edge arrays
        if int(n0) != n0 or n0 < 1:
            raise InvalidConfigError(f"n0 must be an integer >= 1, got {n0}")
        self.n0 = int(n0)
        self.t = 0
        self.node_count = self.n0
        self.total = self.n0
        node_cap = self.n0 + 64
        self._weight = np.zeros(node_cap, dtype=np.int64)
        self._weight[: self.n0] = 1
        self._tree = np.zeros(node_cap + 1, dtype=np.int64)
        _kernels.fenwick_build(self._weight, self._tree)
        self._src = np.empty(max(capacity, 16), dtype=np.int64)
        self._tgt = np.empty(max(capacity, 16), dtype=np.int64)

    def _grow_links(self, need):
        if need > self._src.shape[0]:
            cap = max(need, 2 * self._src.shape[0])
            self._src = np.resize(self._src, cap)
            self._tgt = np.resize(self._tgt, cap)

    def _grow_nodes(self):
        cap = 2 * self._weight.shape[0]
        weight = np.zeros(cap, dtype=np.int64)
        weight[: self._weight.shape[0]] = self._weight
        self._weight = weight
        self._tree = np.zeros(cap + 1, dtype=np.int64)
        _kernels.fenwick_build(self._weight, self._tree)

    def advance(self, u: np.ndarray, a: float, b: float) -> None:
        """Consume one row of ``u`` per link."""
        steps = u.shape[0]
        self._grow_links(self.t + steps)
        done = 0
        while done < steps:
            self.node_count, self.total, k = _kernels.grow_chunk(
                self._tree, self._weight, self._src, self._tgt,
                self.t, self.node_count, self.total, u[done:], float(a), float(b),
            )
            self.t += k
            done += k
            if done < steps:
                self._grow_nodes()

    @property
    def degrees(self) -> np.ndarray:
        """Link counts per node, self-loops excluded."""
        deg = self._weight[: self.node_count].copy()
        deg[: self.n0] -= 1
        return deg

    @property
    def edges(self) -> np.ndarray:
        return np.column_stack([self._src[: self.t], self._tgt[: self.t]])

    def to_graph(self) -> "MultiGraph":
        loops = np.arange(self.n0, dtype=np.int64)
        src = np.concatenate([loops, self._src[: self.t]])
        tgt = np.concatenate([loops, self._tgt[: self.t]])
        self_loop = np.zeros(src.shape[0], dtype=bool)
        self_loop[: self.n0] = True
        return MultiGraph(self.node_count, np.column_stack([src, tgt]), self_loop)


@dataclass(frozen=True)
class MultiGraph:
    """Immutable multigraph; edge id is the row index of ``edges``."""

    node_count: int
    edges: np.ndarray
    self_loop: np.ndarray = field(default=None)

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        loops = (np.zeros(edges.shape[0], dtype=bool) if self.self_loop is None
                 else np.asarray(self.self_loop, dtype=bool))
        if loops.shape[0] != edges.shape[0]:
            raise FormatError("self_loop flags must match the edge count")
        if edges.size and (edges.min() < 0 or edges.max() >= self.node_count):
            raise FormatError("edge endpoint outside [0, node_count)")
        edges.setflags(write=False)
        loops.setflags(write=False)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "self_loop", loops)
        object.__setattr__(self, "node_count", int(self.node_count))

    @property
    def links(self) -> np.ndarray:
        """Endpoint pairs of the non-self-loop edges."""
        return self.edges[~self.self_loop]

    @property
    def link_ids(self) -> np.ndarray:
        return np.flatnonzero(~self.self_loop)

    @property
    def n_links(self) -> int:
        return int((~self.self_loop).sum())

    def __eq__(self, other):
        if not isinstance(other, MultiGraph):
            return NotImplemented
        return (self.node_count == other.node_count
                and np.array_equal(self.edges, other.edges)
                and np.array_equal(self.self_loop, other.self_loop))

    __hash__ = None


def init_state(n0: int) -> GrowthState:
    return GrowthState(n0)


def grow_step(state: GrowthState, config: GrowthConfig, rng: np.random.Generator) -> GrowthState:
    """Add one link. Consumes exactly six uniforms from ``rng``.

    Repeated calls consume the stream in the same order as ``generate``, so a
    seeded step-by-step run reproduces ``generate`` exactly.
    """
    u = rng.random((1, _kernels.UNIFORMS_PER_STEP))
    state.advance(u, config.a, config.b)
    return state


def generate(config: GrowthConfig, rng: np.random.Generator | None = None) -> MultiGraph:
    """Run the attachment process for ``config.m`` links.

    Parameters
    ----------
    config : GrowthConfig
    rng : numpy Generator, optional
        Overrides ``config.seed``. Used by calibration to feed spawned
        sub-streams.
    """
    if config.m > MAX_LINKS:
        raise CapacityError(
            f"m={config.m} exceeds the supported maximum of {MAX_LINKS} links"
        )
    if rng is None:
        rng = np.random.default_rng(config.seed)
    state = GrowthState(config.n0, capacity=config.m)
    done = 0
    while done < config.m:
        steps = min(CHUNK_STEPS, config.m - done)
        state.advance(rng.random((steps, _kernels.UNIFORMS_PER_STEP)), config.a, config.b)
        done += steps
    return state.to_graph()


def degree_sequence(graph: MultiGraph, include_self_loops: bool = False) -> np.ndarray:
    """Per-node link counts. A self-loop counts once when included."""
    deg = np.bincount(graph.links.ravel(), minlength=graph.node_count)
    if include_self_loops:
        deg += np.bincount(graph.edges[graph.self_loop, 0], minlength=graph.node_count)
    return deg


def expected_entrants(a: float, m: int) -> float:
    return 2.0 * a * m


def a_from_entrants(entrants: float, m: int) -> float:
    if m <= 0:
        raise InvalidConfigError("m must be positive to convert entrants to a")
    return entrants / (2.0 * m)


def theoretical_degree_model(a: float, t: int, n0: int) -> DistributionModel:
    """Large-t degree law of the attachment process.

    ``a == 0`` gives an exponential with mean ``2t/n0``. For ``0 < a < 1`` the
    law is a power law with exponent ``2 + a/(1-a)`` and an exponential cutoff
    at ``(1 + 2t/n0)**(1-a) - 1``.
    """
    if a == 1:
        raise DegenerateModelError("a=1 has no preferential regime: every link is a new dyad")
    if not (0 <= a < 1):
        raise InvalidConfigError(f"a must lie in [0, 1), got {a}")
    if t < 1 or n0 < 1:
        raise InvalidConfigError("t and n0 must be >= 1")
    if a == 0:
        return DistributionModel("exponential", {"mean": 2.0 * t / n0})
    cutoff = (1.0 + 2.0 * t / n0) ** (1.0 - a) - 1.0
    return DistributionModel(
        "yule_powerlaw_cutoff",
        {"exponent": 2.0 + a / (1.0 - a), "cutoff": cutoff, "kmin": 1},
    )


def write_edge_list(graph: MultiGraph, path) -> None:
    lines = [EDGE_HEADER]
    for eid, ((s, t), loop) in enumerate(zip(graph.edges.tolist(), graph.self_loop.tolist())):
        lines.append(f"{eid}\t{s}\t{t}\t{int(loop)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_edge_list(path, node_count: int | None = None) -> MultiGraph:
    """Read an edge list. Node count defaults to ``max id + 1``."""
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines or lines[0].strip() != EDGE_HEADER:
        raise FormatError(f"{path}: expected header {EDGE_HEADER!r}")
    if len(lines) == 1:
        return MultiGraph(node_count or 0, np.empty((0, 2), dtype=np.int64))
    data = np.loadtxt(lines[1:], dtype=np.int64, delimiter="\t", ndmin=2)
    if data.shape[1] != 4:
        raise FormatError(f"{path}: expected 4 columns")
    if not np.array_equal(data[:, 0], np.arange(data.shape[0])):
        raise FormatError(f"{path}: edge ids must run 0..E-1 in order")
    n = int(data[:, 1:3].max()) + 1
    if node_count is not None:
        if node_count < n:
            raise FormatError(f"{path}: node_count {node_count} < max id + 1 = {n}")
        n = node_count
    return MultiGraph(n, data[:, 1:3], data[:, 3].astype(bool))
