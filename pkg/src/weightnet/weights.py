"""Multiplicative link-weight dynamics and node strengths.

Weights start lognormal and are multiplied each period by an i.i.d.
lognormal shock. Self-loops carry no weight. Weight draws read the graph only
through its link endpoints.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, FormatError, InvalidConfigError
from .growth import MultiGraph

PANEL_HEADER = "period\tedge_id\tweight"
STRENGTH_HEADER = "period\tnode\tstrength"


@dataclass(frozen=True)
class WeightModel:
    mu_w: float = 0.0
    sigma_w: float = 1.0
    mu_x: float = 0.0
    sigma_x: float = 0.1
    martingale: bool = False

    def __post_init__(self):
        for name in ("mu_w", "sigma_w", "mu_x", "sigma_x"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidConfigError(f"{name} must be finite")
        if self.sigma_w < 0 or self.sigma_x < 0:
            raise InvalidConfigError("sigma_w and sigma_x must be >= 0")

    @property
    def shock_location(self) -> float:
        """Location of ln x; ``-sigma_x**2/2`` under the martingale switch."""
        return -0.5 * self.sigma_x ** 2 if self.martingale else self.mu_x


@dataclass(frozen=True)
class WeightedPanel:
    """Link weights over periods.

    ``weights[t, e]`` is the weight of link ``e`` (position in ``edge_ids``)
    in period ``t``.
    """

    node_count: int
    edge_ids: np.ndarray
    sources: np.ndarray
    targets: np.ndarray
    weights: np.ndarray
    _strengths: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        w = np.atleast_2d(np.asarray(self.weights, dtype=float))
        if w.shape[1] != len(self.edge_ids):
            raise FormatError("weights must have one column per link")
        if w.size and not np.all(w > 0):
            raise DataError("link weights must be strictly positive")
        for name in ("edge_ids", "sources", "targets"):
            arr = np.asarray(getattr(self, name), dtype=np.int64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        strengths = np.vstack([
            np.bincount(self.sources, row, self.node_count)
            + np.bincount(self.targets, row, self.node_count)
            for row in w
        ]) if w.shape[0] else np.zeros((0, self.node_count))
        strengths.setflags(write=False)
        object.__setattr__(self, "_strengths", strengths)

    @classmethod
    def from_graph(cls, graph: MultiGraph, weights) -> "WeightedPanel":
        links = graph.links
        return cls(graph.node_count, graph.link_ids, links[:, 0], links[:, 1], weights)

    @property
    def periods(self) -> int:
        return self.weights.shape[0]

    @property
    def strengths(self) -> np.ndarray:
        """Node strengths, shape (periods, node_count)."""
        return self._strengths

    @property
    def degrees(self) -> np.ndarray:
        return (np.bincount(self.sources, minlength=self.node_count)
                + np.bincount(self.targets, minlength=self.node_count))


def assign_initial_weights(graph: MultiGraph, model: WeightModel,
                           rng: np.random.Generator) -> WeightedPanel:
    n = graph.n_links
    if model.sigma_w == 0:
        w = np.full(n, math.exp(model.mu_w))
    else:
        w = np.exp(model.mu_w + model.sigma_w * rng.standard_normal(n))
    return WeightedPanel.from_graph(graph, w[None, :])


def evolve_weights(panel: WeightedPanel, model: WeightModel, steps: int,
                   rng: np.random.Generator) -> WeightedPanel:
    """Apply ``steps`` periods of ``w <- w * x`` with ``ln x ~ N(loc, sigma_x)``.

    Shocks are drawn as one (steps, links) block in row-major order, so the
    stream position of every (period, link) shock is fixed.
    """
    if steps < 1:
        raise InvalidConfigError("steps must be >= 1")
    n = panel.weights.shape[1]
    loc = model.shock_location
    if model.sigma_x == 0:
        log_x = np.full((steps, n), loc)
    else:
        log_x = loc + model.sigma_x * rng.standard_normal((steps, n))
    path = panel.weights[-1] * np.cumprod(np.exp(log_x), axis=0)
    new = np.vstack([panel.weights, path])
    return WeightedPanel(panel.node_count, panel.edge_ids, panel.sources, panel.targets, new)


def node_strength(panel: WeightedPanel, period: int) -> np.ndarray:
    """Strength of every node in ``period``; nodes without links get 0."""
    if not (0 <= period < panel.periods):
        raise IndexError(f"period {period} outside [0, {panel.periods})")
    return panel.strengths[period]


@dataclass
class GrowthRates:
    """Log growth rates per consecutive period pair.

    ``values[k]`` holds ln(v[k+1] / v[k]) for the entities in ``ids[k]``.
    ``skipped`` counts entity-period pairs dropped for a nonpositive value.
    """

    values: list
    ids: list
    skipped: int = 0

    def pooled(self) -> np.ndarray:
        return np.concatenate(self.values) if self.values else np.empty(0)


def log_growth(before, after, *, strict: bool = False):
    """ln(after/before) where both are positive and finite.

    Returns ``(g, mask, skipped)``. With ``strict=True`` any invalid entry
    raises instead of being skipped.
    """
    before = np.asarray(before, dtype=float)
    after = np.asarray(after, dtype=float)
    ok = (before > 0) & (after > 0) & np.isfinite(before) & np.isfinite(after)
    if strict and not ok.all():
        bad = int(np.flatnonzero(~ok)[0])
        raise DataError(f"nonpositive value at position {bad}: {before[bad]} -> {after[bad]}")
    return np.log(after[ok] / before[ok]), ok, int((~ok).sum())


def growth_rates(panel: WeightedPanel, level: str = "node") -> GrowthRates:
    if panel.periods < 2:
        raise InvalidConfigError("growth rates need at least two periods")
    if level == "edge":
        series, ids, strict = panel.weights, panel.edge_ids, True
    elif level == "node":
        series, ids, strict = panel.strengths, np.arange(panel.node_count), False
    else:
        raise InvalidConfigError(f"level must be 'node' or 'edge', got {level!r}")
    values, kept, skipped = [], [], 0
    for t in range(panel.periods - 1):
        g, ok, s = log_growth(series[t], series[t + 1], strict=strict)
        values.append(g)
        kept.append(ids[ok])
        skipped += s
    return GrowthRates(values, kept, skipped)


def write_panel(panel: WeightedPanel, path, periods=None) -> None:
    """Weights as ``period, edge_id, weight`` with 12 significant digits."""
    labels = range(panel.periods) if periods is None else periods
    rows = [PANEL_HEADER]
    eids = panel.edge_ids.tolist()
    for label, row in zip(labels, panel.weights):
        rows.extend(f"{label}\t{e}\t{w:.12g}" for e, w in zip(eids, row.tolist()))
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")


def write_strengths(panel: WeightedPanel, path, periods=None) -> None:
    labels = range(panel.periods) if periods is None else periods
    rows = [STRENGTH_HEADER]
    for label, row in zip(labels, panel.strengths):
        rows.extend(f"{label}\t{i}\t{s:.12g}" for i, s in enumerate(row.tolist()))
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")


def _read_table(path, header):
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].strip() != header:
        raise FormatError(f"{path}: expected header {header!r}")
    if len(lines) == 1:
        return np.empty((0, 3))
    return np.loadtxt(lines[1:], delimiter="\t", ndmin=2)


def read_panel(path, graph: MultiGraph) -> WeightedPanel:
    """Read a weight panel and attach it to the links of ``graph``."""
    data = _read_table(path, PANEL_HEADER)
    periods = np.unique(data[:, 0])
    link_ids = graph.link_ids
    w = np.empty((periods.shape[0], link_ids.shape[0]))
    for k, p in enumerate(periods):
        block = data[data[:, 0] == p]
        if not np.array_equal(block[:, 1].astype(np.int64), link_ids):
            raise FormatError(f"{path}: period {p:g} edge ids do not match the edge list links")
        w[k] = block[:, 2]
    return WeightedPanel.from_graph(graph, w)


def read_strengths(path) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(period_labels, strengths[period, node])``."""
    data = _read_table(path, STRENGTH_HEADER)
    periods = np.unique(data[:, 0])
    n = int(data[:, 1].max()) + 1 if data.size else 0
    out = np.zeros((periods.shape[0], n))
    for k, p in enumerate(periods):
        block = data[data[:, 0] == p]
        out[k, block[:, 1].astype(np.int64)] = block[:, 2]
    return periods, out
