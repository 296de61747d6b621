"""Ingestion of year-stamped commodity-level flows.

Input is tab-separated with the header ``year source target commodity value``
(values in thousands of currency units, stored as given). Rows are validated
one by one: bad rows become diagnostics with their line number, and rows below
the reporting threshold are kept but flagged.

By default the two directions of a flow are summed into one undirected pair.
With ``directed=True`` the ordered pair is kept as the key; node strength is
the total of incident flows in both modes.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import EmptyInputError, FormatError
from .growth import MultiGraph
from .weights import GrowthRates, WeightedPanel, log_growth

FLOW_COLUMNS = ("year", "source", "target", "commodity", "value")
FLOW_HEADER = "\t".join(FLOW_COLUMNS)
LABEL_HEADER = "dense_id\tlabel"
DEFAULT_THRESHOLD = 100.0


@dataclass(frozen=True)
class FlowRecord:
    year: int
    source: str
    target: str
    commodity: str
    value: float
    below_threshold: bool = False


@dataclass(frozen=True)
class Diagnostic:
    line: int
    reason: str
    text: str = ""

    def __str__(self):
        return f"line {self.line}: {self.reason}"


def parse_flow_records(stream: Iterable[str], threshold: float = DEFAULT_THRESHOLD,
                       year_range: tuple[int, int] | None = None):
    """Parse a flow file.

    Parameters
    ----------
    stream : iterable of str
        Lines of the file, e.g. an open text file.
    threshold : float
        Reporting floor in the file's units. Rows below it are flagged.
    year_range : (int, int), optional
        Inclusive bounds; rows outside are rejected with a diagnostic.

    Returns
    -------
    records : list of FlowRecord
    diagnostics : list of Diagnostic
        One entry per rejected or flagged row.
    """
    it = iter(stream)
    try:
        header = next(it)
    except StopIteration:
        raise FormatError("empty input: missing header line") from None
    if tuple(header.rstrip("\r\n").split("\t")) != FLOW_COLUMNS:
        raise FormatError(f"line 1: expected header {FLOW_HEADER!r}, got {header.rstrip()!r}")

    records, diags = [], []
    for lineno, raw in enumerate(it, 2):
        line = raw.rstrip("\r\n")
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 5:
            diags.append(Diagnostic(lineno, f"expected 5 fields, got {len(parts)}", line))
            continue
        year_s, src, tgt, commodity, value_s = parts
        try:
            year = int(year_s)
        except ValueError:
            diags.append(Diagnostic(lineno, f"year {year_s!r} is not an integer", line))
            continue
        try:
            value = float(value_s)
        except ValueError:
            diags.append(Diagnostic(lineno, f"value {value_s!r} is not a number", line))
            continue
        if not src or not tgt:
            diags.append(Diagnostic(lineno, "empty node label", line))
            continue
        if src == tgt:
            diags.append(Diagnostic(lineno, f"source equals target ({src!r})", line))
            continue
        if not (math.isfinite(value) and value > 0):
            diags.append(Diagnostic(lineno, f"value {value_s!r} is not positive", line))
            continue
        if year_range is not None and not (year_range[0] <= year <= year_range[1]):
            diags.append(Diagnostic(lineno, f"year {year} outside {year_range[0]}..{year_range[1]}", line))
            continue
        below = value < threshold
        if below:
            diags.append(Diagnostic(lineno, f"flagged: value {value_s} below threshold {threshold:g}", line))
        records.append(FlowRecord(year, src, tgt, commodity, value, below))
    return records, diags


def read_flow_file(path, **kwargs):
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_flow_records(fh, **kwargs)


def write_flow_records(records, path) -> None:
    # repr of a float round-trips exactly through float()
    lines = [FLOW_HEADER]
    lines += [f"{r.year}\t{r.source}\t{r.target}\t{r.commodity}\t{r.value!r}" for r in records]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_diagnostics(diagnostics, path) -> None:
    lines = ["line\treason"] + [f"{d.line}\t{d.reason}" for d in diagnostics]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# label tables


def build_labels(records, existing=None) -> list[str]:
    """Dense id order: labels of ``existing`` first, then new labels sorted."""
    labels = list(existing) if existing is not None else []
    known = set(labels)
    new = {r.source for r in records} | {r.target for r in records}
    labels.extend(sorted(new - known))
    return labels


def write_label_table(labels, path) -> None:
    lines = [LABEL_HEADER] + [f"{i}\t{lab}" for i, lab in enumerate(labels)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_label_table(path) -> list[str]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != LABEL_HEADER:
        raise FormatError(f"{path}: expected header {LABEL_HEADER!r}")
    labels = []
    for lineno, line in enumerate(lines[1:], 2):
        idx, _, lab = line.partition("\t")
        if not idx.isdigit() or int(idx) != len(labels):
            raise FormatError(f"{path}: line {lineno}: dense ids must run 0..n-1 in order")
        labels.append(lab)
    if len(set(labels)) != len(labels):
        raise FormatError(f"{path}: duplicate labels")
    return labels


# ---------------------------------------------------------------------------
# aggregation


def _pair_key(src, tgt, directed):
    return (src, tgt) if directed or src <= tgt else (tgt, src)


@dataclass
class YearAggregate:
    """One year of flows as a weighted multigraph.

    Edge ``e`` of ``graph`` joins the dense ids of a node pair and carries the
    value of one commodity, ``weights[e]``.
    """

    year: int
    labels: list
    graph: MultiGraph
    weights: np.ndarray
    commodities: list
    pair_flows: dict
    strengths: np.ndarray

    @property
    def degrees(self) -> np.ndarray:
        links = self.graph.links
        return (np.bincount(links[:, 0], minlength=self.graph.node_count)
                + np.bincount(links[:, 1], minlength=self.graph.node_count))

    @property
    def node_strengths(self) -> dict:
        """Label -> strength for nodes with at least one flow this year."""
        deg = self.degrees
        return {lab: float(s) for lab, s, k in zip(self.labels, self.strengths, deg) if k > 0}

    def to_panel(self) -> WeightedPanel:
        return WeightedPanel.from_graph(self.graph, self.weights[None, :])


def aggregate_pairs(records, year: int, *, directed: bool = False, labels=None) -> YearAggregate:
    """Aggregate one year into one edge per (pair, commodity).

    ``labels`` fixes the dense-id table; labels not in it are appended in
    sorted order. Without it the table is built from this year's records.
    """
    rows = [r for r in records if r.year == year]
    if not rows:
        raise EmptyInputError(f"no records for year {year}")
    labels = build_labels(rows, labels)
    ids = {lab: i for i, lab in enumerate(labels)}

    parts = defaultdict(list)
    for r in rows:
        parts[(_pair_key(r.source, r.target, directed), r.commodity)].append(r.value)
    keys = sorted(parts)
    edges = np.array([(ids[s], ids[t]) for (s, t), _ in keys], dtype=np.int64).reshape(-1, 2)
    weights = np.array([math.fsum(parts[k]) for k in keys])

    by_pair = defaultdict(list)
    for k, w in zip(keys, weights.tolist()):
        by_pair[k[0]].append(w)
    pair_flows = {pair: math.fsum(v) for pair, v in by_pair.items()}

    n = len(labels)
    incident = [[] for _ in range(n)]
    for (s, t), w in pair_flows.items():
        incident[ids[s]].append(w)
        incident[ids[t]].append(w)
    strengths = np.array([math.fsum(v) for v in incident])

    graph = MultiGraph(n, edges)
    return YearAggregate(year, labels, graph, weights, [k[1] for k in keys], pair_flows, strengths)


@dataclass
class PanelSummary:
    years: list
    nodes: list
    pair_flows: dict
    node_strengths: dict
    diagnostics: list = field(default_factory=list)

    def strength_matrix(self) -> np.ndarray:
        """Strengths as (years, nodes); NaN where a node has no flow that year."""
        col = {lab: i for i, lab in enumerate(self.nodes)}
        out = np.full((len(self.years), len(self.nodes)), np.nan)
        for k, y in enumerate(self.years):
            for lab, w in self.node_strengths[y].items():
                out[k, col[lab]] = w
        return out

    def growth_rates(self) -> GrowthRates:
        """ln(W(t+1)/W(t)) over consecutive panel years.

        Nodes missing from either year of a pair are excluded and counted in
        ``skipped`` and in ``diagnostics``.
        """
        mat = self.strength_matrix()
        values, ids, skipped = [], [], 0
        labels = np.array(self.nodes, dtype=object)
        for k in range(len(self.years) - 1):
            g, ok, s = log_growth(mat[k], mat[k + 1])
            values.append(g)
            ids.append(np.flatnonzero(ok))
            skipped += s
            for lab in labels[~ok]:
                self.diagnostics.append(Diagnostic(
                    0, f"node {lab!r} absent in {self.years[k]} or {self.years[k + 1]}; no growth rate"))
        return GrowthRates(values, ids, skipped)


def build_strength_panel(records, *, directed: bool = False, labels=None) -> PanelSummary:
    """Per-year pair flows and node strengths over one shared label table."""
    years = sorted({r.year for r in records})
    labels = build_labels(records, labels)
    pair_flows, strengths = {}, {}
    for y in years:
        agg = aggregate_pairs(records, y, directed=directed, labels=labels)
        pair_flows[y] = agg.pair_flows
        strengths[y] = agg.node_strengths
    return PanelSummary(years, labels, pair_flows, strengths)


def write_pair_flows(summary: PanelSummary, path) -> None:
    lines = ["year\tsource\ttarget\tvalue"]
    for y in summary.years:
        for (s, t), v in sorted(summary.pair_flows[y].items()):
            lines.append(f"{y}\t{s}\t{t}\t{v!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_panel_strengths(summary: PanelSummary, path) -> None:
    """Strength panel keyed by year and dense id; absent nodes have no row."""
    col = {lab: i for i, lab in enumerate(summary.nodes)}
    lines = ["period\tnode\tstrength"]
    for y in summary.years:
        for lab, w in sorted(summary.node_strengths[y].items(), key=lambda kv: col[kv[0]]):
            lines.append(f"{y}\t{col[lab]}\t{w:.12g}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
