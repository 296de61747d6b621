"""Command-line entry point.

Every subcommand writes its outputs plus ``manifest.json`` into ``--out``.
Randomized subcommands need an explicit ``--seed``. Exit codes: 0 success,
1 I/O or data error, 2 usage or validation error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import FORMAT_VERSION, __version__
from .calibration import (CRITERIA, ReferenceSummary, select_best, summarize_reference, sweep,
                          write_sweep_table)
from .dataio import (aggregate_pairs, build_labels, build_strength_panel, read_flow_file,
                     read_label_table, write_diagnostics, write_label_table, write_pair_flows,
                     write_panel_strengths)
from .distributions import (FAMILIES, DistributionModel, canonical_family, cdf, fit_mle,
                            fit_powerlaw_tail)
from .errors import (DataError, EmptyInputError, FormatError, InsufficientTailError, SparseBinError,
                     TailSaturationError, WeightnetError, NoVariationError)
from .growth import (GrowthConfig, degree_sequence, generate, parse_key_values, read_edge_list,
                     write_edge_list)
from .stats import ad_test, ccdf, fit_size_variance, fit_strength_degree, ks_test, log_bin, write_xy
from .weights import (WeightModel, assign_initial_weights, evolve_weights, growth_rates, read_panel,
                      write_panel, write_strengths)

MANIFEST = "manifest.json"
GOF_HEADER = "family\tmean\tvariance\tks\tks_scaled\tad\tloglik\tparams"

# exceptions that are the caller's fault rather than the data's
_IO_ERRORS = (DataError, FormatError, EmptyInputError, OSError)


class UsageError(Exception):
    pass


def _log(msg):
    print(msg, file=sys.stderr)


def _write(path, text):
    Path(path).write_text(text, encoding="utf-8")
    return str(path)


def _need(args, *names):
    missing = [n for n in names if getattr(args, n, None) is None]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + n.replace("_", "-") for n in missing))


def _grid(text):
    """``lo:hi:n`` (inclusive linspace) or a comma list."""
    if text is None:
        return None
    if ":" in text:
        lo, hi, n = text.split(":")
        return np.linspace(float(lo), float(hi), int(n)).tolist()
    return [float(v) for v in text.split(",") if v.strip()]


def _read_values(path):
    vals = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            vals.append(float(line.split("\t")[-1]))
        except ValueError:
            if vals:
                raise FormatError(f"{path}: line {lineno}: not a number: {line!r}") from None
            # a single leading header line is allowed
    return np.array(vals)


# ---------------------------------------------------------------------------
# subcommands; each returns the list of output paths


def cmd_generate(args, out: Path):
    _need(args, "seed")
    config = GrowthConfig(a=args.a, b=args.b, n0=args.n0, m=args.links, seed=args.seed)
    graph = generate(config)
    write_edge_list(graph, out / "edges.tsv")
    _write(out / "growth.cfg", config.to_text())
    print(f"nodes\t{graph.node_count}\nlinks\t{graph.n_links}")
    return [out / "edges.tsv", out / "growth.cfg"]


def cmd_evolve(args, out: Path):
    _need(args, "seed")
    if args.input is None:
        raise FileNotFoundError("--in edge list is required")
    graph = read_edge_list(args.input)
    model = WeightModel(args.mu_w, args.sigma_w, args.mu_x, args.sigma_x, args.martingale)
    if args.steps < 1:
        raise UsageError("--steps must be >= 1")
    rng = np.random.default_rng(args.seed)
    panel = evolve_weights(assign_initial_weights(graph, model, rng), model, args.steps, rng)
    write_panel(panel, out / "weights.tsv")
    write_strengths(panel, out / "strengths.tsv")
    return [out / "weights.tsv", out / "strengths.tsv"]


def cmd_analyze(args, out: Path):
    if args.network is None:
        raise UsageError("--network is required (a panel is read against its links)")
    graph = read_edge_list(args.network)
    written = []
    deg = degree_sequence(graph)
    vals, cnt = np.unique(deg, return_counts=True)
    written.append(out / "degree_pmf.tsv")
    write_xy(written[-1], np.column_stack([vals, cnt, cnt / cnt.sum()]), ("k", "count", "p"))
    pos = deg[deg > 0]
    written.append(out / "degree_ccdf.tsv")
    write_xy(written[-1], ccdf(pos), ("k", "ccdf"))
    written.append(out / "degree_logbin.tsv")
    write_xy(written[-1], log_bin(pos, args.bins_per_decade), ("k", "density", "width"))
    summary = {"nodes": graph.node_count, "links": graph.n_links}
    try:
        tail = fit_powerlaw_tail(pos, discrete=True)
        summary.update(tail_exponent=tail.exponent, tail_xmin=tail.xmin, tail_ks=tail.ks, tail_n=tail.n_tail)
    except InsufficientTailError as exc:
        _log(f"tail fit skipped: {exc}")

    if args.panel is not None:
        try:
            panel = read_panel(args.panel, graph)
        except FormatError as exc:
            raise UsageError(f"panel does not match the network: {exc}") from None
        if not (0 <= args.period < panel.periods):
            raise UsageError(f"--period {args.period} outside [0, {panel.periods})")
        W = panel.strengths[args.period]
        K = panel.degrees
        live = K > 0
        written.append(out / "strength_ccdf.tsv")
        write_xy(written[-1], ccdf(W[live]), ("W", "ccdf"))
        written.append(out / "strength_logbin.tsv")
        write_xy(written[-1], log_bin(W[live], args.bins_per_decade), ("W", "density", "width"))
        k_range = None if args.k_max is None else (args.k_min, args.k_max)
        try:
            theta = fit_strength_degree(K[live], W[live], k_range=k_range)
            written.append(out / "strength_degree.tsv")
            write_xy(written[-1], theta.table, ("K", "mean_W", "sd_W", "count"))
            summary.update(theta=theta.exponent, theta_stderr=theta.stderr)
        except NoVariationError as exc:
            _log(f"strength-degree fit skipped: {exc}")
        if panel.periods > 1:
            rates = growth_rates(panel, "node")
            g = rates.pooled()
            written.append(out / "growth_rates.tsv")
            _write(written[-1], "g\n" + "".join(f"{v!r}\n" for v in g.tolist()))
            w0 = np.concatenate([panel.strengths[t][ids] for t, ids in enumerate(rates.ids)])
            try:
                beta = fit_size_variance(w0, g, args.bins, binning=args.binning, central=args.central)
                written.append(out / "size_variance.tsv")
                write_xy(written[-1], beta.table, ("mean_lnW", "sd_g", "count"))
                summary.update(beta=beta.exponent, beta_stderr=beta.stderr)
            except (SparseBinError, NoVariationError) as exc:
                _log(f"size-variance fit skipped: {exc}")
    text = "".join(f"{k}\t{v!r}\n" if isinstance(v, float) else f"{k}\t{v}\n" for k, v in summary.items())
    written.append(out / "summary.tsv")
    _write(written[-1], text)
    sys.stdout.write(text)
    return written


def _gof_row(family, x):
    fit = fit_mle(family, x)
    model = fit.model
    f = lambda v: cdf(model, v)
    ks = ks_test(x, f, family)
    try:
        ad = ad_test(x, f, family).statistic_raw
    except TailSaturationError as exc:
        _log(f"{family}: AD undefined ({exc})")
        ad = math.nan
    params = ",".join(f"{k}={v!r}" for k, v in model.params.items())
    return (f"{family}\t{model.mean()!r}\t{model.variance()!r}\t{ks.statistic_raw!r}\t"
            f"{ks.statistic_scaled!r}\t{ad!r}\t{fit.loglik!r}\t{params}")


def cmd_gof(args, out: Path):
    if args.input is None:
        raise FileNotFoundError("--in growth-rate file is required")
    families = []
    for name in args.families.split(","):
        try:
            families.append(canonical_family(name.strip()))
        except WeightnetError:
            raise UsageError(f"unknown family {name!r}; choose from {sorted(FAMILIES)}") from None
    x = _read_values(args.input)
    rows = [GOF_HEADER] + [_gof_row(fam, x) for fam in families]
    text = "\n".join(rows) + "\n"
    sys.stdout.write(text)
    return [_write(out / "gof.tsv", text)]


def cmd_summarize(args, out: Path):
    if args.input is None:
        raise FileNotFoundError("--in edge list is required")
    ref = summarize_reference(read_edge_list(args.input))
    ref.write(out / "reference.tsv")
    return [out / "reference.tsv"]


def cmd_sweep(args, out: Path):
    _need(args, "seed")
    if args.reference is None:
        raise FileNotFoundError("--reference summary file is required")
    if args.criterion not in CRITERIA:
        raise UsageError(f"--criterion must be one of {CRITERIA}")
    ref = ReferenceSummary.read(args.reference)
    entrants = _grid(args.entrants_grid)
    a_grid = _grid(args.a_grid)
    if (entrants is None) == (a_grid is None):
        raise UsageError("give exactly one of --a-grid and --entrants-grid")
    results = sweep(a_grid, _grid(args.b_grid), ref, args.replicates, args.seed,
                    entrants_grid=entrants, m=args.links, permutations=args.permutations,
                    alignment=args.alignment, workers=args.threads)
    for r in results:
        if r.error:
            _log(f"cell a={r.a:g} b={r.b:g} failed: {r.error}")
    write_sweep_table(results, out / "sweep.tsv")
    best = select_best(results, args.criterion)
    text = (f"criterion\t{args.criterion}\na\t{best.a!r}\nb\t{best.b!r}\n"
            f"entrants_expected\t{best.expected_entrants!r}\nmantel_r\t{best.mantel_r!r}\n"
            f"ks_degree\t{best.ks_degree!r}\n")
    sys.stdout.write(text)
    return [out / "sweep.tsv", _write(out / "best.tsv", text)]


def cmd_ingest(args, out: Path):
    if args.input is None:
        raise FileNotFoundError("--in flow file is required")
    if (args.year is None) == (not args.all_years):
        raise UsageError("give exactly one of --year and --all-years")
    records, diags = read_flow_file(args.input, threshold=args.threshold)
    for d in diags:
        _log(str(d))
    labels = read_label_table(args.labels) if args.labels else None
    written = []
    if args.all_years:
        panel = build_strength_panel(records, directed=args.directed, labels=labels)
        rates = panel.growth_rates()
        diags = diags + panel.diagnostics
        write_label_table(panel.nodes, out / "labels.tsv")
        write_pair_flows(panel, out / "pair_flows.tsv")
        write_panel_strengths(panel, out / "strengths.tsv")
        _write(out / "growth_rates.tsv", "g\n" + "".join(f"{v!r}\n" for v in rates.pooled().tolist()))
        written += [out / n for n in ("labels.tsv", "pair_flows.tsv", "strengths.tsv", "growth_rates.tsv")]
        summary = f"years\t{len(panel.years)}\nnodes\t{len(panel.nodes)}\n"
    else:
        labels = labels if labels is not None else build_labels([r for r in records if r.year == args.year])
        agg = aggregate_pairs(records, args.year, directed=args.directed, labels=labels)
        write_label_table(agg.labels, out / "labels.tsv")
        write_edge_list(agg.graph, out / "edges.tsv")
        panel = agg.to_panel()
        write_panel(panel, out / "weights.tsv", periods=[args.year])
        write_strengths(panel, out / "strengths.tsv", periods=[args.year])
        summarize_reference(agg.graph).write(out / "reference.tsv")
        written += [out / n for n in ("labels.tsv", "edges.tsv", "weights.tsv", "strengths.tsv",
                                      "reference.tsv")]
        active = int((agg.degrees > 0).sum())
        summary = f"year\t{args.year}\nnodes\t{active}\nlinks\t{agg.graph.n_links}\npairs\t{len(agg.pair_flows)}\n"
    write_diagnostics(diags, out / "diagnostics.tsv")
    written.append(out / "diagnostics.tsv")
    sys.stdout.write(summary)
    return written


def cmd_replay(args, out: Path):
    manifest = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
    ns = argparse.Namespace(**manifest["config"])
    ns.command = manifest["subcommand"]
    if args.out is not None:
        ns.out = args.out
    if args.threads is not None:
        ns.threads = args.threads
    return _run(ns)


COMMANDS = {
    "generate": cmd_generate,
    "evolve": cmd_evolve,
    "analyze": cmd_analyze,
    "gof": cmd_gof,
    "summarize": cmd_summarize,
    "sweep": cmd_sweep,
    "ingest": cmd_ingest,
    "replay": cmd_replay,
}


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="weightnet", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version",
                   version=f"weightnet {__version__} (format {FORMAT_VERSION})")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value file; explicit flags take precedence")
    common.add_argument("--out", help="output directory")
    common.add_argument("--threads", type=int, default=None, help="worker cap (default: all cores)")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", parents=[common], help="grow one multigraph")
    g.add_argument("--a", type=float, default=0.0)
    g.add_argument("--b", type=float, default=0.0)
    g.add_argument("--n0", type=int, default=1)
    g.add_argument("--links", type=int, default=0)
    g.add_argument("--seed", type=int)

    e = sub.add_parser("evolve", parents=[common], help="attach and evolve link weights")
    e.add_argument("--in", dest="input")
    e.add_argument("--mu-w", type=float, default=0.0)
    e.add_argument("--sigma-w", type=float, default=1.0)
    e.add_argument("--mu-x", type=float, default=0.0)
    e.add_argument("--sigma-x", type=float, default=0.1)
    e.add_argument("--martingale", action="store_true")
    e.add_argument("--steps", type=int, default=1)
    e.add_argument("--seed", type=int)

    a = sub.add_parser("analyze", parents=[common], help="distribution and scaling tables")
    a.add_argument("--network")
    a.add_argument("--panel")
    a.add_argument("--period", type=int, default=0)
    a.add_argument("--bins-per-decade", type=int, default=10)
    a.add_argument("--bins", type=int, default=10, help="size-variance bins")
    a.add_argument("--binning", choices=("log", "quantile"), default="quantile")
    a.add_argument("--central", type=float, default=0.8)
    a.add_argument("--k-min", type=float, default=1.0)
    a.add_argument("--k-max", type=float, default=None)

    f = sub.add_parser("gof", parents=[common], help="fit families and report KS/AD")
    f.add_argument("--in", dest="input")
    f.add_argument("--families", default="gauss,laplace,ged,eq4")

    s = sub.add_parser("summarize", parents=[common], help="reference summary of an edge list")
    s.add_argument("--in", dest="input")

    w = sub.add_parser("sweep", parents=[common], help="calibrate (a, b) against a reference")
    w.add_argument("--reference")
    w.add_argument("--a-grid")
    w.add_argument("--entrants-grid")
    w.add_argument("--b-grid", default="0:1:21")
    w.add_argument("--replicates", type=int, default=3)
    w.add_argument("--links", type=int, default=None)
    w.add_argument("--permutations", type=int, default=0)
    w.add_argument("--alignment", choices=("degree", "random"), default="degree")
    w.add_argument("--criterion", default="combined")
    w.add_argument("--seed", type=int)

    i = sub.add_parser("ingest", parents=[common], help="aggregate a flow file")
    i.add_argument("--in", dest="input")
    i.add_argument("--year", type=int)
    i.add_argument("--all-years", action="store_true")
    i.add_argument("--threshold", type=float, default=100.0)
    i.add_argument("--directed", action="store_true")
    i.add_argument("--labels", help="existing label table to keep dense ids stable")

    r = sub.add_parser("replay", help="re-run a manifest")
    r.add_argument("manifest")
    r.add_argument("--out")
    r.add_argument("--threads", type=int, default=None)
    return p


def _apply_config(parser, argv):
    """Parse twice: config values become defaults, so explicit flags win."""
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        raw = parse_key_values(Path(args.config).read_text(encoding="utf-8"))
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        defaults = {}
        for key, value in raw.items():
            dest = key.replace("-", "_")
            dest = "input" if dest == "in" else dest
            if dest not in known:
                raise UsageError(f"unknown config key {key!r} for {args.command}")
            action = next(a for a in sub._actions if a.dest == dest)
            if action.const is True:
                defaults[dest] = value.lower() in ("1", "true", "yes")
            else:
                defaults[dest] = action.type(value) if action.type else value
        sub.set_defaults(**defaults)
        args = parser.parse_args(argv)
    return args


def _jsonable(v):
    if isinstance(v, Path):
        return str(v)
    return v


def _run(args):
    if args.command == "replay":
        return COMMANDS["replay"](args, None)
    if args.out is None:
        raise UsageError("--out is required")
    for attr in ("input", "network", "panel", "reference", "labels"):
        if getattr(args, attr, None) is not None:
            setattr(args, attr, str(Path(getattr(args, attr)).resolve()))
            if not Path(getattr(args, attr)).exists():
                raise FileNotFoundError(f"input file not found: {getattr(args, attr)}")
    if args.threads is None:
        args.threads = os.cpu_count() or 1
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    written = COMMANDS[args.command](args, out)
    config = {k: _jsonable(v) for k, v in sorted(vars(args).items()) if k not in ("command", "config")}
    manifest = {
        "tool": "weightnet",
        "version": __version__,
        "format_version": FORMAT_VERSION,
        "subcommand": args.command,
        "config": config,
        "seed": getattr(args, "seed", None),
        "inputs": [config[k] for k in ("input", "network", "panel", "reference", "labels")
                   if config.get(k) is not None],
        "outputs": [str(Path(p).name) for p in written],
        "wall_time": time.perf_counter() - start,
    }
    (out / MANIFEST).write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    for p in written:
        print(p)
    return written


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        _run(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except UsageError as exc:
        _log(f"usage error: {exc}")
        return 2
    except _IO_ERRORS as exc:
        _log(f"error: {exc}")
        return 1
    except (WeightnetError, ValueError) as exc:
        _log(f"invalid input: {exc}")
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
