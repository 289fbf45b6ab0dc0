"""Command line entry points: ingest, build, rel, ned, eval, sweep.

Exit codes: 0 success, 1 usage error, 2 data error. Option precedence is
CLI flag > ``--config`` file (key=value lines) > built-in defaults; the
defaults are the standard run configuration (graph Hr, alpha 0.85, 30
iterations for relatedness and 15 for disambiguation, prior initialization
on, k 5000 for relatedness vectors).
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import os
import shutil
import sys
from concurrent.futures import ThreadPoolExecutor

from . import dictionary as dict_mod
from . import evaluation as eval_mod
from . import graph as graph_mod
from . import ingest as ingest_mod
from . import ned as ned_mod
from . import relatedness as rel_mod
from .errors import DataError
from .ppr import PprParams

REL_DEFAULTS = {"spec": "Hr", "alpha": 0.85, "iterations": 30, "k": 5000,
                "prior": True, "seed": 0, "resamples": eval_mod.DEFAULT_RESAMPLES}
NED_DEFAULTS = {"spec": "Hr", "alpha": 0.85, "iterations": 15, "k": None,
                "prior": True, "seed": 0, "resamples": eval_mod.DEFAULT_RESAMPLES}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _parse_config_file(path: str) -> dict[str, str]:
    out: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise DataError(f"{path}:{lineno}: expected key=value")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def _coerce(key: str, raw: str):
    if key == "alpha":
        return float(raw)
    if key in ("iterations", "seed", "resamples", "workers"):
        return int(raw)
    if key == "k":
        return None if raw.lower() in ("none", "") else int(raw)
    if key == "prior":
        if raw.lower() in ("1", "true", "yes", "p"):
            return True
        if raw.lower() in ("0", "false", "no", "nop"):
            return False
        raise DataError(f"bad boolean {raw!r} for 'prior'")
    return raw


def _resolve(args, defaults: dict) -> dict:
    """Merge CLI values over config-file values over defaults."""
    cfg = _parse_config_file(args.config) if getattr(args, "config", None) else {}
    out = {}
    for key, default in defaults.items():
        cli_val = getattr(args, key, None)
        if key == "prior" and getattr(args, "no_prior", False):
            cli_val = False
        if cli_val is not None:
            out[key] = cli_val
        elif key in cfg:
            out[key] = _coerce(key, cfg[key])
        else:
            out[key] = default
    return out


def _params(opts: dict) -> PprParams:
    return PprParams(alpha=opts["alpha"], iterations=opts["iterations"],
                     k=opts["k"], prior_init=opts["prior"])


def _validate_spec(spec: str) -> str:
    try:
        graph_mod.parse_graph_spec(spec)
    except DataError as exc:
        raise UsageError(str(exc)) from None
    return spec


def _load_runtime(data_dir: str, spec: str, sqlite_dict: bool = False):
    """Load the node table, graph snapshot and dictionary for one spec."""
    _validate_spec(spec)
    nodes_path = os.path.join(data_dir, "nodes.tsv")
    graph_path = os.path.join(data_dir, f"graph.{spec}.gwkb")
    if not os.path.exists(graph_path):
        raise DataError(f"missing graph snapshot {graph_path}; run 'graphwalk build' first")
    nodes = graph_mod.load_nodes(nodes_path)
    graph = graph_mod.load_snapshot(graph_path)
    if graph.n_nodes != len(nodes):
        raise DataError("graph snapshot does not match nodes.tsv")
    sqlite_path = os.path.join(data_dir, "dict.sqlite")
    if sqlite_dict and os.path.exists(sqlite_path):
        store = dict_mod.SqliteDictionary(sqlite_path)
    else:
        dict_path = os.path.join(data_dir, "dict.gwdict")
        if not os.path.exists(dict_path):
            raise DataError(f"missing dictionary snapshot {dict_path}; run 'graphwalk build' first")
        store = dict_mod.Dictionary.load(dict_path)
    return nodes, graph, store


def cmd_ingest(args) -> int:
    report = ingest_mod.run_ingest(args.pages, args.links, args.anchors,
                                   args.out, args.title_pseudo_count)
    print(f"nodes: {report['nodes']}")
    for key, value in report["tallies"].items():
        print(f"{key}: {value}")
    print(f"anchor count conservation: {report['anchor_count_conservation']}")
    return 0


def cmd_build(args) -> int:
    specs = [_validate_spec(s) for s in args.specs.split(",") if s]
    if not specs:
        raise UsageError("no graph specs given")
    os.makedirs(args.out, exist_ok=True)
    nodes = graph_mod.load_nodes(os.path.join(args.ingest_dir, "nodes.tsv"))
    shutil.copyfile(os.path.join(args.ingest_dir, "nodes.tsv"),
                    os.path.join(args.out, "nodes.tsv"))
    print(f"{'graph':>10} {'edges':>12} {'nodes':>10}")
    for spec in specs:
        g = graph_mod.build_graph(spec, args.ingest_dir, nodes)
        graph_mod.save_snapshot(g, os.path.join(args.out, f"graph.{spec}.gwkb"))
        st = graph_mod.stats(g)
        note = f"  [{', '.join(st['flags'])}]" if st["flags"] else ""
        print(f"{spec:>10} {st['arcs']:>12} {st['non_isolated_nodes']:>10}{note}")
    dictionary = dict_mod.Dictionary.build(
        os.path.join(args.ingest_dir, "dict_counts.tsv"), n_nodes=len(nodes))
    dictionary.save(os.path.join(args.out, "dict.gwdict"))
    if args.sqlite_dict:
        dict_mod.SqliteDictionary.create(dictionary, os.path.join(args.out, "dict.sqlite"))
    print(f"dictionary entries: {len(dictionary)}")
    return 0


def cmd_rel(args) -> int:
    opts = _resolve(args, REL_DEFAULTS)
    nodes, graph, store = _load_runtime(args.data, opts["spec"], args.sqlite_dict)
    config = {"task": "rel", "system": args.system, "graph_spec": opts["spec"],
              "alpha": opts["alpha"], "iterations": opts["iterations"],
              "k": opts["k"], "prior_init": opts["prior"], "seed": opts["seed"],
              "on_unknown": args.on_unknown, "dataset": args.pairs,
              "data": args.data}
    pairs = eval_mod.load_relatedness_pairs(args.pairs)
    has_gold = all(g is not None for _, _, g in pairs)
    if has_gold:
        report, rows = eval_mod.run_eval(
            "rel", args.system, [args.pairs], graph=graph, store=store,
            nodes=nodes, params=_params(opts), config=config,
            baseline_paths=args.baseline or None, on_unknown=args.on_unknown,
            dataset_name=args.pairs)
    else:
        rows = rel_mod.score_pairs(pairs, graph, store, _params(opts),
                                   args.system, args.on_unknown)
        report = None
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("term1\tterm2\tgold\tscore\n")
        for t1, t2, gold, score in rows:
            g = "" if gold is None else f"{gold:.12g}"
            s = "NA" if score is None else f"{score:.12g}"
            fh.write(f"{t1}\t{t2}\t{g}\t{s}\n")
    if report is not None:
        print(f"spearman {report.value:.4f} on {report.n} pairs")
        if args.report:
            report.write(args.report)
    elif args.report:
        raise DataError("cannot write a report: dataset has no gold scores")
    return 0


def cmd_ned(args) -> int:
    opts = _resolve(args, NED_DEFAULTS)
    nodes, graph, store = _load_runtime(args.data, opts["spec"], args.sqlite_dict)
    redirects = eval_mod.load_redirect_map(args.redirects) if args.redirects else None
    queries = ned_mod.load_queries(args.queries)
    resolver = None
    if args.resolver_url:
        cache = args.resolver_cache or os.path.join(args.data, "resolver_cache.json")
        resolver = ned_mod.CachedHttpResolver(args.resolver_url, cache)
    preds = ned_mod.run_batch(queries, graph, store, _params(opts),
                              system=args.system, workers=args.workers or 1,
                              resolver=resolver, nodes=nodes,
                              include_target=not args.context_only_teleport)
    ned_mod.write_predictions(preds, nodes, args.out)
    has_gold = any(q.gold_title is not None for q in queries)
    if has_gold:
        gold = {q.query_id: q.gold_title for q in queries}
        acc = eval_mod.accuracy(preds, gold, nodes, redirects)
        fallback = sum(1 for p in preds if p.fallback_used)
        print(f"accuracy {acc.value:.4f} on {acc.n} non-NIL instances "
              f"({fallback} fallbacks, {len(preds)} queries)")
        if args.report:
            config = {"task": "ned", "system": args.system, "graph_spec": opts["spec"],
                      "alpha": opts["alpha"], "iterations": opts["iterations"],
                      "k": opts["k"], "prior_init": opts["prior"],
                      "seed": opts["seed"], "dataset": args.queries,
                      "data": args.data,
                      "include_target": not args.context_only_teleport}
            report = eval_mod.EvalReport(args.queries, "accuracy", acc.value, acc.n, config)
            report.extras["fallback_count"] = fallback
            report.extras["fallback_rate"] = fallback / len(preds)
            report.extras["nil_predictions"] = sum(1 for p in preds if p.predicted is None)
            report.write(args.report)
    elif args.report:
        raise DataError("cannot write a report: queries have no gold titles")
    return 0


def cmd_eval(args) -> int:
    redirects = eval_mod.load_redirect_map(args.redirects) if args.redirects else None
    report = eval_mod.compare_prediction_files(
        args.task, args.dataset, args.preds, args.baseline or None,
        redirects=redirects, resamples=args.resamples or eval_mod.DEFAULT_RESAMPLES,
        seed=args.seed if args.seed is not None else 0)
    print(f"{report.metric} {report.value:.4f} on n={report.n}")
    for sig in report.significance:
        marker = "significant" if sig["significant"] else "not significant"
        print(f"vs {sig['baseline']}: p={sig['p_value']:.4g} ({marker})")
    if args.report:
        report.write(args.report)
    return 0


def _sweep_cells(args, opts):
    def axis(raw, cast, default):
        if raw is None:
            return [default]
        return [cast(x) for x in raw.split(",") if x != ""]

    graphs = axis(args.graphs, str, opts["spec"])
    alphas = axis(args.alphas, float, opts["alpha"])
    iters = axis(args.iters, int, opts["iterations"])
    ks = axis(args.ks, lambda x: None if x.lower() == "none" else int(x), opts["k"])
    priors = axis(args.priors, lambda x: {"p": True, "nop": False}[x.lower()],
                  opts["prior"])
    cells = list(itertools.product(graphs, alphas, iters, ks, priors))
    if not cells:
        raise UsageError("sweep grid is empty")
    return cells


def cmd_sweep(args) -> int:
    defaults = NED_DEFAULTS if args.task == "ned" else REL_DEFAULTS
    opts = _resolve(args, defaults)
    try:
        cells = _sweep_cells(args, opts)
    except (KeyError, ValueError):
        raise UsageError("bad sweep axis value; priors take P/noP, the rest "
                         "take comma-separated numbers") from None
    os.makedirs(args.out, exist_ok=True)

    runtimes = {}
    for spec in sorted({c[0] for c in cells}):
        runtimes[spec] = _load_runtime(args.data, spec)

    def cell_name(cell):
        spec, alpha, iterations, k, prior = cell
        return (f"{spec}_a{alpha:g}_i{iterations}_k{'none' if k is None else k}"
                f"_{'P' if prior else 'noP'}")

    def run_cell(cell):
        spec, alpha, iterations, k, prior = cell
        name = cell_name(cell)
        marker = os.path.join(args.out, name + ".done")
        report_path = os.path.join(args.out, name + ".json")
        if os.path.exists(marker):
            return name, "skipped"
        nodes, graph, store = runtimes[spec]
        params = PprParams(alpha=alpha, iterations=iterations, k=k, prior_init=prior)
        config = {"task": args.task, "system": args.system, "graph_spec": spec,
                  "alpha": alpha, "iterations": iterations, "k": k,
                  "prior_init": prior, "seed": opts["seed"],
                  "dataset": args.dataset, "data": args.data}
        report, _ = eval_mod.run_eval(
            args.task, args.system, [args.dataset], graph=graph, store=store,
            nodes=nodes, params=params, config=config, seed=opts["seed"],
            on_unknown=args.on_unknown)
        report.write(report_path)
        with open(marker, "w", encoding="utf-8") as fh:
            fh.write(name + "\n")
        return name, "done"

    workers = args.workers or 1
    if workers <= 1:
        results = [run_cell(c) for c in cells]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_cell, cells))
    for name, status in results:
        print(f"{name}: {status}")

    summary_path = os.path.join(args.out, "summary.csv")
    with open(summary_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["cell", "graph", "alpha", "iterations", "k", "prior",
                         "metric", "value", "n"])
        for cell in cells:
            name = cell_name(cell)
            path = os.path.join(args.out, name + ".json")
            with open(path, encoding="utf-8") as rfh:
                rep = json.load(rfh)
            spec, alpha, iterations, k, prior = cell
            writer.writerow([name, spec, alpha, iterations,
                             "" if k is None else k, "P" if prior else "noP",
                             rep["metric"], rep["value"], rep["n"]])
    print(f"{len(cells)} cells -> {summary_path}")
    return 0


def _add_common_run_args(p):
    p.add_argument("--data", required=True, help="directory with build outputs")
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--spec", help="graph spec (default Hr)")
    p.add_argument("--alpha", type=float, help="link-follow probability")
    p.add_argument("--iterations", "--iters", type=int, dest="iterations")
    p.add_argument("--k", type=lambda s: None if s.lower() == "none" else int(s),
                   help="PPV truncation rank, or 'none'")
    p.add_argument("--no-prior", action="store_true",
                   help="uniform teleport initialization instead of priors")
    p.add_argument("--seed", type=int)
    p.add_argument("--sqlite-dict", action="store_true",
                   help="serve the dictionary from dict.sqlite if present")


def build_parser() -> _Parser:
    parser = _Parser(prog="graphwalk",
                     description="link-graph random walks for relatedness and NED")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="convert record files to edge lists and counts")
    p.add_argument("--pages", required=True)
    p.add_argument("--links", required=True)
    p.add_argument("--anchors", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--title-pseudo-count", type=int, default=1)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("build", help="build graph and dictionary snapshots")
    p.add_argument("--ingest-dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--specs", default="Hr", help="comma list of graph specs")
    p.add_argument("--sqlite-dict", action="store_true")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("rel", help="score relatedness pairs")
    _add_common_run_args(p)
    p.add_argument("--pairs", required=True, help="term1 \\t term2 [\\t gold] file")
    p.add_argument("--out", required=True, help="prediction TSV to write")
    p.add_argument("--report", help="report JSON to write")
    p.add_argument("--system", choices=("ppr", "ngd"), default="ppr")
    p.add_argument("--on-unknown", choices=("skip", "zero"), default="skip")
    p.add_argument("--baseline", action="append",
                   help="prediction file to test against (repeatable)")
    p.set_defaults(func=cmd_rel)

    p = sub.add_parser("ned", help="disambiguate entity mentions")
    _add_common_run_args(p)
    p.add_argument("--queries", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    p.add_argument("--system", choices=("ppr", "ngd", "mfs"), default="ppr")
    p.add_argument("--workers", type=int)
    p.add_argument("--redirects", help="old_title \\t new_title mapping TSV")
    p.add_argument("--context-only-teleport", action="store_true",
                   help="exclude the target's own candidates from the teleport")
    p.add_argument("--resolver-url", help="title search endpoint with {query}")
    p.add_argument("--resolver-cache")
    p.set_defaults(func=cmd_ned)

    p = sub.add_parser("eval", help="score emitted prediction files")
    p.add_argument("--task", choices=("rel", "ned"), required=True)
    p.add_argument("--dataset", action="append", required=True,
                   help="gold dataset file (repeat to pool)")
    p.add_argument("--preds", action="append", required=True)
    p.add_argument("--baseline", action="append")
    p.add_argument("--redirects")
    p.add_argument("--resamples", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--report")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="grid of runs over walk parameters")
    p.add_argument("--data", required=True, help="directory with build outputs")
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--task", choices=("rel", "ned"), required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--system", default="ppr")
    p.add_argument("--graphs", help="comma list of graph specs")
    p.add_argument("--alphas", help="comma list of damping factors")
    p.add_argument("--iters", help="comma list of iteration counts")
    p.add_argument("--ks", help="comma list of truncation ranks ('none' allowed)")
    p.add_argument("--priors", help="comma list of P/noP")
    p.add_argument("--workers", type=int)
    p.add_argument("--on-unknown", choices=("skip", "zero"), default="skip")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
