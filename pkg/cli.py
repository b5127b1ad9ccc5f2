import argparse
import csv
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import networkx as nx
import numpy as np
from pydantic import ValidationError

from config import DEFAULT_SEED, DEFAULT_SIMS, DEFAULT_WORKERS
from services.cascade_engine import CascadeModel, deterministic_spread, estimate_spread, exact_spread_small
from services.experiment_harness import (RESULT_HEADER, ExperimentConfig, load_graph, pointwise_gain, read_csv,
                                         result_records, run_experiment, write_spend_log)
from services.graph_core import DirectedGraph, load_edge_list, serialize_edge_list
from services.optimizers import dag_all_single_node_spreads, dag_linear_optimize
from services.reductions import (amplify_instance, make_cycle_gap, make_path_gap, reduce_independent_set,
                                 reduce_max_coverage)
from services.types import (ConfigError, ContractViolation, DataError, DomainError, InfluenceVector, SizeError,
                            ThresholdVector, TriggeringKind, WeightModel)
from utils.conf import setup_logging
from utils.file_system import fs_util

logger = logging.getLogger("fracspread")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3


def _add_graph_args(parser: argparse.ArgumentParser, required: bool = True):
    parser.add_argument("--graph", required=required, help="Edge-list path or synthetic:<pa|dag|grid>:<size>")
    parser.add_argument("--undirected", action="store_true", default=None, help="Read edges as opposite arc pairs")
    parser.add_argument("--weights", choices=[w.value for w in WeightModel], default=None, help="Arc weight model")
    parser.add_argument("--seed", type=int, default=None, help="Master seed")
    parser.add_argument("--workers", type=int, default=None, help="Concurrent workers")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fracspread", description="Fractional influence maximization")
    parser.add_argument("--log-level", default=None, help="Root log level (default from FRACSPREAD_LOG_LEVEL)")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Budget sweep over algorithms, results as CSV")
    _add_graph_args(run, required=False)
    run.add_argument("--config", type=Path, help="Flat YAML config; flags override its keys")
    run.add_argument("--algos", help="Comma-separated algorithm names")
    run.add_argument("--budgets", help="Comma-separated nondecreasing budgets")
    run.add_argument("--sims", type=int, default=None, help="Replicates per estimate")
    run.add_argument("--delta", default=None, help="Grid step of GreedyFrac, 1/N")
    run.add_argument("--out", type=Path, default=None, help="CSV output path")
    run.add_argument("--thresholds", type=Path, default=None, help="Fixed thresholds sidecar ('v τ_v' lines)")
    run.add_argument("--dataset", default=None, help="Dataset label")
    run.add_argument("--no-timing", dest="record_wallclock", action="store_false", default=None,
                     help="Write wallclock_ms as 0 so identical runs give identical files")

    gen = sub.add_parser("gen", help="Generate a gap or hardness instance")
    gen.add_argument("kind", choices=["path", "cycle", "is", "maxcov", "amplify"])
    gen.add_argument("--n", type=int, default=4, help="Node count (path, cycle)")
    gen.add_argument("--k", type=float, default=1, help="Budget K (cycle) or seed count k (is, maxcov, amplify)")
    gen.add_argument("--graph", help="Undirected source graph edge list (is, amplify)")
    gen.add_argument("--sets", help="Set system as '1,2;2,3' (maxcov)")
    gen.add_argument("--copies", type=int, default=1, help="Copies N per element (maxcov)")
    gen.add_argument("--or-tree", action="store_true", help="Bound triggering sets to two nodes (maxcov)")
    gen.add_argument("--target", type=float, help="Target T (amplify)")
    gen.add_argument("--delta-exponent", type=float, default=1.0, help="Exponent δ of N = ⌈(2n²)^(1/δ)⌉ (amplify)")
    gen.add_argument("--sink-count", type=int, default=None, help="Explicit sink count N (amplify)")
    gen.add_argument("--out", type=Path, required=True, help="Edge-list output; sidecars get .thresholds / .x")

    est = sub.add_parser("estimate", help="Spread of an allocation file ('v x_v' lines)")
    _add_graph_args(est)
    est.add_argument("--x", type=Path, required=True, help="Allocation file")
    est.add_argument("--sims", type=int, default=DEFAULT_SIMS)
    est.add_argument("--thresholds", type=Path, default=None, help="Fixed thresholds sidecar")
    est.add_argument("--triggering", choices=[k.value for k in TriggeringKind], default=None,
                     help="Run a triggering model instead of the linear one")
    est.add_argument("--exact", action="store_true", help="Exact oracle (small instances only)")

    dp = sub.add_parser("dp", help="Single-node spreads of a DAG, optionally its linear allocation")
    _add_graph_args(dp)
    dp.add_argument("--budget", type=float, default=None, help="Also allocate this budget")
    dp.add_argument("--spend-log", type=Path, default=None, help="Write the allocation spend log as CSV")

    gain = sub.add_parser("gain", help="Pointwise gain table of a results CSV")
    gain.add_argument("csv", type=Path)
    return parser


def _graph_for(args) -> DirectedGraph:
    cfg = ExperimentConfig(graph=args.graph, undirected=bool(args.undirected),
                           weights=args.weights or WeightModel.WEIGHTED_CASCADE.value,
                           budgets=[0], seed=args.seed if args.seed is not None else DEFAULT_SEED)
    return load_graph(cfg)


def cmd_run(args) -> int:
    overrides = {key: getattr(args, key) for key in
                 ("graph", "undirected", "weights", "algos", "budgets", "sims", "seed", "delta", "out", "thresholds",
                  "dataset", "workers", "record_wallclock")}
    cfg = ExperimentConfig.load(args.config, overrides)
    rows = run_experiment(cfg)
    if cfg.out is None:
        writer = csv.writer(sys.stdout, lineterminator="\r\n")
        writer.writerow(RESULT_HEADER)
        writer.writerows(result_records(rows))
    else:
        print(f"Wrote {len(rows)} rows to {cfg.out}")
    return EXIT_OK


def _write_instance(out: Path, graph: DirectedGraph, thresholds: Optional[ThresholdVector] = None,
                    witness: Optional[InfluenceVector] = None):
    serialize_edge_list(graph, out)
    if thresholds is not None:
        fs_util.write_node_values(f"{out}.thresholds", thresholds.values, graph.original_ids)
    if witness is not None:
        fs_util.write_node_values(f"{out}.x", witness.values, graph.original_ids)
    print(f"Wrote {graph} to {out}")


def _undirected_source(path: str) -> nx.Graph:
    graph = load_edge_list(path, directed=False)
    source = nx.Graph()
    source.add_nodes_from(int(i) for i in graph.original_ids)
    source.add_edges_from((int(graph.original_ids[u]), int(graph.original_ids[v])) for u, v, _ in graph.arcs())
    return source


def _parse_sets(text: Optional[str]) -> List[List[int]]:
    if not text:
        raise DomainError("--sets is required for maxcov, e.g. '1,2;2,3'")
    try:
        return [[int(e) for e in part.split(",") if e.strip()] for part in text.split(";")]
    except ValueError:
        raise DomainError(f"Cannot parse set system '{text}'")


def cmd_gen(args) -> int:
    if args.kind == "path":
        instance = make_path_gap(args.n)
        _write_instance(args.out, instance.graph, instance.thresholds, instance.witness)
    elif args.kind == "cycle":
        graph = make_cycle_gap(args.n, args.k)
        _write_instance(args.out, graph, witness=InfluenceVector(values=np.full(args.n, args.k / args.n)))
    elif args.kind == "maxcov":
        instance = reduce_max_coverage(_parse_sets(args.sets), int(args.k), args.copies, or_tree=args.or_tree)
        _write_instance(args.out, instance.graph, instance.thresholds)
    else:
        if not args.graph:
            raise DomainError(f"--graph is required for {args.kind}")
        instance = reduce_independent_set(_undirected_source(args.graph), int(args.k))
        if args.kind == "amplify":
            if args.target is None:
                raise DomainError("--target is required for amplify")
            instance = amplify_instance(instance, args.target, args.delta_exponent, sink_count=args.sink_count)
        _write_instance(args.out, instance.graph, instance.thresholds)
    return EXIT_OK


def cmd_estimate(args) -> int:
    graph = _graph_for(args)
    original_ids = None if args.graph.startswith("synthetic:") else graph.original_ids
    try:
        x = InfluenceVector(values=fs_util.read_node_values(args.x, graph.node_count, original_ids))
    except ValidationError as e:
        raise DataError(f"Invalid allocation in {args.x}: {e}")
    if args.triggering:
        model = CascadeModel.triggering_model(graph, TriggeringKind(args.triggering))
    else:
        model = CascadeModel.linear(graph, allow_overweight=True)
    seed = args.seed if args.seed is not None else DEFAULT_SEED
    if args.thresholds:
        thresholds = ThresholdVector.fixed(fs_util.read_node_values(args.thresholds, graph.node_count, original_ids))
        print(f"spread {deterministic_spread(model, x, thresholds)!r} (fixed thresholds)")
    elif args.exact:
        print(f"spread {exact_spread_small(model, x)!r} (exact)")
    else:
        estimate = estimate_spread(model, x, args.sims, seed, workers=args.workers or DEFAULT_WORKERS)
        print(f"spread {estimate.mean!r} stderr {estimate.stderr!r} replicates {estimate.replicates} seed {seed}")
    return EXIT_OK


def cmd_dp(args) -> int:
    graph = _graph_for(args)
    sigma = dag_all_single_node_spreads(graph)
    for v in range(graph.node_count):
        print(f"{graph.original_ids[v]} {sigma[v]!r}")
    if args.budget is not None:
        result = dag_linear_optimize(graph, args.budget)
        print(f"# predicted spread {result.predicted_spread!r}")
        if args.spend_log:
            write_spend_log(result, args.spend_log, graph.original_ids)
    return EXIT_OK


def cmd_gain(args) -> int:
    table = pointwise_gain(read_csv(args.csv))
    print("dataset,budget,best_fractional,best_integral,gain")
    for row in table.rows:
        print(f"{row.dataset},{row.budget!r},{row.best_fractional!r},{row.best_integral!r},{row.gain!r}")
    print(f"# mean gain {table.mean_gain!r}, median gain {table.median_gain!r}")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "gen": cmd_gen, "estimate": cmd_estimate, "dp": cmd_dp, "gain": cmd_gain}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, DomainError, ContractViolation, SizeError) as e:
        logger.error(str(e))
        return EXIT_CONFIG
    except (DataError, OSError) as e:
        logger.error(str(e))
        return EXIT_DATA
    except ValidationError as e:
        logger.error(f"Invalid input: {e}")
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
