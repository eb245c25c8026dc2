"""Command-line entry point.

Subcommands cover each pipeline stage (ingest, synth, seedgraph, expand,
infosphere, dataset, train, evaluate) plus whole-experiment orchestration
(run, report). Exit codes: 0 success, 1 usage error, 2 data error,
3 training divergence.
"""

import argparse
import dataclasses
import json
import logging
import sys

from .expansion import (
    ALLOWED_F,
    TRIALS,
    ExpandStats,
    ExpansionParams,
    expand,
    random_infosphere,
)
from .gnn import (
    Aggregation,
    DivergenceError,
    TrainConfig,
    build_model,
    compile_graph,
    evaluate,
    load_checkpoint,
    save_checkpoint,
    train,
    write_history_csv,
)
from .graph import NodeRef, NodeType, TemporalGraph
from .infosphere import (
    InfosphereEdgeSet,
    InfosphereProvenance,
    materialize,
    top_papers,
    top_papers_per_topic,
)
from .ingest import SynthConfig, ingest_corpus, synth_generate
from .link_task import (
    SPLIT_NAMES,
    LinkDataset,
    assemble_dataset,
    drop_infosphere,
)
from .pipeline import (
    ExperimentSpec,
    PipelineError,
    SpecError,
    default_out,
    format_report,
    load_result,
    write_report_csv,
)
from . import pipeline
from .seedgraph import (
    DEFAULT_HOP_LIMIT,
    build_all_seedgraphs,
    load_seedgraphs,
    save_seedgraphs,
)

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_DIVERGED = 3


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad flags; the contract reserves 2 for data
    # errors, so usage problems must exit 1
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _load_graph(path) -> TemporalGraph:
    return TemporalGraph.load(path)


def _print_json(data):
    print(json.dumps(data, sort_keys=True))


# -- stage commands ----------------------------------------------------------


def cmd_ingest(args) -> int:
    graph, stats = ingest_corpus(
        args.corpus, fmt=args.format, min_year=args.min_year, max_year=args.max_year
    )
    graph.save(args.output)
    _print_json(dataclasses.asdict(stats))
    return EXIT_OK


def cmd_synth(args) -> int:
    fields = {f.name for f in dataclasses.fields(SynthConfig)}
    cfg = SynthConfig(**{k: v for k, v in vars(args).items() if k in fields})
    graph = synth_generate(cfg, args.seed)
    graph.save(args.output)
    _print_json(
        {
            "authors": graph.num_nodes(NodeType.AUTHOR),
            "papers": graph.num_nodes(NodeType.PAPER),
            "topics": graph.num_nodes(NodeType.TOPIC),
            "edges": graph.total_edges(),
            "years": list(graph.year_range()),
        }
    )
    return EXIT_OK


def cmd_seedgraph(args) -> int:
    graph = _load_graph(args.graph)
    seedgraphs = build_all_seedgraphs(graph, args.year, args.hop_limit)
    save_seedgraphs(args.output, seedgraphs)
    _print_json(
        {
            "seedgraphs": len(seedgraphs),
            "paths": sum(len(sg.path_list()) for sg in seedgraphs),
            "year": args.year,
        }
    )
    return EXIT_OK


def _expansion_params(args) -> ExpansionParams:
    explicit = [args.p1, args.p2, args.p3, args.f]
    if args.trial is not None:
        if any(v is not None for v in explicit):
            raise SpecError("give a trial preset or explicit p1/p2/p3/f, not both")
        return TRIALS[args.trial]
    if any(v is None for v in explicit):
        raise SpecError("explicit expansion needs all of --p1, --p2, --p3, --f")
    return ExpansionParams(args.p1, args.p2, args.p3, args.f)


def cmd_expand(args) -> int:
    graph = _load_graph(args.graph)
    seedgraphs = load_seedgraphs(args.seeds)
    if not seedgraphs:
        raise PipelineError("exposure", f"no seedgraphs in {args.seeds}")
    params = _expansion_params(args)
    snap = graph.snapshot(seedgraphs[0].year)
    totals = ExpandStats()
    infos = []
    for sg in seedgraphs:
        info = expand(sg, snap, params, args.seed)
        totals.merge(info.stats)
        infos.append(info)
    edge_set = materialize(snap, infos, InfosphereProvenance.AUTHOR_FUTURE)
    edge_set.save(args.output)
    _print_json(
        {
            "authors": len(infos),
            "rows": len(edge_set.rows),
            "greens_added": totals.greens_added,
            "decisions": totals.decisions,
            "budget_exhausted": totals.budget_exhausted,
        }
    )
    return EXIT_OK


def cmd_infosphere(args) -> int:
    graph = _load_graph(args.graph)
    snap = graph.snapshot(args.year)
    authors = [NodeRef(NodeType.AUTHOR, int(a)) for a in snap.members(NodeType.AUTHOR)]
    if args.variant == "top_papers":
        shared = top_papers(snap, args.n)
        entries = [(a, shared) for a in authors]
        prov = InfosphereProvenance.TOP_PAPER
    elif args.variant == "top_papers_per_topic":
        entries = [(a, top_papers_per_topic(snap, a, args.m, args.n)) for a in authors]
        prov = InfosphereProvenance.TOP_PAPER_PER_TOPIC
    else:
        entries = [random_infosphere(snap, a, args.size, args.seed) for a in authors]
        prov = InfosphereProvenance.RANDOM
    edge_set = materialize(snap, entries, prov)
    edge_set.save(args.output)
    _print_json({"authors": len(authors), "rows": len(edge_set.rows), "year": args.year})
    return EXIT_OK


def cmd_dataset(args) -> int:
    graph = _load_graph(args.graph)
    dataset = assemble_dataset(graph, args.year, args.seed)
    dataset.save(args.output)
    if args.ndjson:
        dataset.write_ndjson(args.ndjson, graph)
    _print_json(dataset.counts())
    return EXIT_OK


def _compile_for(args, graph: TemporalGraph, year: int):
    edge_set = None
    if args.exposure:
        edge_set = InfosphereEdgeSet.load(args.exposure)
        if args.drop > 0.0:
            edge_set = drop_infosphere(edge_set, args.drop, args.drop_seed)
    return compile_graph(graph.snapshot(year), edge_set)


def cmd_train(args) -> int:
    graph = _load_graph(args.graph)
    dataset = LinkDataset.load(args.dataset)
    cg = _compile_for(args, graph, dataset.year)
    config = TrainConfig(
        epochs=args.epochs,
        patience=args.patience,
        batch=args.batch,
        lr=args.lr,
        d=args.d,
        h=args.h,
        seed=args.seed,
    )
    model = build_model(graph, config, Aggregation.from_name(args.aggregation))
    result = train(model, cg, dataset, config)
    save_checkpoint(args.output, result.model, config, result.adam)
    if args.history:
        write_history_csv(args.history, result.history)
    best = result.history[result.best_epoch - 1]
    _print_json(
        {
            "epochs_run": len(result.history),
            "best_epoch": result.best_epoch,
            "best_val_loss": best.val_loss,
            "best_val_acc": best.val_acc,
        }
    )
    return EXIT_OK


def cmd_evaluate(args) -> int:
    graph = _load_graph(args.graph)
    dataset = LinkDataset.load(args.dataset)
    model, _, _ = load_checkpoint(args.model)
    cg = _compile_for(args, graph, dataset.year)
    split = SPLIT_NAMES.index(args.split)
    pairs, labels = dataset.subset(split)
    metrics = evaluate(model, cg, pairs, labels)
    _print_json({"split": args.split, **metrics})
    return EXIT_OK


# -- experiment commands -----------------------------------------------------


def cmd_run(args) -> int:
    spec = ExperimentSpec.load(args.spec) if args.spec else ExperimentSpec()
    overrides = {}
    for name in ("seed", "year", "drop", "aggregation", "jobs", "out"):
        value = getattr(args, name)
        if value is not None:
            overrides[name] = value
    if overrides:
        spec = dataclasses.replace(spec, **overrides)
    out_dir = spec.out or str(default_out(spec))
    row = pipeline.run(spec, out=out_dir)
    _print_json({"out": out_dir, **row.to_dict()})
    return EXIT_OK


def cmd_report(args) -> int:
    rows = [load_result(p) for p in args.results]
    sys.stdout.write(format_report(rows))
    if args.csv:
        write_report_csv(rows, args.csv)
    return EXIT_OK


# -- parser ------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="acadnet", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="info-level logging")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("ingest", help="parse a corpus file into a graph store")
    p.add_argument("corpus")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--format", choices=("auto", "array", "ndjson"), default="auto")
    p.add_argument("--min-year", type=int, default=None)
    p.add_argument("--max-year", type=int, default=None)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("synth", help="generate a synthetic corpus graph")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--seed", type=int, default=0)
    defaults = SynthConfig()
    p.add_argument("--authors", type=int, default=defaults.authors)
    p.add_argument("--topics", type=int, default=defaults.topics)
    p.add_argument("--years", type=int, default=defaults.years)
    p.add_argument("--papers-per-year", type=int, default=defaults.papers_per_year)
    p.add_argument("--authors-per-paper", type=int, default=defaults.authors_per_paper)
    p.add_argument("--topics-per-paper", type=int, default=defaults.topics_per_paper)
    p.add_argument("--refs-per-paper", type=int, default=defaults.refs_per_paper)
    p.add_argument(
        "--topic-concentration", type=float, default=defaults.topic_concentration
    )
    p.add_argument("--rho", type=float, default=defaults.rho)
    p.add_argument("--start-year", type=int, default=defaults.start_year)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("seedgraph", help="build per-author seedgraphs for a year")
    p.add_argument("graph")
    p.add_argument("--year", type=int, required=True)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--hop-limit", type=int, default=DEFAULT_HOP_LIMIT)
    p.set_defaults(func=cmd_seedgraph)

    p = sub.add_parser("expand", help="run expansion walks over saved seedgraphs")
    p.add_argument("graph")
    p.add_argument("seeds")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--trial", choices=sorted(TRIALS), default=None)
    p.add_argument("--p1", type=float, default=None)
    p.add_argument("--p2", type=float, default=None)
    p.add_argument("--p3", type=float, default=None)
    p.add_argument("--f", type=int, choices=ALLOWED_F, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_expand)

    p = sub.add_parser(
        "infosphere", help="build top-paper or random exposure sets for a year"
    )
    p.add_argument("graph")
    p.add_argument("--year", type=int, required=True)
    p.add_argument(
        "--variant",
        choices=("top_papers", "top_papers_per_topic", "random"),
        required=True,
    )
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--n", type=int, default=10, help="papers per list")
    p.add_argument("--m", type=int, default=1, help="topics per author")
    p.add_argument("--size", type=int, default=10, help="random nodes per author")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_infosphere)

    p = sub.add_parser("dataset", help="assemble the labeled co-author pair dataset")
    p.add_argument("graph")
    p.add_argument("--year", type=int, required=True)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ndjson", default=None, help="also export readable rows here")
    p.set_defaults(func=cmd_dataset)

    train_defaults = TrainConfig()
    p = sub.add_parser("train", help="train the encoder-decoder on a dataset")
    p.add_argument("graph")
    p.add_argument("dataset")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--exposure", default=None)
    p.add_argument("--drop", type=float, default=0.0)
    p.add_argument("--drop-seed", type=int, default=0)
    p.add_argument("--history", default=None, help="write per-epoch CSV here")
    p.add_argument("--aggregation", choices=("sum", "mean", "min", "max"), default="mean")
    p.add_argument("--epochs", type=int, default=train_defaults.epochs)
    p.add_argument("--patience", type=int, default=train_defaults.patience)
    p.add_argument("--batch", type=int, default=train_defaults.batch)
    p.add_argument("--lr", type=float, default=train_defaults.lr)
    p.add_argument("--d", type=int, default=train_defaults.d)
    p.add_argument("--h", type=int, default=train_defaults.h)
    p.add_argument("--seed", type=int, default=train_defaults.seed)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a checkpoint on a dataset split")
    p.add_argument("graph")
    p.add_argument("dataset")
    p.add_argument("model")
    p.add_argument("--exposure", default=None)
    p.add_argument("--drop", type=float, default=0.0)
    p.add_argument("--drop-seed", type=int, default=0)
    p.add_argument("--split", choices=SPLIT_NAMES, default="test")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("run", help="run a whole experiment from a spec file")
    p.add_argument("spec", nargs="?", default=None, help="JSON spec (default: built-in)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--year", type=int, default=None)
    p.add_argument("--drop", type=float, default=None)
    p.add_argument("--aggregation", default=None)
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("-o", "--out", default=None)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="tabulate result rows from finished runs")
    p.add_argument("results", nargs="+", help="result.json files or run directories")
    p.add_argument("--csv", default=None, help="also write the table as CSV here")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except SpecError as exc:
        print(f"acadnet: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DivergenceError as exc:
        print(f"acadnet: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (ValueError, OSError, PipelineError) as exc:
        print(f"acadnet: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
