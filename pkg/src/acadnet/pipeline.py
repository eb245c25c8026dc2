"""End-to-end experiment pipeline.

One experiment = corpus (real or synthetic) -> temporal graph -> optional
infosphere exposure -> link dataset -> GNN training -> evaluation, all
artifacts written to an output directory. Stages are cached by content
hash: a stage is skipped when its inputs and parameters are unchanged and
its outputs still exist, so reruns are cheap and changing any upstream
parameter invalidates everything downstream.
"""

import dataclasses
import hashlib
import json
import logging
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

from .binio import FormatError
from .expansion import TRIALS, ExpansionParams, expand, random_infosphere
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
from .link_task import SPLIT_TEST, LinkDataset, assemble_dataset, drop_infosphere
from .rng import stable_hash64
from .seedgraph import (
    DEFAULT_HOP_LIMIT,
    build_all_seedgraphs,
    load_seedgraphs,
    save_seedgraphs,
)

log = logging.getLogger(__name__)

CACHE_ENV = "ACADNET_CACHE"
ENCODER = "sage"

VARIANTS = ("none", "author", "top_papers", "top_papers_per_topic", "random")

# report blocks: baseline first, author-future treatment last
VARIANT_ORDER = {
    name: i
    for i, name in enumerate(
        ("none", "top_papers", "top_papers_per_topic", "random", "author")
    )
}


class SpecError(ValueError):
    """An experiment spec that cannot be run as written."""


class PipelineError(RuntimeError):
    """A pipeline stage failed; carries the stage name."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"stage '{stage}': {message}")
        self.stage = stage


# -- experiment spec ---------------------------------------------------------


def _coerce_dataclass(cls, data: dict, what: str):
    known = {f.name for f in dataclasses.fields(cls)}
    extra = set(data) - known
    if extra:
        raise SpecError(f"unknown {what} field(s): {', '.join(sorted(extra))}")
    return cls(**data)


@dataclass
class ExperimentSpec:
    """Everything needed to run one experiment, with defaults resolved.

    Exactly one corpus source applies: `corpus` (a file path) or `synth`
    (generator settings); with neither set, default generator settings are
    used. `year` is the prediction year; None means the penultimate corpus
    year. `infosphere_params` depend on the variant:

      author                p1/p2/p3/f explicitly, or trial="trial1".."trial5";
                            default is no expansion (seed paths only)
      top_papers            n (list length, default 10)
      top_papers_per_topic  m topics and n papers per topic (defaults 1, 10)
      random                size (nodes attached per author, default 10)
    """

    seed: int = 0
    year: int | None = None
    corpus: str | None = None
    corpus_format: str = "auto"
    synth: SynthConfig | None = None
    infosphere: str = "none"
    infosphere_params: dict = field(default_factory=dict)
    drop: float = 0.0
    aggregation: str = "mean"
    hop_limit: int = DEFAULT_HOP_LIMIT
    train: TrainConfig = field(default_factory=TrainConfig)
    jobs: int = 1
    out: str | None = None

    def validate(self):
        if self.infosphere not in VARIANTS:
            raise SpecError(
                f"unknown infosphere variant '{self.infosphere}' "
                f"(expected one of {', '.join(VARIANTS)})"
            )
        if not 0.0 <= self.drop <= 1.0:
            raise SpecError(f"drop fraction {self.drop} outside [0, 1]")
        if self.drop > 0.0 and self.infosphere == "none":
            raise SpecError("drop fraction needs an infosphere variant")
        if self.corpus is not None and self.synth is not None:
            raise SpecError("give either a corpus path or synth settings, not both")
        if self.year is not None and not isinstance(self.year, int):
            raise SpecError("year must be an integer")
        if self.jobs < 1:
            raise SpecError("jobs must be at least 1")
        if self.hop_limit < 1:
            raise SpecError("hop_limit must be at least 1")
        try:
            Aggregation.from_name(self.aggregation)
            self.train.validate()
        except ValueError as exc:
            raise SpecError(str(exc)) from exc
        self.resolved_params()

    def resolved_params(self) -> dict:
        """Variant parameters with defaults filled in, validated."""
        p = dict(self.infosphere_params)
        if self.infosphere == "none":
            if p:
                raise SpecError("infosphere 'none' takes no parameters")
            return {}
        if self.infosphere == "author":
            trial = p.pop("trial", None)
            explicit = {k: p.pop(k) for k in ("p1", "p2", "p3", "f") if k in p}
            if p:
                raise SpecError(f"unknown author parameter(s): {', '.join(sorted(p))}")
            if trial is not None and explicit:
                raise SpecError("give a trial preset or explicit p1/p2/p3/f, not both")
            if trial is not None:
                if trial not in TRIALS:
                    raise SpecError(
                        f"unknown trial '{trial}' (expected {', '.join(sorted(TRIALS))})"
                    )
                ep = TRIALS[trial]
                return {"trial": trial, "p1": ep.p1, "p2": ep.p2, "p3": ep.p3, "f": ep.f}
            # omitted fields default to the no-expansion walk (f = 0)
            explicit = {
                "p1": explicit.get("p1", 0.0),
                "p2": explicit.get("p2", 0.0),
                "p3": explicit.get("p3", 0.0),
                "f": explicit.get("f", 0),
            }
            try:
                ExpansionParams(**explicit)
            except ValueError as exc:
                raise SpecError(str(exc)) from exc
            return explicit
        if self.infosphere == "top_papers":
            n = p.pop("n", 10)
            if p:
                raise SpecError(f"unknown top_papers parameter(s): {', '.join(sorted(p))}")
            if not isinstance(n, int) or n < 1:
                raise SpecError("top_papers n must be a positive integer")
            return {"n": n}
        if self.infosphere == "top_papers_per_topic":
            m = p.pop("m", 1)
            n = p.pop("n", 10)
            if p:
                raise SpecError(
                    f"unknown top_papers_per_topic parameter(s): {', '.join(sorted(p))}"
                )
            for name, v in (("m", m), ("n", n)):
                if not isinstance(v, int) or v < 1:
                    raise SpecError(f"top_papers_per_topic {name} must be a positive integer")
            return {"m": m, "n": n}
        size = p.pop("size", 10)
        if p:
            raise SpecError(f"unknown random parameter(s): {', '.join(sorted(p))}")
        if not isinstance(size, int) or size < 1:
            raise SpecError("random size must be a positive integer")
        return {"size": size}

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "year": self.year,
            "corpus": self.corpus,
            "corpus_format": self.corpus_format,
            "synth": dataclasses.asdict(self.synth) if self.synth else None,
            "infosphere": self.infosphere,
            "infosphere_params": dict(self.infosphere_params),
            "drop": self.drop,
            "aggregation": self.aggregation,
            "hop_limit": self.hop_limit,
            "train": dataclasses.asdict(self.train),
            "jobs": self.jobs,
            "out": self.out,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentSpec":
        if not isinstance(data, dict):
            raise SpecError("experiment spec must be a JSON object")
        data = dict(data)
        synth = data.pop("synth", None)
        if synth is not None:
            synth = _coerce_dataclass(SynthConfig, synth, "synth")
        tr = data.pop("train", None)
        train_cfg = _coerce_dataclass(TrainConfig, tr, "train") if tr else TrainConfig()
        known = {f.name for f in dataclasses.fields(cls)} - {"synth", "train"}
        extra = set(data) - known
        if extra:
            raise SpecError(f"unknown spec field(s): {', '.join(sorted(extra))}")
        return cls(synth=synth, train=train_cfg, **data)

    @classmethod
    def load(cls, path) -> "ExperimentSpec":
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except json.JSONDecodeError as exc:
            raise SpecError(f"{path}: not valid JSON ({exc})") from exc
        return cls.from_dict(data)


# -- result rows -------------------------------------------------------------

_ROW_FIELDS = (
    "infosphere",
    "params",
    "drop",
    "accuracy",
    "aggregation",
    "encoder",
    "seed",
    "runtime",
)


@dataclass
class ResultRow:
    infosphere: str
    params: dict
    drop: float
    accuracy: float
    aggregation: str
    encoder: str
    seed: int
    runtime: float

    def identity(self) -> tuple:
        """Everything but runtime; what a rerun must reproduce exactly."""
        return (
            self.infosphere,
            json.dumps(self.params, sort_keys=True),
            self.drop,
            self.accuracy,
            self.aggregation,
            self.encoder,
            self.seed,
        )

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in _ROW_FIELDS}

    @classmethod
    def from_dict(cls, data: dict) -> "ResultRow":
        missing = [name for name in _ROW_FIELDS if name not in data]
        if missing:
            raise FormatError(f"result row missing field(s): {', '.join(missing)}")
        return cls(**{name: data[name] for name in _ROW_FIELDS})


def load_result(path) -> ResultRow:
    """Read a ResultRow from result.json (or a run directory holding one)."""
    p = Path(path)
    if p.is_dir():
        p = p / "result.json"
    try:
        with open(p, "r", encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{p}: not valid JSON ({exc})") from exc
    return ResultRow.from_dict(data)


# -- stage cache -------------------------------------------------------------


def _file_hash(path) -> str:
    h = hashlib.blake2b(digest_size=16)
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _content_key(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.blake2b(blob.encode("utf-8"), digest_size=16).hexdigest()


def _stage_seed(seed: int, name: str) -> int:
    # signed 64-bit so seeds survive the checkpoint format
    return stable_hash64("stage", seed, name) & 0x7FFFFFFFFFFFFFFF


class _StageRunner:
    """Executes stages with .stamp-file memoization in the output directory."""

    def __init__(self, out_dir: Path):
        self.out = out_dir
        self.executed: list[str] = []
        self.skipped: list[str] = []

    def run(self, name: str, payload: dict, outputs: list[str], fn) -> bool:
        key = _content_key({"stage": name, **payload})
        stamp = self.out / f"{name}.stamp"
        if stamp.exists():
            try:
                old = json.loads(stamp.read_text(encoding="utf-8"))
            except (ValueError, OSError):
                old = {}
            if old.get("key") == key and all((self.out / o).exists() for o in outputs):
                log.info("stage %s: unchanged, skipping", name)
                self.skipped.append(name)
                return False
        # a half-written stage must not look complete
        stamp.unlink(missing_ok=True)
        t0 = time.perf_counter()
        try:
            fn()
        except (DivergenceError, PipelineError):
            raise
        except Exception as exc:
            raise PipelineError(name, str(exc)) from exc
        stamp.write_text(
            json.dumps({"key": key, "outputs": outputs}, sort_keys=True) + "\n",
            encoding="utf-8",
        )
        log.info("stage %s: done in %.2fs", name, time.perf_counter() - t0)
        self.executed.append(name)
        return True


# -- the pipeline ------------------------------------------------------------


def cache_root() -> Path:
    env = os.environ.get(CACHE_ENV)
    if env:
        return Path(env)
    return Path.home() / ".cache" / "acadnet"


def default_out(spec: ExperimentSpec) -> Path:
    """Deterministic run directory under the cache root, ignoring fields
    that do not affect results."""
    ident = {k: v for k, v in spec.to_dict().items() if k not in ("out", "jobs")}
    return cache_root() / "runs" / _content_key(ident)


def run(spec: ExperimentSpec, out=None) -> ResultRow:
    """Execute (or resume) the full pipeline for one experiment spec."""
    spec.validate()
    t_start = time.perf_counter()
    out_dir = Path(out) if out is not None else (
        Path(spec.out) if spec.out else default_out(spec)
    )
    out_dir.mkdir(parents=True, exist_ok=True)
    if spec.jobs > 1:
        log.info("jobs=%d requested; all stages currently run single-threaded", spec.jobs)

    runner = _StageRunner(out_dir)
    params = spec.resolved_params()

    # graph: ingest the corpus or generate one
    graph_path = out_dir / "graph.anpg"
    if spec.corpus is not None:
        if not Path(spec.corpus).is_file():
            raise SpecError(f"corpus file not found: {spec.corpus}")
        payload = {
            "corpus": _file_hash(spec.corpus),
            "format": spec.corpus_format,
        }

        def build_graph_stage():
            g, stats = ingest_corpus(spec.corpus, fmt=spec.corpus_format)
            log.info(
                "ingested %d papers, %d authors, %d topics",
                stats.papers, stats.authors, stats.topics,
            )
            g.save(graph_path)

    else:
        synth_cfg = spec.synth if spec.synth is not None else SynthConfig()
        synth_seed = _stage_seed(spec.seed, "synth")
        payload = {"synth": dataclasses.asdict(synth_cfg), "seed": synth_seed}

        def build_graph_stage():
            synth_generate(synth_cfg, synth_seed).save(graph_path)

    runner.run("graph", payload, ["graph.anpg"], build_graph_stage)

    try:
        graph = TemporalGraph.load(graph_path)
        lo, hi = graph.year_range()
    except ValueError as exc:
        raise PipelineError("graph", str(exc)) from exc
    year = spec.year if spec.year is not None else hi - 1
    if not lo <= year < hi:
        raise SpecError(f"prediction year {year} outside usable span [{lo}, {hi - 1}]")
    graph_hash = _file_hash(graph_path)

    train_cfg = dataclasses.replace(spec.train, seed=_stage_seed(spec.seed, "train"))

    # provenance: the spec as actually executed, defaults and all
    echo = spec.to_dict()
    echo["year"] = year
    echo["infosphere_params"] = params
    echo["train"] = dataclasses.asdict(train_cfg)
    echo["out"] = str(out_dir)
    if spec.corpus is None:
        echo["synth"] = dataclasses.asdict(spec.synth or SynthConfig())
    (out_dir / "spec.json").write_text(
        json.dumps(echo, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )

    # exposure: one infosphere per snapshot author, variant-specific
    exposure_path = None
    if spec.infosphere == "author":
        seeds_path = out_dir / "seeds.anps"
        runner.run(
            "seedgraph",
            {"graph": graph_hash, "year": year, "hop_limit": spec.hop_limit},
            ["seeds.anps"],
            lambda: save_seedgraphs(
                seeds_path, build_all_seedgraphs(graph, year, spec.hop_limit)
            ),
        )
        exposure_path = out_dir / "exposure.anpe"
        ep = ExpansionParams(params["p1"], params["p2"], params["p3"], params["f"])
        expand_seed = _stage_seed(spec.seed, "expand")

        def build_exposure():
            snap = graph.snapshot(year)
            infos = [
                expand(sg, snap, ep, expand_seed) for sg in load_seedgraphs(seeds_path)
            ]
            materialize(snap, infos, InfosphereProvenance.AUTHOR_FUTURE).save(
                exposure_path
            )

        runner.run(
            "exposure",
            {
                "graph": graph_hash,
                "year": year,
                "seeds": _file_hash(seeds_path),
                "params": [ep.p1, ep.p2, ep.p3, ep.f],
                "seed": expand_seed,
            },
            ["exposure.anpe"],
            build_exposure,
        )
    elif spec.infosphere != "none":
        exposure_path = out_dir / "exposure.anpe"
        variant_seed = _stage_seed(spec.seed, "random-infosphere")

        def build_exposure():
            snap = graph.snapshot(year)
            authors = [
                NodeRef(NodeType.AUTHOR, int(a)) for a in snap.members(NodeType.AUTHOR)
            ]
            if spec.infosphere == "top_papers":
                shared = top_papers(snap, params["n"])
                entries = [(a, shared) for a in authors]
                prov = InfosphereProvenance.TOP_PAPER
            elif spec.infosphere == "top_papers_per_topic":
                entries = [
                    (a, top_papers_per_topic(snap, a, params["m"], params["n"]))
                    for a in authors
                ]
                prov = InfosphereProvenance.TOP_PAPER_PER_TOPIC
            else:
                entries = [
                    random_infosphere(snap, a, params["size"], variant_seed)
                    for a in authors
                ]
                prov = InfosphereProvenance.RANDOM
            materialize(snap, entries, prov).save(exposure_path)

        payload = {"graph": graph_hash, "year": year, "params": params}
        if spec.infosphere == "random":
            payload["seed"] = variant_seed
        runner.run("exposure", payload, ["exposure.anpe"], build_exposure)

    # drop: thin the exposure rows, a separate artifact so expansion is reused
    if exposure_path is not None and spec.drop > 0.0:
        dropped_path = out_dir / "exposure_dropped.anpe"
        drop_seed = _stage_seed(spec.seed, "drop")
        src_path = exposure_path

        def build_dropped():
            es = InfosphereEdgeSet.load(src_path)
            drop_infosphere(es, spec.drop, drop_seed).save(dropped_path)

        runner.run(
            "drop",
            {"exposure": _file_hash(src_path), "drop": spec.drop, "seed": drop_seed},
            ["exposure_dropped.anpe"],
            build_dropped,
        )
        exposure_path = dropped_path

    # dataset: labeled, balanced, split author pairs for year+1
    dataset_path = out_dir / "dataset.anpd"
    dataset_seed = _stage_seed(spec.seed, "dataset")
    runner.run(
        "dataset",
        {"graph": graph_hash, "year": year, "seed": dataset_seed},
        ["dataset.anpd"],
        lambda: assemble_dataset(graph, year, dataset_seed).save(dataset_path),
    )

    exposure_hash = _file_hash(exposure_path) if exposure_path else ""

    def compiled():
        snap = graph.snapshot(year)
        es = InfosphereEdgeSet.load(exposure_path) if exposure_path else None
        return compile_graph(snap, es)

    # train: encoder-decoder fit with early stopping
    model_path = out_dir / "model.anpm"
    history_path = out_dir / "history.csv"

    def build_train():
        cg = compiled()
        dataset = LinkDataset.load(dataset_path)
        model = build_model(graph, train_cfg, Aggregation.from_name(spec.aggregation))
        result = train(model, cg, dataset, train_cfg)
        save_checkpoint(model_path, result.model, train_cfg, result.adam)
        write_history_csv(history_path, result.history)
        log.info(
            "trained %d epochs, best epoch %d", len(result.history), result.best_epoch
        )

    runner.run(
        "train",
        {
            "graph": graph_hash,
            "year": year,
            "dataset": _file_hash(dataset_path),
            "exposure": exposure_hash,
            "train": dataclasses.asdict(train_cfg),
            "aggregation": spec.aggregation,
        },
        ["model.anpm", "history.csv"],
        build_train,
    )

    # evaluate: held-out test metrics, emitted as the result row
    result_path = out_dir / "result.json"

    def build_result():
        model, _, _ = load_checkpoint(model_path)
        dataset = LinkDataset.load(dataset_path)
        pairs, labels = dataset.subset(SPLIT_TEST)
        metrics = evaluate(model, compiled(), pairs, labels)
        row = ResultRow(
            infosphere=spec.infosphere,
            params=params,
            drop=spec.drop,
            accuracy=metrics["accuracy"],
            aggregation=spec.aggregation,
            encoder=ENCODER,
            seed=spec.seed,
            runtime=round(time.perf_counter() - t_start, 6),
        )
        data = row.to_dict()
        data["metrics"] = metrics
        data["year"] = year
        result_path.write_text(
            json.dumps(data, sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )

    runner.run(
        "evaluate",
        {
            "graph": graph_hash,
            "year": year,
            "model": _file_hash(model_path),
            "dataset": _file_hash(dataset_path),
            "exposure": exposure_hash,
        },
        ["result.json"],
        build_result,
    )

    row = load_result(result_path)
    log.info(
        "run complete: accuracy %.4f (%d stages run, %d skipped)",
        row.accuracy, len(runner.executed), len(runner.skipped),
    )
    return row


# -- reporting ---------------------------------------------------------------


def _params_str(params: dict) -> str:
    if not params:
        return "-"
    return " ".join(f"{k}={params[k]}" for k in sorted(params))


def _row_sort_key(row: ResultRow):
    return (
        VARIANT_ORDER.get(row.infosphere, len(VARIANT_ORDER)),
        _params_str(row.params),
        row.drop,
        row.aggregation,
        row.seed,
    )


REPORT_COLUMNS = (
    "infosphere",
    "params",
    "drop",
    "accuracy",
    "aggregation",
    "encoder",
    "seed",
    "runtime",
)


def _report_cells(row: ResultRow) -> list[str]:
    return [
        row.infosphere,
        _params_str(row.params),
        f"{row.drop:.2f}",
        f"{row.accuracy:.4f}",
        row.aggregation,
        row.encoder,
        str(row.seed),
        f"{row.runtime:.2f}",
    ]


def format_report(rows: list[ResultRow]) -> str:
    """Plain-text grid, grouped by infosphere variant."""
    if not rows:
        raise ValueError("report needs at least one result row")
    ordered = sorted(rows, key=_row_sort_key)
    table = [list(REPORT_COLUMNS)] + [_report_cells(r) for r in ordered]
    widths = [max(len(line[i]) for line in table) for i in range(len(REPORT_COLUMNS))]
    out = []
    for j, line in enumerate(table):
        out.append("  ".join(cell.ljust(w) for cell, w in zip(line, widths)).rstrip())
        if j == 0:
            out.append("  ".join("-" * w for w in widths))
    return "\n".join(out) + "\n"


def write_report_csv(rows: list[ResultRow], path):
    import csv

    if not rows:
        raise ValueError("report needs at least one result row")
    ordered = sorted(rows, key=_row_sort_key)
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(REPORT_COLUMNS)
        for r in ordered:
            w.writerow(
                [
                    r.infosphere,
                    _params_str(r.params),
                    r.drop,
                    r.accuracy,
                    r.aggregation,
                    r.encoder,
                    r.seed,
                    r.runtime,
                ]
            )
