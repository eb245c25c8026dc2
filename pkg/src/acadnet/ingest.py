"""Corpus ingestion: streaming reader for the citation-corpus JSON layout
plus a seeded synthetic-corpus generator for desk-scale experiments.

The reader handles both a single top-level JSON array of paper objects and
newline-delimited JSON, auto-detected from the first byte. Memory stays
bounded by the largest single record regardless of corpus size; malformed
records are skipped and counted, never fatal.
"""

from __future__ import annotations

import io
import json
import logging
from dataclasses import dataclass, field, asdict

import numpy as np

from .graph import GraphBuilder, NodeType, Relation, TemporalGraph
from .rng import keyed_rng

log = logging.getLogger(__name__)

_CHUNK = 1 << 20


class IngestError(ValueError):
    pass


@dataclass
class PaperRecord:
    paper_id: str
    year: int
    author_ids: list[str] = field(default_factory=list)
    topic_names: list[str] = field(default_factory=list)
    reference_ids: list[str] = field(default_factory=list)


@dataclass
class IngestStats:
    records_parsed: int = 0
    records_skipped: int = 0
    records_filtered: int = 0
    duplicate_papers: int = 0
    authors: int = 0
    papers: int = 0
    topics: int = 0
    writes_edges: int = 0
    deals_with_edges: int = 0
    cites_edges: int = 0
    dangling_references: int = 0

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


class RecordStream:
    """Iterator of PaperRecord with running skip counts."""

    def __init__(self, inner):
        self._inner = inner
        self.yielded = 0
        self.skipped = 0

    def __iter__(self):
        for rec in self._inner(self):
            self.yielded += 1
            yield rec


def _coerce_record(obj) -> PaperRecord | None:
    """Map a raw corpus object onto a PaperRecord; None when unusable."""
    if not isinstance(obj, dict):
        return None
    paper_id = obj.get("id")
    year = obj.get("year")
    if not paper_id or not isinstance(year, int) or year <= 0:
        return None
    authors = []
    for a in obj.get("authors") or []:
        if isinstance(a, dict):
            aid = a.get("id") or a.get("name")
        else:
            aid = a
        if aid:
            authors.append(str(aid))
    topics = []
    for t in obj.get("fos") or []:
        name = t.get("name") if isinstance(t, dict) else t
        if name:
            name = str(name).strip()
            if name:
                topics.append(name)
    refs = [str(r) for r in obj.get("references") or [] if r]
    return PaperRecord(str(paper_id), year, authors, topics, refs)


def parse_v14_stream(stream, fmt: str = "auto") -> RecordStream:
    """Stream PaperRecords out of a corpus file object (bytes or text).

    fmt: "auto" (default), "array" or "ndjson".
    """
    if isinstance(stream, (bytes, str)):
        raise TypeError("parse_v14_stream expects a file object")
    if hasattr(stream, "mode") and "b" in getattr(stream, "mode", ""):
        stream = io.TextIOWrapper(stream, encoding="utf-8")
    elif isinstance(stream, (io.RawIOBase, io.BufferedIOBase)):
        stream = io.TextIOWrapper(stream, encoding="utf-8")

    if fmt == "auto":
        head = stream.read(1)
        while head and head.isspace():
            head = stream.read(1)
        if head == "":
            fmt = "ndjson"  # empty input: zero records either way
            stream = io.StringIO("")
        elif head == "[":
            fmt = "array"
            stream = _Prepended("[", stream)
        elif head == "{":
            fmt = "ndjson"
            stream = _Prepended("{", stream)
        else:
            raise IngestError(
                f"cannot auto-detect corpus layout from leading {head!r}"
            )

    if fmt == "array":
        return RecordStream(lambda rs: _iter_array(stream, rs))
    if fmt == "ndjson":
        return RecordStream(lambda rs: _iter_ndjson(stream, rs))
    raise IngestError(f"unknown format {fmt!r}")


class _Prepended:
    """Text reader with a few already-consumed characters pushed back."""

    def __init__(self, head: str, stream):
        self._head = head
        self._stream = stream

    def read(self, n=-1):
        if self._head:
            if n is None or n < 0:
                out, self._head = self._head + self._stream.read(), ""
                return out
            out, self._head = self._head[:n], self._head[n:]
            if len(out) < n:
                out += self._stream.read(n - len(out))
            return out
        return self._stream.read(n)

    def readline(self):
        if self._head:
            line = self._head
            self._head = ""
            if "\n" not in line:
                line += self._stream.readline()
            return line
        return self._stream.readline()


def _iter_ndjson(stream, rs: RecordStream):
    while True:
        line = stream.readline()
        if line == "":
            return
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except ValueError:
            rs.skipped += 1
            continue
        rec = _coerce_record(obj)
        if rec is None:
            rs.skipped += 1
            continue
        yield rec


def _iter_array(stream, rs: RecordStream):
    """Incrementally decode objects out of one top-level JSON array.

    Keeps only the undecoded tail in memory; raw_decode does the heavy
    lifting at C speed. On a syntax error with complete data, resyncs at
    the next '{' and counts the casualty.
    """
    decoder = json.JSONDecoder()
    buf = stream.read(_CHUNK)
    pos = 0
    # consume the opening bracket
    while True:
        while pos < len(buf) and buf[pos].isspace():
            pos += 1
        if pos < len(buf):
            break
        more = stream.read(_CHUNK)
        if not more:
            raise IngestError("empty input where a JSON array was expected")
        buf, pos = buf[pos:] + more, 0
    if buf[pos] != "[":
        raise IngestError("top-level structure is not a JSON array")
    pos += 1

    eof = False
    while True:
        while True:
            while pos < len(buf) and (buf[pos].isspace() or buf[pos] == ","):
                pos += 1
            if pos < len(buf) or eof:
                break
            more = stream.read(_CHUNK)
            if more:
                buf, pos = buf[pos:] + more, 0
            else:
                eof = True
        if pos >= len(buf):
            return  # truncated input: stop at what we could read
        if buf[pos] == "]":
            return
        try:
            obj, end = decoder.raw_decode(buf, pos)
        except ValueError:
            if not eof:
                more = stream.read(_CHUNK)
                if more:
                    buf, pos = buf[pos:] + more, 0
                    continue
                eof = True
            # complete data, still undecodable: skip to the next object
            rs.skipped += 1
            nxt = buf.find("{", pos + 1)
            if nxt == -1:
                return
            pos = nxt
            continue
        pos = end
        rec = _coerce_record(obj)
        if rec is None:
            rs.skipped += 1
            continue
        yield rec


def build_graph(records) -> tuple[TemporalGraph, IngestStats]:
    """Assemble the heterogeneous graph from parsed records.

    References to papers outside the corpus are dropped and counted; a
    second record for an already-seen paper id is skipped as a duplicate.
    """
    stats = IngestStats()
    builder = GraphBuilder()
    pending_refs = []
    for rec in records:
        if builder.has_node(NodeType.PAPER, rec.paper_id):
            stats.duplicate_papers += 1
            continue
        stats.records_parsed += 1
        paper = builder.add_paper(rec.paper_id, rec.year)
        for aid in rec.author_ids:
            author = builder.add_node(NodeType.AUTHOR, aid)
            builder.add_edge(Relation.WRITES, author, paper)
        for name in rec.topic_names:
            topic = builder.add_node(NodeType.TOPIC, name)
            builder.add_edge(Relation.DEALS_WITH, paper, topic)
        if rec.reference_ids:
            pending_refs.append((paper, rec.reference_ids))

    for paper, refs in pending_refs:
        for rid in refs:
            if builder.has_node(NodeType.PAPER, rid):
                builder.add_edge(
                    Relation.CITES, paper, builder.add_node(NodeType.PAPER, rid)
                )
            else:
                stats.dangling_references += 1

    graph = builder.build()
    stats.authors = graph.num_nodes(NodeType.AUTHOR)
    stats.papers = graph.num_nodes(NodeType.PAPER)
    stats.topics = graph.num_nodes(NodeType.TOPIC)
    stats.writes_edges = graph.edge_count(Relation.WRITES)
    stats.deals_with_edges = graph.edge_count(Relation.DEALS_WITH)
    stats.cites_edges = graph.edge_count(Relation.CITES)
    return graph, stats


def ingest_corpus(
    path, fmt: str = "auto", min_year: int | None = None, max_year: int | None = None
) -> tuple[TemporalGraph, IngestStats]:
    """Parse a corpus file and build the graph, with optional year cuts."""
    filtered = 0

    def windowed(rs):
        nonlocal filtered
        for rec in rs:
            if min_year is not None and rec.year < min_year:
                filtered += 1
            elif max_year is not None and rec.year > max_year:
                filtered += 1
            else:
                yield rec

    with open(path, "rb") as f:
        rs = parse_v14_stream(f, fmt=fmt)
        graph, stats = build_graph(windowed(rs))
        stats.records_skipped = rs.skipped
        stats.records_filtered = filtered
    return graph, stats


# -- synthetic corpus ------------------------------------------------------


@dataclass
class SynthConfig:
    """Knobs for the planted-collaboration generator.

    rho is the recommender-influence strength: the probability that a new
    co-author is drawn from the popularity-weighted exposure pool instead
    of the lead author's own history (prior co-authors and same-topic
    authors). rho=0 keeps every collaboration explainable from history;
    rho=1 makes them all exposure-driven.
    """

    authors: int = 100
    topics: int = 10
    years: int = 5
    papers_per_year: int = 50
    authors_per_paper: int = 3
    topics_per_paper: int = 2
    refs_per_paper: int = 3
    topic_concentration: float = 0.8
    rho: float = 0.5
    start_year: int = 2000

    def validate(self):
        if self.authors <= 0:
            raise IngestError("degenerate config: zero authors")
        if self.topics <= 0 or self.years <= 0 or self.papers_per_year <= 0:
            raise IngestError("degenerate config: empty corpus")
        if not 0.0 <= self.rho <= 1.0:
            raise IngestError("rho must lie in [0, 1]")
        if self.authors_per_paper > self.authors:
            raise IngestError("authors_per_paper exceeds author count")
        if self.topics_per_paper > self.topics:
            raise IngestError("topics_per_paper exceeds topic count")


def _author_id(i: int) -> str:
    return f"a{i:05d}"


def _topic_name(i: int) -> str:
    return f"topic{i:03d}"


def synth_records(config: SynthConfig, seed: int) -> list[PaperRecord]:
    """Generate the corpus as records (lead author listed first)."""
    config.validate()
    rng = keyed_rng(seed, "synth")
    n_a, n_t = config.authors, config.topics
    primary_topic = rng.integers(0, n_t, size=n_a)
    # exposure pool: a global popularity ranking, Zipf-flavored
    pop = 1.0 / (1.0 + np.arange(n_a, dtype=np.float64))
    rng.shuffle(pop)
    pop_p = pop / pop.sum()

    coauthors = [set() for _ in range(n_a)]   # prior co-authors per author
    author_topics = [set() for _ in range(n_a)]  # topics of prior papers
    topic_authors = [set() for _ in range(n_t)]  # authors with prior work per topic
    total_papers = config.years * config.papers_per_year
    cite_count = np.zeros(total_papers, dtype=np.int64)

    records = []
    paper_no = 0
    for yi in range(config.years):
        year = config.start_year + yi
        year_new_coauthors = []
        year_new_topics = []
        prior_papers = paper_no
        for _ in range(config.papers_per_year):
            lead = int(rng.integers(0, n_a))
            members = [lead]
            chosen = {lead}
            for _ in range(config.authors_per_paper - 1):
                cand = None
                if rng.random() < config.rho:
                    # popularity-weighted exposure pool
                    for _ in range(64):
                        c = int(rng.choice(n_a, p=pop_p))
                        if c not in chosen:
                            cand = c
                            break
                if cand is None:
                    pool = set(coauthors[lead])
                    for t in author_topics[lead]:
                        pool |= topic_authors[t]
                    pool -= chosen
                    if pool:
                        arr = np.fromiter(pool, dtype=np.int64)
                        arr.sort()
                        cand = int(arr[rng.integers(0, arr.size)])
                    else:
                        # bootstrap: no history yet (first year / new author)
                        while True:
                            c = int(rng.integers(0, n_a))
                            if c not in chosen:
                                cand = c
                                break
                members.append(cand)
                chosen.add(cand)

            # first topic concentrated on the lead's primary, rest uniform
            if rng.random() < config.topic_concentration:
                topics = [int(primary_topic[lead])]
            else:
                topics = [int(rng.integers(0, n_t))]
            while len(topics) < config.topics_per_paper:
                t = int(rng.integers(0, n_t))
                if t not in topics:
                    topics.append(t)

            n_refs = min(config.refs_per_paper, prior_papers)
            if n_refs > 0:
                weights = 1.0 + cite_count[:prior_papers].astype(np.float64)
                weights /= weights.sum()
                refs = rng.choice(prior_papers, size=n_refs, replace=False, p=weights)
                refs = np.sort(refs)
                cite_count[refs] += 1
            else:
                refs = np.zeros(0, dtype=np.int64)

            records.append(
                PaperRecord(
                    paper_id=f"p{paper_no:06d}",
                    year=year,
                    author_ids=[_author_id(m) for m in members],
                    topic_names=[_topic_name(t) for t in topics],
                    reference_ids=[f"p{int(r):06d}" for r in refs],
                )
            )
            paper_no += 1
            year_new_coauthors.append(members)
            year_new_topics.append((members, topics))

        # history becomes visible only after the year closes, so draws
        # within a year never depend on that year's own papers
        for members in year_new_coauthors:
            for a in members:
                for b in members:
                    if a != b:
                        coauthors[a].add(b)
        for members, topics in year_new_topics:
            for a in members:
                for t in topics:
                    author_topics[a].add(t)
                    topic_authors[t].add(a)
    return records


def synth_generate(config: SynthConfig, seed: int) -> TemporalGraph:
    """Deterministic synthetic corpus with planted exposure signal.

    All configured authors and topics are registered as nodes up front, so
    node counts follow the config in closed form even when some stay idle.
    """
    records = synth_records(config, seed)
    builder = GraphBuilder()
    for i in range(config.authors):
        builder.add_node(NodeType.AUTHOR, _author_id(i))
    for i in range(config.topics):
        builder.add_node(NodeType.TOPIC, _topic_name(i))
    for rec in records:
        paper = builder.add_paper(rec.paper_id, rec.year)
        for aid in rec.author_ids:
            builder.add_edge(Relation.WRITES, builder.add_node(NodeType.AUTHOR, aid), paper)
        for name in rec.topic_names:
            builder.add_edge(
                Relation.DEALS_WITH, paper, builder.add_node(NodeType.TOPIC, name)
            )
        for rid in rec.reference_ids:
            builder.add_edge(
                Relation.CITES, paper, builder.add_node(NodeType.PAPER, rid)
            )
    return builder.build()
