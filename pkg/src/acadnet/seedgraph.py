"""Per-author seedgraphs: shortest connections from next-year history
elements back into the current-year snapshot.

For an author active in year y, the seed elements are the new co-authors,
cited papers, and topics of the papers the author writes in year y+1,
restricted to nodes that already exist in G_y. Each element is connected to
the author by a shortest path found with a bidirectional BFS that treats
every edge as undirected; stored edges keep their native direction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import NamedTuple

from . import binio
from .graph import (
    TRIPLES,
    Direction,
    GraphError,
    NodeRef,
    NodeType,
    Relation,
    Snapshot,
    TemporalGraph,
)

SEEDS_MAGIC = b"ANPS"
SEEDS_VERSION = 1

DEFAULT_HOP_LIMIT = 10


@dataclass(frozen=True)
class FutureSeeds:
    """The author's year-(y+1) history elements that already exist in G_y."""

    author: NodeRef
    year: int
    elements: tuple[NodeRef, ...]


class Path(NamedTuple):
    seed: NodeRef
    nodes: tuple[NodeRef, ...]          # author first, seed last
    edges: tuple[tuple, ...]            # (Relation, src_idx, dst_idx), native direction


@dataclass
class Seedgraph:
    author: NodeRef
    year: int
    paths: dict = field(default_factory=dict)   # seed -> Path
    unreachable: tuple[NodeRef, ...] = ()
    hop_limit_hits: int = 0

    @property
    def nodes(self) -> frozenset:
        out = {self.author}
        for p in self.paths.values():
            out.update(p.nodes)
        return frozenset(out)

    @property
    def edges(self) -> frozenset:
        out = set()
        for p in self.paths.values():
            out.update(p.edges)
        return frozenset(out)

    def path_list(self) -> list[Path]:
        """Paths in ascending seed order; the path index used elsewhere."""
        return [self.paths[s] for s in sorted(self.paths)]


def future_history(
    author: NodeRef, snapshot_y: Snapshot, snapshot_y1: Snapshot
) -> FutureSeeds:
    """Seed elements for one author: new co-authors, cited papers, and
    topics of the author's year-(y+1) papers, filtered to snapshot(y)."""
    if NodeType(author.ntype) != NodeType.AUTHOR:
        raise GraphError(f"{author!r} is not an author node")
    base = snapshot_y.base
    if snapshot_y1.base is not base:
        raise GraphError("snapshots come from different base graphs")
    if snapshot_y1.year != snapshot_y.year + 1:
        raise GraphError("second snapshot must be one year after the first")
    if author.index >= base.num_nodes(NodeType.AUTHOR):
        raise GraphError(f"{author!r} absent from base graph")

    elements: set[NodeRef] = set()
    if snapshot_y1.contains(author):
        papers = snapshot_y1.neighbor_indices(
            author, Relation.WRITES, Direction.FORWARD
        )
        new_papers = papers[base.paper_years[papers] > snapshot_y.year]
        amask = snapshot_y.author_mask
        pmask = snapshot_y.paper_mask
        tmask = snapshot_y.topic_mask
        for p in new_papers:
            paper = NodeRef(NodeType.PAPER, int(p))
            coauth = snapshot_y1.neighbor_indices(
                paper, Relation.WRITES, Direction.REVERSE
            )
            for a in coauth[amask[coauth]]:
                if int(a) != author.index:
                    elements.add(NodeRef(NodeType.AUTHOR, int(a)))
            cited = base.row(Relation.CITES, Direction.FORWARD, int(p))
            for c in cited[pmask[cited]]:
                elements.add(NodeRef(NodeType.PAPER, int(c)))
            topics = base.row(Relation.DEALS_WITH, Direction.FORWARD, int(p))
            for t in topics[tmask[topics]]:
                elements.add(NodeRef(NodeType.TOPIC, int(t)))
    return FutureSeeds(author, snapshot_y.year, tuple(sorted(elements)))


class Frontier:
    """One side of the bidirectional search: every node reached so far,
    with its predecessor toward the origin. Ties between predecessors in
    the same ring go to the lowest (type, index) node."""

    __slots__ = ("origin", "reached", "ring", "alive")

    def __init__(self, start: NodeRef, origin: NodeRef):
        self.origin = origin
        self.reached: dict[NodeRef, NodeRef | None] = {start: None}
        self.ring: list[NodeRef] = [start]
        self.alive = True

    def expand(self, snap: Snapshot) -> bool:
        new: dict[NodeRef, NodeRef] = {}
        for node in self.ring:
            for nb in snap.iter_undirected(node):
                if nb not in self.reached and nb not in new:
                    new[nb] = node
        self.reached.update(new)
        self.ring = sorted(new)
        self.alive = bool(new)
        return self.alive

    def trace(self, node: NodeRef) -> list[NodeRef]:
        """Chain from node back to the origin, node first."""
        out = [node]
        while (pred := self.reached[out[-1]]) is not None:
            out.append(pred)
        return out


def compare_frontiers(author_frontier: Frontier, seed_frontier: Frontier):
    """Nodes reached from both sides, ascending (type, index)."""
    a, b = author_frontier.reached, seed_frontier.reached
    if len(a) > len(b):
        a, b = b, a
    return sorted(n for n in a if n in b)


def _as_path(seed: NodeRef, nodes: list[NodeRef], snap: Snapshot) -> Path:
    edges = tuple(
        snap.connecting_edge(u, v) for u, v in zip(nodes, nodes[1:])
    )
    return Path(seed, tuple(nodes), edges)


def build_seedgraph(
    author: NodeRef,
    snapshot_y: Snapshot,
    seeds: FutureSeeds,
    hop_limit: int = DEFAULT_HOP_LIMIT,
) -> Seedgraph:
    """Connect each seed element to the author by one shortest path.

    Per round: expand the author frontier one hop, compare, expand every
    live seed frontier one hop, compare. The first overlap for a seed
    yields an exact shortest path (both rings grow in lockstep, so the
    intersection cannot appear before the true distance is reachable).
    Seeds beyond hop_limit hops, or in another component, are recorded
    as unreachable.
    """
    sg = Seedgraph(author, snapshot_y.year)
    unreachable: list[NodeRef] = []
    pending = []
    for s in seeds.elements:
        if s == author:
            continue
        if snapshot_y.contains(s):
            pending.append(s)
        else:
            unreachable.append(s)
    if not snapshot_y.contains(author):
        sg.unreachable = tuple(sorted(unreachable + pending))
        return sg

    a_front = Frontier(author, author)
    live = {s: Frontier(s, s) for s in sorted(pending)}
    a_depth = s_depth = 0

    def retire_overlaps():
        for s in sorted(live):
            overlap = compare_frontiers(a_front, live[s])
            if overlap:
                meet = overlap[0]
                nodes = a_front.trace(meet)[::-1] + live[s].trace(meet)[1:]
                sg.paths[s] = _as_path(s, nodes, snapshot_y)
                del live[s]

    while live:
        if a_front.expand(snapshot_y):
            a_depth += 1
        retire_overlaps()
        if not live:
            break
        if not a_front.alive:
            # author's component fully explored: the rest live elsewhere
            unreachable.extend(sorted(live))
            live.clear()
            break
        for s in sorted(live):
            live[s].expand(snapshot_y)
        s_depth += 1
        retire_overlaps()
        for s in sorted(live):
            if not live[s].alive:
                unreachable.append(s)
                del live[s]
        if live and a_depth + s_depth >= hop_limit:
            sg.hop_limit_hits += len(live)
            unreachable.extend(sorted(live))
            live.clear()

    sg.unreachable = tuple(sorted(unreachable))
    return sg


def build_all_seedgraphs(
    graph: TemporalGraph, year: int, hop_limit: int = DEFAULT_HOP_LIMIT
) -> list[Seedgraph]:
    """Seedgraphs for every snapshot(y) author with a non-empty seed set."""
    snap_y = graph.snapshot(year)
    snap_y1 = graph.snapshot(year + 1)
    out = []
    for idx in snap_y.members(NodeType.AUTHOR):
        author = NodeRef(NodeType.AUTHOR, int(idx))
        seeds = future_history(author, snap_y, snap_y1)
        if seeds.elements:
            out.append(build_seedgraph(author, snap_y, seeds, hop_limit))
    return out


# -- serialization ----------------------------------------------------------


def _write_ref(f, ref: NodeRef):
    binio.write_u8(f, int(ref.ntype))
    binio.write_u64(f, ref.index)


def _read_ref(f) -> NodeRef:
    t = NodeType(binio.read_u8(f))
    return NodeRef(t, binio.read_u64(f))


def save_seedgraphs(path, seedgraphs: list[Seedgraph]):
    with open(path, "wb") as f:
        binio.write_magic(f, SEEDS_MAGIC, SEEDS_VERSION)
        binio.write_u64(f, len(seedgraphs))
        for sg in seedgraphs:
            binio.write_u64(f, sg.author.index)
            binio.write_u32(f, sg.year)
            paths = sg.path_list()
            binio.write_u64(f, len(paths))
            for p in paths:
                _write_ref(f, p.seed)
                binio.write_u64(f, len(p.nodes))
                for n in p.nodes:
                    _write_ref(f, n)
                binio.write_u64(f, len(p.edges))
                for rel, src, dst in p.edges:
                    binio.write_u8(f, int(rel))
                    binio.write_u64(f, src)
                    binio.write_u64(f, dst)
            binio.write_u64(f, len(sg.unreachable))
            for s in sg.unreachable:
                _write_ref(f, s)
            binio.write_u64(f, sg.hop_limit_hits)


def load_seedgraphs(path) -> list[Seedgraph]:
    out = []
    with open(path, "rb") as f:
        binio.read_magic(f, SEEDS_MAGIC, SEEDS_VERSION)
        for _ in range(binio.read_u64(f)):
            author = NodeRef(NodeType.AUTHOR, binio.read_u64(f))
            year = binio.read_u32(f)
            sg = Seedgraph(author, year)
            for _ in range(binio.read_u64(f)):
                seed = _read_ref(f)
                nodes = tuple(_read_ref(f) for _ in range(binio.read_u64(f)))
                edges = tuple(
                    (
                        Relation(binio.read_u8(f)),
                        binio.read_u64(f),
                        binio.read_u64(f),
                    )
                    for _ in range(binio.read_u64(f))
                )
                sg.paths[seed] = Path(seed, nodes, edges)
            sg.unreachable = tuple(
                _read_ref(f) for _ in range(binio.read_u64(f))
            )
            sg.hop_limit_hits = binio.read_u64(f)
            out.append(sg)
    return out


def write_seedgraphs_ndjson(path, seedgraphs: list[Seedgraph], graph: TemporalGraph):
    """Human-readable form, one author per line, external ids throughout."""

    def name(ref: NodeRef):
        return [NodeType(ref.ntype).name.lower(), graph.external_id(ref)]

    with open(path, "w", encoding="utf-8") as f:
        for sg in seedgraphs:
            rec = {
                "author": graph.external_id(sg.author),
                "year": sg.year,
                "paths": [
                    {
                        "seed": name(p.seed),
                        "nodes": [name(n) for n in p.nodes],
                        "edges": [
                            [
                                Relation(rel).name.lower(),
                                graph.external_id(NodeRef(TRIPLES[rel][0], src)),
                                graph.external_id(NodeRef(TRIPLES[rel][1], dst)),
                            ]
                            for rel, src, dst in p.edges
                        ],
                    }
                    for p in sg.path_list()
                ],
                "unreachable": [name(s) for s in sg.unreachable],
                "hop_limit_hits": sg.hop_limit_hits,
            }
            f.write(json.dumps(rec, separators=(",", ":")) + "\n")
