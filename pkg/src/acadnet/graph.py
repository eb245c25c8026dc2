"""Heterogeneous temporal graph store with year-filtered snapshot views.

Nodes come in three types (author, paper, topic) with dense per-type
indices; edges in three relations: author-writes-paper, paper-deals_with-
topic and paper-cites-paper. Papers carry a publication year, which is the
only timestamp in the corpus; a snapshot at year y keeps every paper of
year <= y, every edge whose paper endpoints all satisfy that cut, and the
authors/topics incident to at least one retained edge.

The build phase is single-writer; the built graph is immutable and safe to
share across threads. Snapshots are cheap read-only views over the base
adjacency plus boolean membership masks.
"""

from __future__ import annotations

from enum import IntEnum
from typing import Iterable, NamedTuple

import numpy as np

from . import binio


class NodeType(IntEnum):
    AUTHOR = 0
    PAPER = 1
    TOPIC = 2


class Relation(IntEnum):
    WRITES = 0
    DEALS_WITH = 1
    CITES = 2


class Direction(IntEnum):
    FORWARD = 0
    REVERSE = 1


# the only legal (src_type, dst_type) pairs
TRIPLES = {
    Relation.WRITES: (NodeType.AUTHOR, NodeType.PAPER),
    Relation.DEALS_WITH: (NodeType.PAPER, NodeType.TOPIC),
    Relation.CITES: (NodeType.PAPER, NodeType.PAPER),
}


class NodeRef(NamedTuple):
    ntype: NodeType
    index: int

    def __repr__(self):
        return f"{NodeType(self.ntype).name.lower()}:{self.index}"


class GraphError(ValueError):
    pass


class BuildClosedError(GraphError):
    """Mutation attempted after the build phase was closed."""


class GraphBuilder:
    """Single-writer accumulator; build() freezes it into a TemporalGraph."""

    def __init__(self):
        self._ids = {t: {} for t in NodeType}
        self._names = {t: [] for t in NodeType}
        self._years = {}
        self._edges = {r: set() for r in Relation}
        self._closed = False

    def _check_open(self):
        if self._closed:
            raise BuildClosedError("build phase closed")

    def add_node(self, ntype: NodeType, external_id: str) -> NodeRef:
        """Register a node; re-adding the same external id is a no-op."""
        self._check_open()
        ntype = NodeType(ntype)
        table = self._ids[ntype]
        idx = table.get(external_id)
        if idx is None:
            idx = len(self._names[ntype])
            table[external_id] = idx
            self._names[ntype].append(external_id)
        return NodeRef(ntype, idx)

    def add_paper(self, external_id: str, year: int) -> NodeRef:
        ref = self.add_node(NodeType.PAPER, external_id)
        known = self._years.get(ref.index)
        if known is not None and known != year:
            raise GraphError(
                f"paper {external_id!r} already registered with year {known}, got {year}"
            )
        if year <= 0:
            raise GraphError(f"paper {external_id!r} has non-positive year {year}")
        self._years[ref.index] = int(year)
        return ref

    def has_node(self, ntype: NodeType, external_id: str) -> bool:
        return external_id in self._ids[NodeType(ntype)]

    def add_edge(self, relation: Relation, src: NodeRef, dst: NodeRef):
        """Insert an edge; duplicates collapse to one (set semantics)."""
        self._check_open()
        relation = Relation(relation)
        src_t, dst_t = TRIPLES[relation]
        if src.ntype != src_t or dst.ntype != dst_t:
            raise GraphError(
                f"relation {relation.name} expects ({src_t.name}, {dst_t.name}), "
                f"got ({NodeType(src.ntype).name}, {NodeType(dst.ntype).name})"
            )
        if src.index >= len(self._names[src_t]) or dst.index >= len(self._names[dst_t]):
            raise GraphError("edge endpoint references an unknown node")
        self._edges[relation].add((src.index, dst.index))

    def build(self) -> "TemporalGraph":
        """Freeze into compressed sorted adjacency; closes the build phase."""
        self._check_open()
        self._closed = True
        n_papers = len(self._names[NodeType.PAPER])
        missing = n_papers - len(self._years)
        if missing:
            raise GraphError(f"{missing} paper(s) registered without a year")
        years = np.zeros(n_papers, dtype=np.int32)
        for idx, year in self._years.items():
            years[idx] = year
        counts = {t: len(self._names[t]) for t in NodeType}
        adjacency = {}
        for rel, pairs in self._edges.items():
            src_t, dst_t = TRIPLES[rel]
            adjacency[rel] = _build_adjacency(pairs, counts[src_t], counts[dst_t])
        return TemporalGraph(counts, dict(self._names), years, adjacency)


class Adjacency(NamedTuple):
    fwd_indptr: np.ndarray   # int64, len n_src + 1
    fwd_indices: np.ndarray  # int32, sorted ascending within each row
    rev_indptr: np.ndarray
    rev_indices: np.ndarray


def _build_adjacency(pairs: Iterable[tuple], n_src: int, n_dst: int) -> Adjacency:
    if pairs:
        arr = np.array(sorted(pairs), dtype=np.int64)
        src, dst = arr[:, 0], arr[:, 1]
    else:
        src = dst = np.zeros(0, dtype=np.int64)
    fwd_indptr = np.zeros(n_src + 1, dtype=np.int64)
    np.add.at(fwd_indptr, src + 1, 1)
    np.cumsum(fwd_indptr, out=fwd_indptr)
    fwd_indices = dst.astype(np.int32)

    order = np.lexsort((src, dst))
    rev_indptr = np.zeros(n_dst + 1, dtype=np.int64)
    np.add.at(rev_indptr, dst + 1, 1)
    np.cumsum(rev_indptr, out=rev_indptr)
    rev_indices = src[order].astype(np.int32)
    return Adjacency(fwd_indptr, fwd_indices, rev_indptr, rev_indices)


GRAPH_MAGIC = b"ANPG"
GRAPH_VERSION = 1


class TemporalGraph:
    """Immutable heterogeneous graph; all mutation happens in GraphBuilder."""

    def __init__(self, counts, names, paper_years, adjacency):
        self._counts = {NodeType(t): int(n) for t, n in counts.items()}
        self._names = {NodeType(t): list(v) for t, v in names.items()}
        self._ids = {
            t: {name: i for i, name in enumerate(v)} for t, v in self._names.items()
        }
        self.paper_years = np.asarray(paper_years, dtype=np.int32)
        self.paper_years.setflags(write=False)
        self._adj = {Relation(r): a for r, a in adjacency.items()}
        for adj in self._adj.values():
            for arr in adj:
                arr.setflags(write=False)

    def num_nodes(self, ntype: NodeType) -> int:
        return self._counts[NodeType(ntype)]

    def external_id(self, ref: NodeRef) -> str:
        return self._names[NodeType(ref.ntype)][ref.index]

    def lookup(self, ntype: NodeType, external_id: str) -> NodeRef | None:
        idx = self._ids[NodeType(ntype)].get(external_id)
        return None if idx is None else NodeRef(NodeType(ntype), idx)

    def edge_count(self, relation: Relation) -> int:
        return int(self._adj[Relation(relation)].fwd_indices.size)

    def total_edges(self) -> int:
        return sum(self.edge_count(r) for r in Relation)

    def year_range(self) -> tuple[int, int]:
        if self.paper_years.size == 0:
            raise GraphError("graph has no papers")
        return int(self.paper_years.min()), int(self.paper_years.max())

    def row(self, relation: Relation, direction: Direction, index: int) -> np.ndarray:
        adj = self._adj[Relation(relation)]
        if direction == Direction.FORWARD:
            return adj.fwd_indices[adj.fwd_indptr[index]:adj.fwd_indptr[index + 1]]
        return adj.rev_indices[adj.rev_indptr[index]:adj.rev_indptr[index + 1]]

    def has_edge(self, relation: Relation, src_idx: int, dst_idx: int) -> bool:
        row = self.row(relation, Direction.FORWARD, src_idx)
        pos = np.searchsorted(row, dst_idx)
        return pos < row.size and row[pos] == dst_idx

    def edge_arrays(self, relation: Relation) -> tuple[np.ndarray, np.ndarray]:
        """All edges of a relation as (src_ids, dst_ids), sorted by (src, dst)."""
        adj = self._adj[Relation(relation)]
        src = np.repeat(
            np.arange(self.num_nodes(TRIPLES[Relation(relation)][0]), dtype=np.int32),
            np.diff(adj.fwd_indptr),
        )
        return src, adj.fwd_indices

    def snapshot(self, year: int) -> "Snapshot":
        return Snapshot(self, int(year))

    # -- serialization ----------------------------------------------------

    def save(self, path):
        with open(path, "wb") as f:
            binio.write_magic(f, GRAPH_MAGIC, GRAPH_VERSION)
            for t in NodeType:
                binio.write_u64(f, self._counts[t])
            binio.write_array(f, self.paper_years, "<i4")
            for rel in Relation:
                adj = self._adj[rel]
                binio.write_array(f, adj.fwd_indptr, "<i8")
                binio.write_array(f, adj.fwd_indices, "<i4")
            for t in NodeType:
                for name in self._names[t]:
                    binio.write_str(f, name)

    @classmethod
    def load(cls, path) -> "TemporalGraph":
        with open(path, "rb") as f:
            binio.read_magic(f, GRAPH_MAGIC, GRAPH_VERSION)
            counts = {t: binio.read_u64(f) for t in NodeType}
            years = binio.read_array(f, "<i4")
            adjacency = {}
            for rel in Relation:
                src_t, dst_t = TRIPLES[rel]
                indptr = binio.read_array(f, "<i8")
                indices = binio.read_array(f, "<i4")
                adjacency[rel] = _restore_adjacency(
                    indptr, indices, counts[src_t], counts[dst_t]
                )
            names = {}
            for t in NodeType:
                names[t] = [binio.read_str(f) for _ in range(counts[t])]
        graph = cls(counts, names, years, adjacency)
        graph.validate()
        return graph

    def validate(self):
        """Check the structural invariants; raises FormatError on violation."""
        if self.paper_years.size != self.num_nodes(NodeType.PAPER):
            raise binio.FormatError("year table size does not match paper count")
        for rel in Relation:
            src_t, dst_t = TRIPLES[rel]
            adj = self._adj[rel]
            if adj.fwd_indptr.size != self.num_nodes(src_t) + 1:
                raise binio.FormatError(f"{rel.name}: bad forward indptr length")
            if adj.fwd_indptr[0] != 0 or np.any(np.diff(adj.fwd_indptr) < 0):
                raise binio.FormatError(f"{rel.name}: forward indptr not monotone")
            if adj.fwd_indices.size and (
                adj.fwd_indices.min() < 0
                or adj.fwd_indices.max() >= self.num_nodes(dst_t)
            ):
                raise binio.FormatError(f"{rel.name}: neighbor index out of range")
            for arr, ptr in ((adj.fwd_indices, adj.fwd_indptr),
                             (adj.rev_indices, adj.rev_indptr)):
                if arr.size:
                    # strictly ascending within every row: the only allowed
                    # non-increasing steps are row boundaries
                    non_inc = np.nonzero(np.diff(arr.astype(np.int64)) <= 0)[0] + 1
                    if not np.all(np.isin(non_inc, ptr)):
                        raise binio.FormatError(f"{rel.name}: row not sorted/unique")
            if adj.fwd_indices.size != adj.rev_indices.size:
                raise binio.FormatError(f"{rel.name}: forward/reverse size mismatch")
        for t in NodeType:
            if len(set(self._names[t])) != len(self._names[t]):
                raise binio.FormatError(f"duplicate external ids for {t.name}")


def _restore_adjacency(fwd_indptr, fwd_indices, n_src, n_dst) -> Adjacency:
    fwd_indptr = fwd_indptr.astype(np.int64)
    fwd_indices = fwd_indices.astype(np.int32)
    src = np.repeat(np.arange(n_src, dtype=np.int64), np.diff(fwd_indptr))
    dst = fwd_indices.astype(np.int64)
    order = np.lexsort((src, dst))
    rev_indptr = np.zeros(n_dst + 1, dtype=np.int64)
    np.add.at(rev_indptr, dst + 1, 1)
    np.cumsum(rev_indptr, out=rev_indptr)
    rev_indices = src[order].astype(np.int32)
    return Adjacency(fwd_indptr, fwd_indices, rev_indptr, rev_indices)


class Snapshot:
    """Read-only view of everything observable up to a given year."""

    def __init__(self, base: TemporalGraph, year: int):
        self.base = base
        self.year = year
        self.paper_mask = base.paper_years <= year
        self.paper_mask.setflags(write=False)
        self._author_mask = None
        self._topic_mask = None
        self._cites_indeg = None
        self._undirected = {}

    @property
    def author_mask(self) -> np.ndarray:
        if self._author_mask is None:
            src, dst = self.base.edge_arrays(Relation.WRITES)
            kept = self.paper_mask[dst]
            deg = np.bincount(
                src[kept], minlength=self.base.num_nodes(NodeType.AUTHOR)
            )
            self._author_mask = deg > 0
            self._author_mask.setflags(write=False)
        return self._author_mask

    @property
    def topic_mask(self) -> np.ndarray:
        if self._topic_mask is None:
            src, dst = self.base.edge_arrays(Relation.DEALS_WITH)
            kept = self.paper_mask[src]
            deg = np.bincount(
                dst[kept], minlength=self.base.num_nodes(NodeType.TOPIC)
            )
            self._topic_mask = deg > 0
            self._topic_mask.setflags(write=False)
        return self._topic_mask

    def mask(self, ntype: NodeType) -> np.ndarray:
        ntype = NodeType(ntype)
        if ntype == NodeType.PAPER:
            return self.paper_mask
        if ntype == NodeType.AUTHOR:
            return self.author_mask
        return self.topic_mask

    def contains(self, ref: NodeRef) -> bool:
        m = self.mask(ref.ntype)
        return 0 <= ref.index < m.size and bool(m[ref.index])

    def members(self, ntype: NodeType) -> np.ndarray:
        return np.nonzero(self.mask(ntype))[0]

    def num_members(self, ntype: NodeType) -> int:
        return int(self.mask(ntype).sum())

    def edge_kept(self, relation: Relation, src_idx: int, dst_idx: int) -> bool:
        relation = Relation(relation)
        if not self.base.has_edge(relation, src_idx, dst_idx):
            return False
        if relation == Relation.WRITES:
            return bool(self.paper_mask[dst_idx])
        if relation == Relation.DEALS_WITH:
            return bool(self.paper_mask[src_idx])
        return bool(self.paper_mask[src_idx] and self.paper_mask[dst_idx])

    def edge_counts(self) -> dict:
        """Retained edges per relation."""
        out = {}
        for rel in Relation:
            src, dst = self.base.edge_arrays(rel)
            if rel == Relation.WRITES:
                kept = self.paper_mask[dst]
            elif rel == Relation.DEALS_WITH:
                kept = self.paper_mask[src]
            else:
                kept = self.paper_mask[src] & self.paper_mask[dst]
            out[rel] = int(kept.sum())
        return out

    def neighbor_indices(
        self, node: NodeRef, relation: Relation, direction: Direction
    ) -> np.ndarray:
        """Sorted, duplicate-free neighbor indices within the snapshot."""
        relation = Relation(relation)
        direction = Direction(direction)
        src_t, dst_t = TRIPLES[relation]
        own_t = src_t if direction == Direction.FORWARD else dst_t
        if NodeType(node.ntype) != own_t:
            raise GraphError(
                f"{NodeType(node.ntype).name} node cannot be the "
                f"{'source' if direction == Direction.FORWARD else 'target'} "
                f"of {relation.name}"
            )
        if not self.contains(node):
            raise GraphError(f"node {node!r} not in snapshot({self.year})")
        row = self.base.row(relation, direction, node.index)
        other_t = dst_t if direction == Direction.FORWARD else src_t
        if other_t == NodeType.PAPER:
            row = row[self.paper_mask[row]]
        # rows are stored sorted and duplicate-free; masking preserves both
        return row

    def neighbors(
        self, node: NodeRef, relation: Relation, direction: Direction
    ) -> list[NodeRef]:
        src_t, dst_t = TRIPLES[Relation(relation)]
        other_t = dst_t if Direction(direction) == Direction.FORWARD else src_t
        return [NodeRef(other_t, int(i))
                for i in self.neighbor_indices(node, relation, direction)]

    def undirected_neighbors(self, node: NodeRef) -> tuple:
        """Per-type sorted neighbor index arrays, ignoring edge direction.

        Returns (author_ids, paper_ids, topic_ids); iterating them in type
        order yields neighbors in ascending (type, index) order. Cached per
        node since traversals revisit the same nodes across authors.
        """
        key = (node.ntype, node.index)
        hit = self._undirected.get(key)
        if hit is not None:
            return hit
        empty = np.zeros(0, dtype=np.int32)
        t = NodeType(node.ntype)
        if t == NodeType.AUTHOR:
            papers = self.neighbor_indices(node, Relation.WRITES, Direction.FORWARD)
            out = (empty, papers, empty)
        elif t == NodeType.TOPIC:
            papers = self.neighbor_indices(node, Relation.DEALS_WITH, Direction.REVERSE)
            out = (empty, papers, empty)
        else:
            authors = self.neighbor_indices(node, Relation.WRITES, Direction.REVERSE)
            cited = self.neighbor_indices(node, Relation.CITES, Direction.FORWARD)
            citing = self.neighbor_indices(node, Relation.CITES, Direction.REVERSE)
            papers = np.union1d(cited, citing).astype(np.int32)
            topics = self.neighbor_indices(node, Relation.DEALS_WITH, Direction.FORWARD)
            out = (authors, papers, topics)
        self._undirected[key] = out
        return out

    def iter_undirected(self, node: NodeRef):
        for t, arr in zip(NodeType, self.undirected_neighbors(node)):
            for i in arr:
                yield NodeRef(t, int(i))

    def connecting_edge(self, u: NodeRef, v: NodeRef) -> tuple:
        """Native directed form (relation, src_idx, dst_idx) of the edge
        between two adjacent nodes; for mutual citations the u->v direction
        wins for determinism."""
        tu, tv = NodeType(u.ntype), NodeType(v.ntype)
        for rel, (st, dt) in TRIPLES.items():
            if (tu, tv) == (st, dt) and self.edge_kept(rel, u.index, v.index):
                return (rel, u.index, v.index)
            if (tv, tu) == (st, dt) and self.edge_kept(rel, v.index, u.index):
                return (rel, v.index, u.index)
        raise GraphError(f"no snapshot edge between {u!r} and {v!r}")

    def cites_indegree(self) -> np.ndarray:
        """Citation in-degree per paper within the snapshot (0 for non-members)."""
        if self._cites_indeg is None:
            src, dst = self.base.edge_arrays(Relation.CITES)
            kept = self.paper_mask[src] & self.paper_mask[dst]
            self._cites_indeg = np.bincount(
                dst[kept], minlength=self.base.num_nodes(NodeType.PAPER)
            )
            self._cites_indeg.setflags(write=False)
        return self._cites_indeg
