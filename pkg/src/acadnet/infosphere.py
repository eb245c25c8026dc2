"""Infosphere variants and their materialization as exposure edges.

An infosphere models what a recommender would surface to an author beyond
their own history. Variants: the author-future infosphere (seedgraph plus
expansion, real graph edges), popularity lists (most-cited papers, globally
or per-topic), and random attachment. Materialization turns any of them
into typed exposure rows living in dedicated relation channels, disjoint
from the history channels, so the encoder can weight and ablate them
independently.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import IntEnum
from typing import NamedTuple

import numpy as np

from . import binio
from .expansion import ColoredInfosphere
from .graph import Direction, NodeRef, NodeType, Relation, Snapshot, TemporalGraph

EDGESET_MAGIC = b"ANPE"
EDGESET_VERSION = 1


class ExposureChannel(IntEnum):
    """Exposure relations; the first three mirror history relations, the
    link channels attach an author directly to a surfaced node."""

    EXP_WRITES = 0
    EXP_DEALS_WITH = 1
    EXP_CITES = 2
    EXP_LINK_AUTHOR = 3
    EXP_LINK_PAPER = 4
    EXP_LINK_TOPIC = 5


CHANNEL_TYPES: dict[ExposureChannel, tuple[NodeType, NodeType]] = {
    ExposureChannel.EXP_WRITES: (NodeType.AUTHOR, NodeType.PAPER),
    ExposureChannel.EXP_DEALS_WITH: (NodeType.PAPER, NodeType.TOPIC),
    ExposureChannel.EXP_CITES: (NodeType.PAPER, NodeType.PAPER),
    ExposureChannel.EXP_LINK_AUTHOR: (NodeType.AUTHOR, NodeType.AUTHOR),
    ExposureChannel.EXP_LINK_PAPER: (NodeType.AUTHOR, NodeType.PAPER),
    ExposureChannel.EXP_LINK_TOPIC: (NodeType.AUTHOR, NodeType.TOPIC),
}

_REL_CHANNEL = {
    Relation.WRITES: ExposureChannel.EXP_WRITES,
    Relation.DEALS_WITH: ExposureChannel.EXP_DEALS_WITH,
    Relation.CITES: ExposureChannel.EXP_CITES,
}

_LINK_CHANNEL = {
    NodeType.AUTHOR: ExposureChannel.EXP_LINK_AUTHOR,
    NodeType.PAPER: ExposureChannel.EXP_LINK_PAPER,
    NodeType.TOPIC: ExposureChannel.EXP_LINK_TOPIC,
}


class InfosphereProvenance(IntEnum):
    AUTHOR_FUTURE = 0
    TOP_PAPER = 1
    TOP_PAPER_PER_TOPIC = 2
    RANDOM = 3


class ExposureRow(NamedTuple):
    author: int                      # owning author's dense index
    channel: ExposureChannel
    src: int                         # dense indices, types fixed by channel
    dst: int
    provenance: InfosphereProvenance


@dataclass
class InfosphereEdgeSet:
    year: int
    rows: list = field(default_factory=list)

    def __len__(self):
        return len(self.rows)

    def authors(self) -> list[int]:
        return sorted({r.author for r in self.rows})

    def edges_by_channel(self) -> dict:
        """Distinct (src, dst) arrays per channel, unioned over authors."""
        buckets: dict[ExposureChannel, set] = {}
        for r in self.rows:
            buckets.setdefault(r.channel, set()).add((r.src, r.dst))
        out = {}
        for ch, pairs in buckets.items():
            arr = np.array(sorted(pairs), dtype=np.int64).reshape(-1, 2)
            out[ch] = (arr[:, 0], arr[:, 1])
        return out

    def save(self, path):
        with open(path, "wb") as f:
            binio.write_magic(f, EDGESET_MAGIC, EDGESET_VERSION)
            binio.write_u32(f, self.year)
            binio.write_u64(f, len(self.rows))
            for r in self.rows:
                binio.write_u64(f, r.author)
                binio.write_u8(f, int(r.channel))
                binio.write_u64(f, r.src)
                binio.write_u64(f, r.dst)
                binio.write_u8(f, int(r.provenance))

    @classmethod
    def load(cls, path) -> "InfosphereEdgeSet":
        with open(path, "rb") as f:
            binio.read_magic(f, EDGESET_MAGIC, EDGESET_VERSION)
            year = binio.read_u32(f)
            rows = [
                ExposureRow(
                    binio.read_u64(f),
                    ExposureChannel(binio.read_u8(f)),
                    binio.read_u64(f),
                    binio.read_u64(f),
                    InfosphereProvenance(binio.read_u8(f)),
                )
                for _ in range(binio.read_u64(f))
            ]
        return cls(year, rows)

    def write_ndjson(self, path, graph: TemporalGraph):
        """Audit dump: one line per author with readable edge lists."""
        per_author: dict[int, list] = {}
        for r in self.rows:
            st, dt = CHANNEL_TYPES[r.channel]
            per_author.setdefault(r.author, []).append(
                [
                    r.channel.name.lower(),
                    graph.external_id(NodeRef(st, r.src)),
                    graph.external_id(NodeRef(dt, r.dst)),
                    r.provenance.name.lower(),
                ]
            )
        with open(path, "w", encoding="utf-8") as f:
            for a in sorted(per_author):
                rec = {
                    "author": graph.external_id(NodeRef(NodeType.AUTHOR, a)),
                    "edges": per_author[a],
                }
                f.write(json.dumps(rec, separators=(",", ":")) + "\n")


def top_papers(snapshot_y: Snapshot, n: int) -> list[NodeRef]:
    """The n most-cited papers of the snapshot; ties go to the lower index."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    if n == 0:
        return []
    members = snapshot_y.members(NodeType.PAPER)
    indeg = snapshot_y.cites_indegree()[members]
    order = np.lexsort((members, -indeg))
    return [NodeRef(NodeType.PAPER, int(members[i])) for i in order[:n]]


def top_papers_per_topic(
    snapshot_y: Snapshot, author: NodeRef, m: int, n: int
) -> list[NodeRef]:
    """For the author's m most-used topics, the n most-cited papers each,
    concatenated and deduplicated keeping the first occurrence."""
    if m < 0 or n < 0:
        raise ValueError("m and n must be nonnegative")
    if m == 0 or n == 0 or not snapshot_y.contains(author):
        return []
    papers = snapshot_y.neighbor_indices(
        author, Relation.WRITES, Direction.FORWARD
    )
    usage: dict[int, int] = {}
    for p in papers:
        topics = snapshot_y.neighbor_indices(
            NodeRef(NodeType.PAPER, int(p)), Relation.DEALS_WITH, Direction.FORWARD
        )
        for t in topics:
            usage[int(t)] = usage.get(int(t), 0) + 1
    ranked = sorted(usage, key=lambda t: (-usage[t], t))[:m]

    indeg = snapshot_y.cites_indegree()
    out: list[NodeRef] = []
    seen: set[int] = set()
    for t in ranked:
        tp = snapshot_y.neighbor_indices(
            NodeRef(NodeType.TOPIC, t), Relation.DEALS_WITH, Direction.REVERSE
        )
        order = np.lexsort((tp, -indeg[tp]))
        for i in order[:n]:
            p = int(tp[i])
            if p not in seen:
                seen.add(p)
                out.append(NodeRef(NodeType.PAPER, p))
    return out


def materialize(
    snapshot_y: Snapshot, entries, provenance: InfosphereProvenance
) -> InfosphereEdgeSet:
    """Turn per-author infospheres into exposure rows.

    Each entry is either a ColoredInfosphere (path/expansion edges pass
    through on their base-relation exposure channels; attachments become
    direct link edges) or an (author, nodes) pair whose nodes each get one
    direct link edge from the author. Rows are deduplicated per author.
    """
    rows: list[ExposureRow] = []
    for entry in entries:
        if isinstance(entry, ColoredInfosphere):
            author = entry.author
            seen = set()
            for rel, src, dst in sorted(entry.edges):
                ch = _REL_CHANNEL[Relation(rel)]
                if (ch, src, dst) in seen:
                    continue
                seen.add((ch, src, dst))
                rows.append(ExposureRow(author.index, ch, src, dst, provenance))
            for node in entry.attach:
                ch = _LINK_CHANNEL[NodeType(node.ntype)]
                if (ch, author.index, node.index) in seen:
                    continue
                seen.add((ch, author.index, node.index))
                rows.append(
                    ExposureRow(author.index, ch, author.index, node.index, provenance)
                )
        else:
            author, nodes = entry
            seen = set()
            for node in nodes:
                ch = _LINK_CHANNEL[NodeType(node.ntype)]
                key = (ch, author.index, node.index)
                if key in seen:
                    continue
                seen.add(key)
                rows.append(
                    ExposureRow(author.index, ch, author.index, node.index, provenance)
                )
    return InfosphereEdgeSet(snapshot_y.year, rows)
