"""Co-authorship link prediction data: labels, negative sampling,
infosphere dropout, and the train/val/test split.

Pairs are canonical (a, b) author index tuples with a < b. Positives for
prediction year y are the pairs that first co-author in year y+1 with both
authors already active in G_y; negatives are rejection-sampled 1:1 from
the active-author universe, excluding anything co-authored through y+1.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import binio
from .graph import Direction, NodeRef, NodeType, Relation, Snapshot, TemporalGraph
from .infosphere import InfosphereEdgeSet
from .rng import keyed_rng, stable_hash64

DATASET_MAGIC = b"ANPD"
DATASET_VERSION = 1

SPLIT_TRAIN, SPLIT_VAL, SPLIT_TEST = 0, 1, 2
SPLIT_NAMES = ("train", "val", "test")

# rejection draws tolerated per requested negative before giving up
_STALL_FACTOR = 200


class LinkTaskError(ValueError):
    pass


def coauthor_pairs(snapshot: Snapshot) -> set:
    """Canonical author pairs sharing at least one snapshot paper."""
    pairs = set()
    for p in snapshot.members(NodeType.PAPER):
        authors = snapshot.neighbor_indices(
            NodeRef(NodeType.PAPER, int(p)), Relation.WRITES, Direction.REVERSE
        )
        k = len(authors)
        for i in range(k):
            for j in range(i + 1, k):
                pairs.add((int(authors[i]), int(authors[j])))
    return pairs


def positive_labels(graph: TemporalGraph, year: int) -> set:
    """Pairs that first co-author in year+1, both active in G_year."""
    lo, hi = graph.year_range()
    if not lo <= year < hi:
        raise LinkTaskError(
            f"prediction year {year} outside usable span [{lo}, {hi - 1}]"
        )
    snap_y = graph.snapshot(year)
    nxt = coauthor_pairs(graph.snapshot(year + 1))
    prev = coauthor_pairs(snap_y)
    amask = snap_y.author_mask
    return {p for p in nxt - prev if amask[p[0]] and amask[p[1]]}


def _sample_negatives(
    n_wanted: int, snap_y: Snapshot, taken: set, rng_seed, year: int
) -> set:
    """Uniform rejection sampling over active-author pairs not in `taken`."""
    if n_wanted == 0:
        return set()
    universe = snap_y.members(NodeType.AUTHOR)
    n = len(universe)
    amask = snap_y.author_mask
    in_universe = sum(1 for a, b in taken if amask[a] and amask[b])
    legal = n * (n - 1) // 2 - in_universe
    if legal < n_wanted:
        raise LinkTaskError(
            f"cannot sample {n_wanted} negatives: only {legal} non-co-author "
            f"pairs exist among {n} active authors"
        )
    rng = keyed_rng(rng_seed, "negatives", year)
    out: set = set()
    attempts = 0
    limit = _STALL_FACTOR * n_wanted + 10_000
    while len(out) < n_wanted:
        attempts += 1
        if attempts > limit:
            raise LinkTaskError(
                f"negative sampling stalled after {attempts} draws "
                f"({len(out)}/{n_wanted} found, {legal} legal pairs)"
            )
        i, j = rng.integers(0, n, size=2)
        if i == j:
            continue
        if i > j:
            i, j = j, i
        pair = (int(universe[i]), int(universe[j]))
        if pair in taken or pair in out:
            continue
        out.add(pair)
    return out


def negative_sample(positives: set, snapshot_y1: Snapshot, rng_seed) -> set:
    """Exactly |positives| pairs never co-authored through year+1."""
    year = snapshot_y1.year - 1
    snap_y = snapshot_y1.base.snapshot(year)
    taken = coauthor_pairs(snapshot_y1)
    return _sample_negatives(len(positives), snap_y, taken, rng_seed, year)


def drop_infosphere(
    edge_set: InfosphereEdgeSet, fraction: float, rng_seed
) -> InfosphereEdgeSet:
    """Uniformly remove round(fraction * |rows|) exposure rows."""
    if not 0.0 <= fraction <= 1.0:
        raise LinkTaskError(f"drop fraction {fraction} outside [0, 1]")
    n = len(edge_set.rows)
    k = int(round(fraction * n))
    if k == 0:
        return InfosphereEdgeSet(edge_set.year, list(edge_set.rows))
    rng = keyed_rng(rng_seed, "drop-infosphere", edge_set.year)
    doomed = set(int(i) for i in rng.choice(n, size=k, replace=False))
    rows = [r for i, r in enumerate(edge_set.rows) if i not in doomed]
    return InfosphereEdgeSet(edge_set.year, rows)


def _split_stratum(pairs: list) -> dict:
    """80/10/10 assignment by hash-order within one label stratum."""
    order = sorted(pairs, key=lambda p: (stable_hash64("split", p[0], p[1]), p))
    n = len(order)
    n_train = (n * 8) // 10
    n_val = (n * 9) // 10 - n_train
    out = {}
    for idx, p in enumerate(order):
        if idx < n_train:
            out[p] = SPLIT_TRAIN
        elif idx < n_train + n_val:
            out[p] = SPLIT_VAL
        else:
            out[p] = SPLIT_TEST
    return out


@dataclass
class LinkDataset:
    year: int
    pairs: np.ndarray    # (n, 2) int64, canonical a < b
    labels: np.ndarray   # (n,) int8, 1 = future co-authors
    splits: np.ndarray   # (n,) int8

    def __len__(self):
        return len(self.labels)

    def subset(self, split: int) -> tuple[np.ndarray, np.ndarray]:
        m = self.splits == split
        return self.pairs[m], self.labels[m]

    def counts(self) -> dict:
        out = {}
        for s, name in enumerate(SPLIT_NAMES):
            m = self.splits == s
            out[name] = {
                "total": int(m.sum()),
                "pos": int((self.labels[m] == 1).sum()),
                "neg": int((self.labels[m] == 0).sum()),
            }
        return out

    def validate(self):
        if len(self.pairs) != len(self.labels) or len(self.labels) != len(self.splits):
            raise LinkTaskError("column lengths disagree")
        if np.any(self.pairs[:, 0] >= self.pairs[:, 1]):
            raise LinkTaskError("non-canonical pair ordering")
        n_pos = int((self.labels == 1).sum())
        n_neg = int((self.labels == 0).sum())
        if n_pos != n_neg:
            raise LinkTaskError(f"unbalanced dataset: {n_pos} pos vs {n_neg} neg")
        seen = {tuple(p) for p in self.pairs.tolist()}
        if len(seen) != len(self.pairs):
            raise LinkTaskError("duplicate pairs across labels")

    def save(self, path):
        with open(path, "wb") as f:
            binio.write_magic(f, DATASET_MAGIC, DATASET_VERSION)
            binio.write_u32(f, self.year)
            binio.write_array(f, self.pairs, "<i8")
            binio.write_array(f, self.labels, "<i1")
            binio.write_array(f, self.splits, "<i1")

    @classmethod
    def load(cls, path) -> "LinkDataset":
        with open(path, "rb") as f:
            binio.read_magic(f, DATASET_MAGIC, DATASET_VERSION)
            year = binio.read_u32(f)
            pairs = binio.read_array(f, "<i8").reshape(-1, 2)
            labels = binio.read_array(f, "<i1")
            splits = binio.read_array(f, "<i1")
        ds = cls(year, pairs, labels, splits)
        ds.validate()
        return ds

    def write_ndjson(self, path, graph: TemporalGraph):
        with open(path, "w", encoding="utf-8") as f:
            for (a, b), label, split in zip(
                self.pairs.tolist(), self.labels.tolist(), self.splits.tolist()
            ):
                rec = {
                    "a": graph.external_id(NodeRef(NodeType.AUTHOR, a)),
                    "b": graph.external_id(NodeRef(NodeType.AUTHOR, b)),
                    "label": int(label),
                    "split": SPLIT_NAMES[split],
                }
                f.write(json.dumps(rec, separators=(",", ":")) + "\n")


def assemble_dataset(graph: TemporalGraph, year: int, rng_seed) -> LinkDataset:
    """Labels, 1:1 negatives, and hash-stratified splits for one year."""
    lo, hi = graph.year_range()
    if not lo <= year < hi:
        raise LinkTaskError(
            f"prediction year {year} outside usable span [{lo}, {hi - 1}]"
        )
    snap_y = graph.snapshot(year)
    snap_y1 = graph.snapshot(year + 1)
    prev = coauthor_pairs(snap_y)
    nxt = coauthor_pairs(snap_y1)
    amask = snap_y.author_mask
    positives = {p for p in nxt - prev if amask[p[0]] and amask[p[1]]}
    negatives = _sample_negatives(len(positives), snap_y, nxt, rng_seed, year)

    # the contract, checked on every assembly
    if len(negatives) != len(positives):
        raise LinkTaskError("negative count drifted from positive count")
    if positives & negatives:
        raise LinkTaskError("a pair is labeled both positive and negative")
    if positives & prev:
        raise LinkTaskError("a positive pair already co-authored by year y")
    if negatives & nxt:
        raise LinkTaskError("a negative pair co-authors by year y+1")

    pos = sorted(positives)
    neg = sorted(negatives)
    split_of = _split_stratum(pos) | _split_stratum(neg)
    rows = pos + neg
    pairs = np.array(rows, dtype=np.int64).reshape(-1, 2)
    labels = np.concatenate(
        [np.ones(len(pos), dtype=np.int8), np.zeros(len(neg), dtype=np.int8)]
    )
    splits = np.array([split_of[p] for p in rows], dtype=np.int8)
    ds = LinkDataset(year, pairs, labels, splits)
    ds.validate()
    return ds
