"""Stochastic expansion of seedgraphs into infospheres.

Starting from each seed path, a random walk adds plausible noise nodes to
the seedgraph. At every step one categorical draw decides where to go:
mass p1 on the Orange neighbors (seedgraph), p2 on the Green neighbors
(already added by expansion), p3 on jumping back to the author, and the
leftover max(0, 1-p1-p2-p3) on White neighbors (everything else). The four
masses are renormalized; a draw landing on an empty category is retried
over the nonempty ones. The walk stops after f new Green nodes or a step
budget of 50*f.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import IntEnum

from .graph import NodeRef, NodeType, Snapshot
from .rng import keyed_rng
from .seedgraph import Seedgraph

log = logging.getLogger(__name__)

STEP_BUDGET_FACTOR = 50

ALLOWED_F = (0, 2, 4, 6)


class ExpansionError(ValueError):
    pass


class Color(IntEnum):
    ORANGE = 0
    GREEN = 1


class Provenance(IntEnum):
    SEED_PATH = 0
    EXPANSION = 1


# decision categories, in draw order
CAT_ORANGE, CAT_GREEN, CAT_JUMP, CAT_WHITE = range(4)
CATEGORY_NAMES = ("orange", "green", "jump", "white")


@dataclass(frozen=True)
class ExpansionParams:
    p1: float
    p2: float
    p3: float
    f: int

    def __post_init__(self):
        for name in ("p1", "p2", "p3"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ExpansionError(f"{name}={v} outside [0, 1]")
        if self.f not in ALLOWED_F:
            raise ExpansionError(f"f={self.f} not in {ALLOWED_F}")

    def masses(self) -> tuple[float, float, float, float]:
        white = max(0.0, 1.0 - self.p1 - self.p2 - self.p3)
        total = self.p1 + self.p2 + self.p3 + white
        return (self.p1 / total, self.p2 / total, self.p3 / total, white / total)


# trial0 is the random-attachment variant handled by random_infosphere
# rather than expand()
TRIALS: dict[str, ExpansionParams] = {
    "trial1": ExpansionParams(0.5, 0.5, 0.5, 2),
    "trial2": ExpansionParams(0.75, 0.5, 0.5, 2),
    "trial3": ExpansionParams(0.5, 0.75, 0.5, 2),
    "trial4": ExpansionParams(0.5, 0.5, 0.75, 2),
    "trial5": ExpansionParams(0.25, 0.75, 0.25, 2),
}

RANDOM_TRIAL = "trial0"


@dataclass
class ExpandStats:
    decisions: list = field(default_factory=lambda: [0, 0, 0, 0])
    # subset of decisions where every category had a candidate, so the
    # outcome distribution is exactly the renormalized masses
    full_decisions: list = field(default_factory=lambda: [0, 0, 0, 0])
    redraws: int = 0
    author_jumps: int = 0
    budget_exhausted: int = 0
    greens_added: int = 0

    def merge(self, other: "ExpandStats"):
        for i in range(4):
            self.decisions[i] += other.decisions[i]
            self.full_decisions[i] += other.full_decisions[i]
        self.redraws += other.redraws
        self.author_jumps += other.author_jumps
        self.budget_exhausted += other.budget_exhausted
        self.greens_added += other.greens_added


@dataclass
class ColoredInfosphere:
    """Seedgraph (Orange) plus expansion noise (Green); uncolored nodes are
    conceptually White. `edges` are real snapshot edges with a provenance
    tag; `attach` lists synthetic direct author attachments, used only by
    the random variant."""

    author: NodeRef
    year: int
    colors: dict = field(default_factory=dict)   # NodeRef -> Color
    edges: dict = field(default_factory=dict)    # (Relation, src, dst) -> Provenance
    attach: tuple = ()
    stats: ExpandStats = field(default_factory=ExpandStats)

    def nodes(self, color: Color | None = None):
        if color is None:
            return set(self.colors)
        return {n for n, c in self.colors.items() if c == color}


def _classify_neighbors(snap: Snapshot, cur: NodeRef, colors: dict):
    orange, green, white = [], [], []
    for nb in snap.iter_undirected(cur):
        c = colors.get(nb)
        if c is None:
            white.append(nb)
        elif c == Color.ORANGE:
            orange.append(nb)
        else:
            green.append(nb)
    return orange, green, white


def _draw_category(rng, masses, avail, stats: ExpandStats) -> int:
    """One categorical draw; empty categories force a renormalized redraw."""
    r = float(rng.random())
    acc = 0.0
    cat = 3
    for i, m in enumerate(masses):
        acc += m
        if r < acc:
            cat = i
            break
    if avail[cat]:
        return cat
    stats.redraws += 1
    live = [i for i in range(4) if avail[i]]
    live_mass = sum(masses[i] for i in live)
    r = float(rng.random())
    if live_mass <= 0.0:
        # every nonempty category carries zero mass: fall back to uniform
        return live[min(int(r * len(live)), len(live) - 1)]
    acc = 0.0
    for i in live:
        acc += masses[i] / live_mass
        if r < acc:
            return i
    return live[-1]


def expand(
    seedgraph: Seedgraph,
    snapshot_y: Snapshot,
    params: ExpansionParams,
    rng_seed: int,
) -> ColoredInfosphere:
    """Grow the author's infosphere by one walk per seed path.

    Green state is shared across the author's paths, processed in path
    order; the per-path walk gets its own RNG stream keyed by
    (rng_seed, author index, path index) so results do not depend on
    scheduling.
    """
    info = ColoredInfosphere(seedgraph.author, seedgraph.year)
    info.colors = {n: Color.ORANGE for n in seedgraph.nodes}
    info.edges = {e: Provenance.SEED_PATH for e in seedgraph.edges}
    masses = params.masses()

    for path_idx, path in enumerate(seedgraph.path_list()):
        if params.f == 0:
            break
        rng = keyed_rng(rng_seed, "expand", seedgraph.author.index, path_idx)
        cur = path.nodes[int(rng.integers(0, len(path.nodes)))]
        added = 0
        budget = STEP_BUDGET_FACTOR * params.f
        while added < params.f and budget > 0:
            budget -= 1
            orange, green, white = _classify_neighbors(snapshot_y, cur, info.colors)
            avail = (bool(orange), bool(green), True, bool(white))
            cat = _draw_category(rng, masses, avail, info.stats)
            info.stats.decisions[cat] += 1
            if avail[0] and avail[1] and avail[3]:
                info.stats.full_decisions[cat] += 1
            if cat == CAT_JUMP:
                info.stats.author_jumps += 1
                cur = seedgraph.author
                continue
            bucket = (orange, green, None, white)[cat]
            nxt = bucket[int(rng.integers(0, len(bucket)))]
            edge = snapshot_y.connecting_edge(cur, nxt)
            if edge not in info.edges:
                info.edges[edge] = Provenance.EXPANSION
            if nxt not in info.colors:
                info.colors[nxt] = Color.GREEN
                info.stats.greens_added += 1
                added += 1
            cur = nxt
        if added < params.f:
            info.stats.budget_exhausted += 1
    return info


def random_infosphere(
    snapshot_y: Snapshot, author: NodeRef, size: int, rng_seed: int
) -> ColoredInfosphere:
    """Baseline variant: `size` uniform snapshot nodes attached straight to
    the author (synthetic edges, recorded in `attach`)."""
    if size < 0:
        raise ExpansionError("size must be nonnegative")
    members = []
    for t in NodeType:
        for i in snapshot_y.members(t):
            members.append(NodeRef(t, int(i)))
    members.sort()
    if size > len(members):
        log.warning(
            "random infosphere size %d exceeds snapshot size %d; capping",
            size,
            len(members),
        )
        size = len(members)
    rng = keyed_rng(rng_seed, "random-infosphere", author.index)
    picked = rng.choice(len(members), size=size, replace=False) if size else []
    info = ColoredInfosphere(author, snapshot_y.year)
    attach = sorted(members[int(i)] for i in picked)
    info.attach = tuple(attach)
    info.colors = {n: Color.GREEN for n in attach}
    return info
