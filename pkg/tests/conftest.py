import numpy as np
import pytest

from acadnet.graph import GraphBuilder, NodeRef, NodeType, Relation
from acadnet.rng import keyed_rng


def toy_builder():
    """Small hand-checkable corpus.

    papers: p0(2000, A0+A1, T0, cites -)   p1(2001, A1+A2, T0+T1, cites p0)
            p2(2002, A0+A2, T1, cites p0,p1)   p3(2002, A3, T2, cites p1)
    """
    b = GraphBuilder()
    a = [b.add_node(NodeType.AUTHOR, f"A{i}") for i in range(4)]
    t = [b.add_node(NodeType.TOPIC, f"T{i}") for i in range(3)]
    p = [
        b.add_paper("P0", 2000),
        b.add_paper("P1", 2001),
        b.add_paper("P2", 2002),
        b.add_paper("P3", 2002),
    ]
    writes = [(0, 0), (1, 0), (1, 1), (2, 1), (0, 2), (2, 2), (3, 3)]
    for ai, pi in writes:
        b.add_edge(Relation.WRITES, a[ai], p[pi])
    deals = [(0, 0), (1, 0), (1, 1), (2, 1), (3, 2)]
    for pi, ti in deals:
        b.add_edge(Relation.DEALS_WITH, p[pi], t[ti])
    cites = [(1, 0), (2, 0), (2, 1), (3, 1)]
    for src, dst in cites:
        b.add_edge(Relation.CITES, p[src], p[dst])
    return b


@pytest.fixture
def toy_graph():
    return toy_builder().build()


def random_heterograph(seed, n_authors=20, n_papers=40, n_topics=6, year_lo=2000,
                       year_hi=2005, p_write=0.08, p_topic=0.2, p_cite=0.05):
    """Random corpus for property checks; every paper gets >= 1 author."""
    rng = keyed_rng(seed, "heterograph")
    b = GraphBuilder()
    authors = [b.add_node(NodeType.AUTHOR, f"a{i}") for i in range(n_authors)]
    topics = [b.add_node(NodeType.TOPIC, f"t{i}") for i in range(n_topics)]
    papers = []
    for i in range(n_papers):
        year = int(rng.integers(year_lo, year_hi + 1))
        papers.append(b.add_paper(f"p{i}", year))
    for pi, p in enumerate(papers):
        wrote = False
        for a in authors:
            if rng.random() < p_write:
                b.add_edge(Relation.WRITES, a, p)
                wrote = True
        if not wrote:
            a = authors[int(rng.integers(0, n_authors))]
            b.add_edge(Relation.WRITES, a, p)
        for t in topics:
            if rng.random() < p_topic:
                b.add_edge(Relation.DEALS_WITH, p, t)
        for q in papers[:pi]:
            if rng.random() < p_cite:
                b.add_edge(Relation.CITES, p, q)
    return b.build()


def two_cluster_graph(cluster_size=10, papers_per_author=2, year=2000):
    """Authors split into two topic communities with no cross edges."""
    b = GraphBuilder()
    n = 2 * cluster_size
    authors = [b.add_node(NodeType.AUTHOR, f"A{i}") for i in range(n)]
    topics = [b.add_node(NodeType.TOPIC, "Tx"), b.add_node(NodeType.TOPIC, "Ty")]
    k = 0
    for i, a in enumerate(authors):
        cluster = i // cluster_size
        for _ in range(papers_per_author):
            p = b.add_paper(f"P{k}", year)
            k += 1
            b.add_edge(Relation.WRITES, a, p)
            b.add_edge(Relation.DEALS_WITH, p, topics[cluster])
    return b.build()


def cluster_link_dataset(cluster_size=10):
    """Balanced labels over two_cluster_graph: same cluster <=> positive."""
    from acadnet.link_task import LinkDataset, _split_stratum

    n = 2 * cluster_size
    pos, neg = [], []
    for a in range(n):
        for b_ in range(a + 1, n):
            (pos if (a // cluster_size) == (b_ // cluster_size) else neg).append(
                (a, b_)
            )
    neg = neg[: len(pos)]
    split_of = _split_stratum(pos) | _split_stratum(neg)
    rows = sorted(pos) + sorted(neg)
    pairs = np.array(rows, dtype=np.int64)
    labels = np.concatenate(
        [np.ones(len(pos), dtype=np.int8), np.zeros(len(neg), dtype=np.int8)]
    )
    splits = np.array([split_of[p] for p in rows], dtype=np.int8)
    return LinkDataset(2000, pairs, labels, splits)


def min_degree_graph(n_authors=10, n_papers=40, n_topics=5, year=2000):
    """Structured single-year graph where every node has degree >= 4."""
    b = GraphBuilder()
    authors = [b.add_node(NodeType.AUTHOR, f"A{i}") for i in range(n_authors)]
    papers = [b.add_paper(f"P{i}", year) for i in range(n_papers)]
    topics = [b.add_node(NodeType.TOPIC, f"T{i}") for i in range(n_topics)]
    for j in range(n_papers):
        for k in range(4):
            b.add_edge(Relation.WRITES, authors[(j + k) % n_authors], papers[j])
        b.add_edge(Relation.DEALS_WITH, papers[j], topics[j % n_topics])
        b.add_edge(Relation.DEALS_WITH, papers[j], topics[(j + 1) % n_topics])
        for k in range(1, 5):
            b.add_edge(Relation.CITES, papers[j], papers[(j - k) % n_papers])
    return b.build()
