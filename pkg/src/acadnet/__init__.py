"""Academic-network pipeline: temporal heterogeneous graphs, simulated
recommender infospheres, and next-year co-authorship prediction."""

__version__ = "0.1.0"

from .graph import (
    Direction,
    GraphBuilder,
    GraphError,
    NodeRef,
    NodeType,
    Relation,
    Snapshot,
    TemporalGraph,
)

__all__ = [
    "Direction",
    "GraphBuilder",
    "GraphError",
    "NodeRef",
    "NodeType",
    "Relation",
    "Snapshot",
    "TemporalGraph",
    "__version__",
]
