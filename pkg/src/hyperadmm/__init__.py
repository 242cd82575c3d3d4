"""Consensus ADMM over bipartite subproblem/consensus graphs, with vertex-cut
partitioning (random, greedy, hypergraph) and a simulated synchronous cluster."""

from .graph import (
    BipartiteGraph,
    GeneratorConfig,
    Hypergraph,
    degree_stats,
    generate_bipartite,
    read_graph,
    to_bipartite,
    to_hypergraph,
    write_graph,
)

__version__ = "0.1.0"

__all__ = [
    "BipartiteGraph", "GeneratorConfig", "Hypergraph", "degree_stats", "generate_bipartite",
    "read_graph", "to_bipartite", "to_hypergraph", "write_graph",
]
