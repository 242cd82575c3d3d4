from .assignment import (
    MAX_MACHINES,
    SCHEMES,
    Assignment,
    PartitionMetrics,
    assignment_from_edges,
    metrics,
    read_assignment,
    write_assignment,
)
from .fm import fm_refine, hypergraph_soed, part_capacity
from .hyper import assignment_from_parts, hyper_parts, partition_hyper
from .vertex_cut import GREEDY_RULES, expected_rf_random, partition_greedy, partition_random

__all__ = [
    "GREEDY_RULES", "MAX_MACHINES", "SCHEMES", "Assignment", "PartitionMetrics",
    "assignment_from_edges", "assignment_from_parts", "expected_rf_random", "fm_refine",
    "hyper_parts", "hypergraph_soed", "metrics", "part_capacity", "partition_greedy",
    "partition_hyper", "partition_random", "read_assignment", "write_assignment",
]
