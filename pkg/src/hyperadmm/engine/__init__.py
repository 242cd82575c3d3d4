from .admm import (
    CSV_COLUMNS,
    ClusterState,
    CommReport,
    ConVertexState,
    RunReport,
    StepReport,
    SubVertexState,
    build_cluster,
    check_local_convergence,
    comm_report,
    local_residuals,
    parse_stop,
    run,
    superstep,
)
from .replicas import ReplicaStore

__all__ = [
    "CSV_COLUMNS", "ClusterState", "CommReport", "ConVertexState", "ReplicaStore", "RunReport",
    "StepReport", "SubVertexState", "build_cluster", "check_local_convergence", "comm_report",
    "local_residuals", "parse_stop", "run", "superstep",
]
