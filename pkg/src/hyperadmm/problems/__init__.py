from .problem import Problem, read_problem, write_problem
from .prox import (
    HingeSpec,
    QuadraticSpec,
    SimplexSpec,
    project_simplex,
    prox,
    prox_hinge,
    prox_quadratic,
    prox_simplex,
)
from .voter import VoterConfig, VoterInstance, ground_voter_model

__all__ = [
    "HingeSpec", "Problem", "QuadraticSpec", "SimplexSpec", "VoterConfig", "VoterInstance",
    "ground_voter_model", "project_simplex", "prox", "prox_hinge", "prox_quadratic",
    "prox_simplex", "read_problem", "write_problem",
]
