"""SDP container, interior-point solver and SDPA file I/O."""

from .problem import BlockHandle, Constraint, SdpProblem
from .sdpa import export_sdpa, parse_sdpa, read_sdpa, to_cvxpy, write_sdpa
from .solver import FAILURE, FEASIBLE, INFEASIBLE, SdpSolution, SolverOptions, solve

__all__ = [
    "BlockHandle", "Constraint", "SdpProblem", "SdpSolution", "SolverOptions", "solve",
    "export_sdpa", "parse_sdpa", "read_sdpa", "write_sdpa", "to_cvxpy",
    "FEASIBLE", "INFEASIBLE", "FAILURE",
]
