"""Exact A- and D-optimal experimental designs by branch and bound.

Node relaxations are solved either by an inexact projected Newton method
(quadratic models solved by vertex exchange) or, as a baseline, by vertex
exchange applied directly to the criterion.
"""

from .bnb import BnbConfig, NodeSolver, SolveReport, Status, enumerate_exact, rounding_heuristic, solve
from .criteria import Criterion, CriterionState, DesignProblem, build_state, hessian, local_norm
from .feasible_set import BoxSimplex
from .instances import InstanceSpec, Kind, generate, read_instance, write_instance
from .pn_solver import PnParams, solve_relaxation
from .vem_solver import solve_vem

__version__ = "0.1.0"

__all__ = [
    "BnbConfig",
    "BoxSimplex",
    "Criterion",
    "CriterionState",
    "DesignProblem",
    "InstanceSpec",
    "Kind",
    "NodeSolver",
    "PnParams",
    "SolveReport",
    "Status",
    "build_state",
    "enumerate_exact",
    "generate",
    "hessian",
    "local_norm",
    "read_instance",
    "rounding_heuristic",
    "solve",
    "solve_relaxation",
    "solve_vem",
    "write_instance",
]
