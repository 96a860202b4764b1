"""Small exact MILP toolkit: model builder, simplex, branch-and-bound, oracle."""

from .branch_and_bound import solve_mip
from .lpformat import dump_lp
from .model import (INF, CompiledModel, Constraint, MilpModel, MipSolution, Sense, Status,
                    Variable, VarKind)
from .oracle import Violation, check_solution, enumerate_oracle
from .simplex import LpResult, Tableau, solve_lp, solve_lp_arrays

__all__ = [
    "INF", "CompiledModel", "Constraint", "LpResult", "MilpModel", "MipSolution", "Sense",
    "Status", "Variable", "VarKind", "Violation", "check_solution", "dump_lp",
    "Tableau", "enumerate_oracle", "solve_lp", "solve_lp_arrays", "solve_mip",
]
