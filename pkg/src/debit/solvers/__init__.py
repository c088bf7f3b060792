from .cutting_plane import ConvexConstraint, find_interior_point, solve_concave_program
from .lp import (INFEASIBLE, ITERATION_LIMIT, NUMERICAL, OPTIMAL, UNBOUNDED, LinearProgram,
                 SolverReport, solve_lp)
from .search import bisect_root, golden_section, largest_true, scalar_maximize

__all__ = [
    "ConvexConstraint", "find_interior_point", "solve_concave_program", "LinearProgram", "SolverReport",
    "solve_lp", "bisect_root", "golden_section", "largest_true", "scalar_maximize",
    "OPTIMAL", "INFEASIBLE", "UNBOUNDED", "ITERATION_LIMIT", "NUMERICAL",
]
