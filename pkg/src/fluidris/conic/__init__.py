"""In-repo convex solvers for the two recurring subproblem shapes."""

from .hermitian import eigen_ratio, hermitize, principal_eigvec, smat, svec
from .psd import EQ, GE, LE, LogTraceTerm, PsdProgram, TraceConstraint, solve_psd_program
from .report import INFEASIBLE, MAX_ITERATIONS, OPTIMAL, SolverError, SolverReport
from .smooth import (
    LinearIneq,
    LogTerm,
    PowerNormIneq,
    QuadIneq,
    SmoothProgram,
    solve_smooth_program,
)

__all__ = [
    "EQ", "GE", "LE", "INFEASIBLE", "MAX_ITERATIONS", "OPTIMAL",
    "LogTraceTerm", "PsdProgram", "TraceConstraint", "solve_psd_program",
    "LinearIneq", "LogTerm", "PowerNormIneq", "QuadIneq", "SmoothProgram",
    "solve_smooth_program",
    "SolverError", "SolverReport",
    "eigen_ratio", "hermitize", "principal_eigvec", "smat", "svec",
]
