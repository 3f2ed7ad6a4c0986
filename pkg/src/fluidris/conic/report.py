"""Solver outcome record shared by the PSD and smooth solvers."""

from __future__ import annotations

from dataclasses import dataclass

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
MAX_ITERATIONS = "max_iterations"


class SolverError(RuntimeError):
    """Malformed program or solver entered an unrecoverable state."""


@dataclass(frozen=True)
class SolverReport:
    status: str
    objective_value: float
    kkt_residual: float
    feasibility_residual: float
    iterations: int

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL
