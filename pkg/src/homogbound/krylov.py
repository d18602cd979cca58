"""Plain conjugate gradients for the symmetric positive semidefinite systems.

The stopping test uses the recurrence residual, ||r||_2 <= rel_tol * ||b||_2
from the zero initial guess; once it fires, the residual is recomputed
explicitly (one extra operator application) and iteration resumes if drift
has spoiled it.  A zero right-hand side returns the zero solution in zero
iterations.  Breakdowns (non-finite values or a nonpositive curvature p'Ap)
and hitting the iteration cap raise, with the last iterate attached to the
exception for diagnosis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = ["SolverConfig", "SolveOutcome", "SolverError", "cg"]


@dataclass(frozen=True)
class SolverConfig:
    """Tolerances for :func:`cg`.

    ``max_iter=None`` resolves to 20*sqrt(dim) + 1000, generous for the
    mesh operators whose CG iteration counts grow like the mesh diameter.
    """

    rel_tol: float = 1e-9
    max_iter: int | None = None
    record_history: bool = False

    def __post_init__(self):
        if not 0.0 < self.rel_tol < 1.0:
            raise ValueError(f"rel_tol must be in (0, 1), got {self.rel_tol!r}")
        if self.max_iter is not None and self.max_iter < 1:
            raise ValueError(f"max_iter must be positive, got {self.max_iter!r}")

    def resolve_max_iter(self, dim: int) -> int:
        if self.max_iter is not None:
            return self.max_iter
        return int(20 * math.sqrt(dim)) + 1000


@dataclass
class SolveOutcome:
    """Solution vector with iteration count and final explicit residual."""

    x: np.ndarray
    iterations: int
    rel_residual: float
    history: list[float] = field(default_factory=list)


class SolverError(RuntimeError):
    """Raised on breakdown or non-convergence; carries the last outcome."""

    def __init__(self, message: str, outcome: SolveOutcome):
        super().__init__(message)
        self.outcome = outcome


def cg(apply_op, b: np.ndarray, config: SolverConfig | None = None) -> SolveOutcome:
    """Solve (operator) x = b from the zero initial guess."""
    config = config or SolverConfig()
    b = np.asarray(b, dtype=np.float64)
    b_norm = float(np.linalg.norm(b))
    if b_norm == 0.0:
        return SolveOutcome(x=np.zeros_like(b), iterations=0, rel_residual=0.0)
    max_iter = config.resolve_max_iter(b.size)
    threshold = config.rel_tol * b_norm

    x = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    rs = b_norm * b_norm
    history: list[float] = []
    iterations = 0

    def outcome(rel):
        return SolveOutcome(x=x, iterations=iterations, rel_residual=rel, history=history)

    while True:
        while math.sqrt(rs) > threshold:
            if iterations >= max_iter:
                raise SolverError(
                    f"no convergence within {max_iter} iterations "
                    f"(residual {math.sqrt(rs) / b_norm:.3e} vs rel_tol {config.rel_tol:.3e})",
                    outcome(math.sqrt(rs) / b_norm),
                )
            ap = apply_op(p)
            curv = float(p @ ap)
            if not math.isfinite(curv) or curv <= 0.0:
                raise SolverError(
                    f"breakdown at iteration {iterations}: curvature {curv!r}",
                    outcome(math.sqrt(rs) / b_norm),
                )
            alpha = rs / curv
            x += alpha * p
            r -= alpha * ap
            rs_next = float(r @ r)
            if not math.isfinite(rs_next):
                raise SolverError(
                    f"breakdown at iteration {iterations}: non-finite residual",
                    outcome(float("nan")),
                )
            p *= rs_next / rs
            p += r
            rs = rs_next
            iterations += 1
            if config.record_history:
                history.append(math.sqrt(rs) / b_norm)
        # guard against recurrence drift before declaring victory
        r = b - apply_op(x)
        rs = float(r @ r)
        rel = math.sqrt(rs) / b_norm
        if rel <= config.rel_tol:
            return outcome(rel)
        p = r.copy()
