"""Common result record for the interior-point solvers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
MAX_ITER = "max_iter"
INACCURATE = "optimal_inaccurate"
FAILED = "failed"


@dataclass
class SolveReport:
    """Outcome of one cone-program solve.

    `x` is the primal point (unscaled), `obj` the primal objective; dual
    quantities and residuals refer to the original problem data.  The
    histories record (mu, primal res, dual res, relative gap) per iteration
    so callers can audit the contraction.
    """

    status: str
    x: np.ndarray | None = None
    y: np.ndarray | None = None
    z: np.ndarray | None = None
    s: np.ndarray | None = None
    obj: float = float("nan")
    obj_dual: float = float("nan")
    gap_rel: float = float("nan")
    pres: float = float("nan")
    dres: float = float("nan")
    iterations: int = 0
    mu_history: list = field(default_factory=list)
    res_history: list = field(default_factory=list)
    certificate: np.ndarray | None = None
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status in (OPTIMAL, INACCURATE)
