"""Inequality-form linear programs ``min c^T z  s.t.  A_ub z <= b_ub, z >= 0``.

Solving is delegated to the HiGHS dual simplex through :func:`scipy.optimize.linprog`.
The wrapper checks primal feasibility and the duality gap of the returned
point so callers get an explicit certificate rather than a status string.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

__all__ = ["LPError", "LPResult", "solve_lp"]


class LPError(RuntimeError):
    """The program is infeasible, unbounded, or the solver failed."""


@dataclass(frozen=True)
class LPResult:
    """Primal solution with its optimality certificate.

    Attributes
    ----------
    x : ndarray
        Primal point.
    objective : float
        ``c @ x``.
    dual_objective : float
        ``-b_ub @ y`` for the row multipliers ``y >= 0`` reported by the solver.
    violation : float
        Largest positive part of ``A_ub x - b_ub`` and of ``-x``.
    """

    x: np.ndarray
    objective: float
    dual_objective: float
    violation: float

    @property
    def duality_gap(self):
        return abs(self.objective - self.dual_objective)


def solve_lp(c, A_ub, b_ub, tolerance=1e-8):
    """Minimize ``c @ z`` over ``A_ub @ z <= b_ub`` and ``z >= 0``.

    Parameters
    ----------
    c : array_like of shape (m,)
    A_ub : array_like of shape (k, m)
    b_ub : array_like of shape (k,)
    tolerance : float
        Feasibility and optimality tolerance passed to the solver and used
        for the post-solve checks.

    Returns
    -------
    LPResult

    Raises
    ------
    LPError
        If the solver reports infeasibility or unboundedness, or the returned
        point violates the constraints by more than ``10 * tolerance``.
    """
    c = np.asarray(c, dtype=float)
    A_ub = np.atleast_2d(np.asarray(A_ub, dtype=float))
    b_ub = np.asarray(b_ub, dtype=float)
    res = linprog(
        c, A_ub=A_ub, b_ub=b_ub, bounds=(0, None), method="highs-ds",
        options={"primal_feasibility_tolerance": tolerance,
                 "dual_feasibility_tolerance": tolerance},
    )
    if res.status == 2:
        raise LPError("linear program is infeasible")
    if res.status == 3:
        raise LPError("linear program is unbounded")
    if res.status != 0:
        raise LPError(f"solver failed: {res.message}")
    x = np.maximum(res.x, 0.0)
    resid = A_ub @ x - b_ub
    violation = float(max(resid.max(initial=0.0), 0.0))
    if violation > 10 * tolerance * max(1.0, np.abs(b_ub).max(initial=0.0)):
        raise LPError(f"returned point violates constraints by {violation:.3g}")
    # HiGHS reports nonpositive marginals for <= rows
    y = -np.asarray(res.ineqlin.marginals, dtype=float)
    return LPResult(x=x, objective=float(c @ x), dual_objective=float(-b_ub @ y),
                    violation=violation)
