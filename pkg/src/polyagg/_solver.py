"""Thin wrapper around scipy's HiGHS linprog.

All LP solves in the library go through :func:`lp` so that solver options stay
uniform (deterministic, single-threaded HiGHS) and so that the number of
solver invocations can be observed for diagnostics.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import linprog

from .errors import LpFailure

# linprog invocations since import; rule implementations snapshot this to
# report how many solves they triggered.
solve_count = 0

OPTIMAL = 0
ITERATION_LIMIT = 1
INFEASIBLE = 2


def _or_none(a):
    if a is None:
        return None
    a = np.asarray(a, dtype=float)
    return a if a.size else None


def lp(c, a_ub=None, b_ub=None, a_eq=None, b_eq=None, bounds=(None, None), maxiter=None):
    """Solve ``min c @ x`` subject to ``a_ub x <= b_ub`` and ``a_eq x = b_eq``.

    Variables are free by default (the callers encode all structure as
    explicit rows).  Returns the scipy result object; raises
    :class:`LpFailure` on unbounded or numerically failed solves, which no
    well-formed polyagg program should produce.

    Presolve stays off: on near-degenerate threshold rows (a return bound
    within 1e-6 of its true maximum over an equality-heavy polytope) HiGHS
    presolve can declare a feasible system infeasible, which breaks the
    plurality encoding.  The solves here are small enough not to care.
    """
    global solve_count
    solve_count += 1
    options = {"presolve": False}
    if maxiter is not None:
        options["maxiter"] = int(maxiter)
    res = linprog(
        np.asarray(c, dtype=float),
        A_ub=_or_none(a_ub),
        b_ub=_or_none(b_ub),
        A_eq=_or_none(a_eq),
        b_eq=_or_none(b_eq),
        bounds=bounds,
        method="highs",
        options=options,
    )
    if res.status in (3, 4):
        raise LpFailure(f"LP solver failed with status {res.status}: {res.message}")
    return res
