"""Linear programming over the occupancy polytope.

Provides plain LP solves with extra halfspace rows, utilitarian (Pareto)
completion, iterative leximin, and a small deterministic branch-and-bound
solver for mixed binary programs whose binaries gate linear rows over the
occupancy variables.

A halfspace row is a pair ``(coeffs, bound)`` meaning ``coeffs @ d <= bound``.
"""

from __future__ import annotations

import enum
import heapq
from dataclasses import dataclass

import numpy as np

from . import _solver
from .errors import InfeasibleBounds, LpFailure
from .mdp import OccupancyMeasure, OccupancyPolytope

MAXIMIZE = "maximize"
MINIMIZE = "minimize"

FEAS_TOL = 1e-7
INTEGRALITY_TOL = 1e-6
BOUND_TOL = 1e-9
DEFAULT_NODE_BUDGET = 10**6
MAX_BINARIES = 4096


class SolveStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    ITERATION_LIMIT = "iteration_limit"


@dataclass(frozen=True, eq=False)
class LinearObjective:
    """Objective <coeffs, d> with an explicit optimization sense."""

    coeffs: np.ndarray
    sense: str = MAXIMIZE

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float).reshape(-1)
        if self.sense not in (MAXIMIZE, MINIMIZE):
            raise ValueError(f"unknown sense {self.sense!r}")
        object.__setattr__(self, "coeffs", c)


@dataclass(frozen=True, eq=False)
class BinaryVar:
    """A binary with an activation row: on means ``row_coeffs @ d >= row_lb``.

    The off state must be vacuous (``row_coeffs @ d >= 0`` has to hold
    everywhere), which is the case for normalized reward rows; this keeps
    the encoding linear without big-M constants.
    """

    weight: float
    row_coeffs: np.ndarray
    row_lb: float

    def __post_init__(self):
        object.__setattr__(
            self, "row_coeffs", np.asarray(self.row_coeffs, dtype=float).reshape(-1)
        )


@dataclass(frozen=True, eq=False)
class MilpProgram:
    """Maximize ``d_coeffs @ d + sum_j weight_j z_j`` over the polytope.

    ``binary_rows`` (``coeffs @ z <= ub``) and ``mixed_rows``
    (``d_coeffs @ d + z_coeffs @ z <= ub``) are optional tightening
    inequalities; they must be valid cuts - satisfied by every intended
    integer solution - never part of the model's meaning.
    """

    base: OccupancyPolytope
    binaries: tuple[BinaryVar, ...]
    d_coeffs: np.ndarray | None = None
    binary_rows: tuple[tuple[np.ndarray, float], ...] = ()
    mixed_rows: tuple[tuple[np.ndarray, np.ndarray, float], ...] = ()

    def __post_init__(self):
        if len(self.binaries) > MAX_BINARIES:
            raise ValueError(f"binary count exceeds the cap of {MAX_BINARIES}")
        object.__setattr__(self, "binaries", tuple(self.binaries))
        if self.d_coeffs is not None:
            c = np.asarray(self.d_coeffs, dtype=float).reshape(-1)
            if c.shape[0] != self.base.dim:
                raise ValueError("d_coeffs length must match the polytope dimension")
            object.__setattr__(self, "d_coeffs", c)
        rows = tuple(
            (np.asarray(c, dtype=float).reshape(-1), float(ub))
            for c, ub in self.binary_rows
        )
        for c, _ in rows:
            if c.shape[0] != len(self.binaries):
                raise ValueError("binary_rows must span exactly the binary variables")
        object.__setattr__(self, "binary_rows", rows)
        mixed = tuple(
            (np.asarray(dc, dtype=float).reshape(-1),
             np.asarray(zc, dtype=float).reshape(-1), float(ub))
            for dc, zc, ub in self.mixed_rows
        )
        for dc, zc, _ in mixed:
            if dc.shape[0] != self.base.dim or zc.shape[0] != len(self.binaries):
                raise ValueError("mixed_rows must span d then the binaries")
        object.__setattr__(self, "mixed_rows", mixed)


@dataclass(frozen=True, eq=False)
class Solution:
    status: SolveStatus
    point: OccupancyMeasure | None = None
    objective_value: float = float("nan")
    binary_assignment: tuple[int, ...] | None = None
    nodes: int = 1


def _stack_rows(poly: OccupancyPolytope, extra_rows):
    rows = [poly.a_ub] if poly.a_ub.shape[0] else []
    rhs = [poly.b_ub] if poly.b_ub.shape[0] else []
    for coeffs, bound in extra_rows:
        rows.append(np.asarray(coeffs, dtype=float).reshape(1, -1))
        rhs.append(np.asarray([bound], dtype=float))
    a_ub = np.vstack(rows) if rows else np.zeros((0, poly.dim))
    b_ub = np.concatenate(rhs) if rhs else np.zeros(0)
    return a_ub, b_ub


def solve_lp(poly: OccupancyPolytope, extra_rows, obj: LinearObjective, maxiter=None) -> Solution:
    """Optimize a linear objective over the polytope plus extra halfspaces."""
    if obj.coeffs.shape[0] != poly.dim:
        raise ValueError("objective length must match the polytope dimension")
    a_ub, b_ub = _stack_rows(poly, extra_rows)
    sign = -1.0 if obj.sense == MAXIMIZE else 1.0
    res = _solver.lp(
        sign * obj.coeffs, a_ub=a_ub, b_ub=b_ub, a_eq=poly.a_eq, b_eq=poly.b_eq,
        maxiter=maxiter,
    )
    if res.status == _solver.INFEASIBLE:
        return Solution(status=SolveStatus.INFEASIBLE)
    if res.status == _solver.ITERATION_LIMIT:
        return Solution(status=SolveStatus.ITERATION_LIMIT)
    value = float(sign * res.fun)
    point = _measure_from_vector(res.x, poly)
    return Solution(status=SolveStatus.OPTIMAL, point=point, objective_value=value)


def _measure_from_vector(x: np.ndarray, poly: OccupancyPolytope) -> OccupancyMeasure:
    """Wrap an LP point as an occupancy table, clamping solver slack.

    HiGHS keeps primal feasibility to about 1e-7, so entries may dip that far
    below zero; anything worse means a genuinely broken solve.
    """
    x = np.asarray(x, dtype=float)
    if float(x.min(initial=0.0)) < -FEAS_TOL:
        raise LpFailure("LP point violates nonnegativity beyond solver tolerance")
    shape = poly.table_shape or (1, poly.dim)
    return OccupancyMeasure(table=np.clip(x, 0.0, None).reshape(shape))


def feasible(poly: OccupancyPolytope, extra_rows) -> bool:
    """Feasibility probe for the polytope plus extra halfspaces."""
    a_ub, b_ub = _stack_rows(poly, extra_rows)
    res = _solver.lp(
        np.zeros(poly.dim), a_ub=a_ub, b_ub=b_ub, a_eq=poly.a_eq, b_eq=poly.b_eq
    )
    return res.status != _solver.INFEASIBLE


def lower_bound_rows(reward_vectors, bounds):
    """Halfspace rows encoding <R_i, d> >= b_i."""
    r = np.asarray(reward_vectors, dtype=float)
    b = np.asarray(bounds, dtype=float).reshape(-1)
    if r.shape[0] != b.shape[0]:
        raise ValueError("one bound per reward vector required")
    return [(-r[i], -b[i]) for i in range(r.shape[0])]


def pareto_complete(poly: OccupancyPolytope, lower_bounds, reward_vectors) -> OccupancyMeasure:
    """Welfare-maximizing point subject to per-agent return lower bounds.

    Maximizes ``sum_i <R_i, d>`` over ``{d in poly : <R_i, d> >= lb_i}``; the
    result is Pareto optimal among the feasible points because any dominating
    point would also satisfy the bounds and improve the welfare objective.
    """
    r = np.atleast_2d(np.asarray(reward_vectors, dtype=float))
    rows = lower_bound_rows(r, lower_bounds)
    sol = solve_lp(poly, rows, LinearObjective(r.sum(axis=0), MAXIMIZE))
    if sol.status == SolveStatus.INFEASIBLE:
        raise InfeasibleBounds("no policy meets all return lower bounds")
    if sol.status != SolveStatus.OPTIMAL:
        raise LpFailure("welfare completion did not reach optimality")
    return sol.point


def leximin(poly: OccupancyPolytope, reward_vectors) -> OccupancyMeasure:
    """Iterative leximin over agent returns.

    Repeatedly maximizes a floor ``t`` with ``<R_i, d> >= t`` for all unfixed
    agents, then pins every agent whose return cannot exceed the floor
    (checked by one LP per agent), until all agents are pinned.  Returns the
    welfare-maximizing point of the final region.
    """
    r = np.atleast_2d(np.asarray(reward_vectors, dtype=float))
    n_agents, dim = r.shape
    if dim != poly.dim:
        raise ValueError("reward vectors must match the polytope dimension")
    fixed: dict[int, float] = {}
    while len(fixed) < n_agents:
        unfixed = [i for i in range(n_agents) if i not in fixed]
        t_star = _max_floor(poly, r, unfixed, fixed)
        caps = {}
        for i in unfixed:
            caps[i] = _max_single(poly, r, i, unfixed, fixed, t_star)
        newly = [i for i in unfixed if caps[i] <= t_star + FEAS_TOL]
        if not newly:
            # numerically everyone can improve a hair; pin the most constrained
            newly = [min(unfixed, key=lambda i: (caps[i], i))]
        for i in newly:
            fixed[i] = t_star
    return pareto_complete(poly, [fixed[i] for i in range(n_agents)], r)


def _max_floor(poly, r, unfixed, fixed) -> float:
    """max t  s.t.  J_i >= t (unfixed),  J_j >= v_j (fixed)."""
    dim = poly.dim
    n_rows_u = len(unfixed)
    a_ub = np.zeros((poly.a_ub.shape[0] + n_rows_u + len(fixed), dim + 1))
    b_ub = np.zeros(a_ub.shape[0])
    a_ub[: poly.a_ub.shape[0], :dim] = poly.a_ub
    b_ub[: poly.a_ub.shape[0]] = poly.b_ub
    k = poly.a_ub.shape[0]
    for i in unfixed:
        a_ub[k, :dim] = -r[i]
        a_ub[k, dim] = 1.0
        k += 1
    for j, v in sorted(fixed.items()):
        a_ub[k, :dim] = -r[j]
        b_ub[k] = -v
        k += 1
    a_eq = np.hstack([poly.a_eq, np.zeros((poly.a_eq.shape[0], 1))])
    c = np.zeros(dim + 1)
    c[dim] = -1.0
    res = _solver.lp(c, a_ub=a_ub, b_ub=b_ub, a_eq=a_eq, b_eq=poly.b_eq)
    if res.status != _solver.OPTIMAL:
        raise LpFailure("leximin floor LP did not solve")
    return float(-res.fun)


def _max_single(poly, r, target, unfixed, fixed, t_star) -> float:
    rows = []
    for i in unfixed:
        rows.append((-r[i], -t_star))
    for j, v in sorted(fixed.items()):
        rows.append((-r[j], -v))
    sol = solve_lp(poly, rows, LinearObjective(r[target], MAXIMIZE))
    if sol.status != SolveStatus.OPTIMAL:
        raise LpFailure("leximin probe LP did not solve")
    return sol.objective_value


# --- branch and bound --------------------------------------------------------


def _relaxation_system(p: MilpProgram):
    """Build the shared LP relaxation matrices over variables [d ; z]."""
    poly = p.base
    nd, nz = poly.dim, len(p.binaries)
    width = nd + nz
    rows = [np.hstack([poly.a_ub, np.zeros((poly.a_ub.shape[0], nz))])]
    rhs = [poly.b_ub]
    act = np.zeros((nz, width))
    for j, b in enumerate(p.binaries):
        act[j, :nd] = -b.row_coeffs
        act[j, nd + j] = b.row_lb
    rows.append(act)
    rhs.append(np.zeros(nz))
    if p.binary_rows:
        brows = np.zeros((len(p.binary_rows), width))
        brhs = np.zeros(len(p.binary_rows))
        for k, (coeffs, ub) in enumerate(p.binary_rows):
            brows[k, nd:] = coeffs
            brhs[k] = ub
        rows.append(brows)
        rhs.append(brhs)
    if p.mixed_rows:
        mrows = np.zeros((len(p.mixed_rows), width))
        mrhs = np.zeros(len(p.mixed_rows))
        for k, (dc, zc, ub) in enumerate(p.mixed_rows):
            mrows[k, :nd] = dc
            mrows[k, nd:] = zc
            mrhs[k] = ub
        rows.append(mrows)
        rhs.append(mrhs)
    a_ub = np.vstack(rows)
    b_ub = np.concatenate(rhs)
    a_eq = np.hstack([poly.a_eq, np.zeros((poly.a_eq.shape[0], nz))])
    c = np.zeros(width)
    if p.d_coeffs is not None:
        c[:nd] = -p.d_coeffs
    c[nd:] = -np.asarray([b.weight for b in p.binaries], dtype=float)
    return c, a_ub, b_ub, a_eq, poly.b_eq


def milp_solve(p: MilpProgram, node_budget: int = DEFAULT_NODE_BUDGET) -> Solution:
    """Globally optimal solve by best-bound branch and bound on LP relaxations.

    Branching picks the most fractional binary (ties to the lowest index);
    the one-branch is enqueued first so ties in the best-bound heap dive
    toward activated binaries.  The search is deterministic: node order,
    branching, and incumbent updates depend only on the input.
    """
    nd, nz = p.base.dim, len(p.binaries)
    c, a_ub, b_ub, a_eq, b_eq = _relaxation_system(p)
    if nz == 0:
        res = _solver.lp(c, a_ub=a_ub, b_ub=b_ub, a_eq=a_eq, b_eq=b_eq)
        if res.status == _solver.INFEASIBLE:
            return Solution(status=SolveStatus.INFEASIBLE)
        return Solution(
            status=SolveStatus.OPTIMAL,
            point=_measure_from_vector(res.x[:nd], p.base),
            objective_value=float(-res.fun),
            binary_assignment=(),
        )

    def solve_node(lo, hi):
        bounds = [(None, None)] * nd + list(zip(lo, hi))
        return _solver.lp(c, a_ub=a_ub, b_ub=b_ub, a_eq=a_eq, b_eq=b_eq, bounds=bounds)

    act_rows = np.stack([b.row_coeffs for b in p.binaries])
    act_lbs = np.asarray([b.row_lb for b in p.binaries])
    weights = np.asarray([b.weight for b in p.binaries])

    def primal_heuristic(x, lo):
        """Feasible assignment from a relaxation point: keep every binary whose
        activation row already holds at the point (and any pinned to one).
        Returns (value, full_x) or None when a tightening row blocks it."""
        d = x[:nd]
        z = ((act_rows @ d >= act_lbs - 1e-12) | (lo > 0.5)).astype(float)
        for coeffs, ub in p.binary_rows:
            if float(coeffs @ z) > ub + 1e-9:
                return None
        for dc, zc, ub in p.mixed_rows:
            if float(dc @ d + zc @ z) > ub + 1e-9:
                return None
        value = float(weights @ z)
        if p.d_coeffs is not None:
            value += float(p.d_coeffs @ d)
        return value, np.concatenate([d, z])

    best_value = -np.inf
    best_x = None
    counter = 0
    root_lo, root_hi = np.zeros(nz), np.ones(nz)
    root = solve_node(root_lo, root_hi)
    nodes = 1
    if root.status == _solver.INFEASIBLE:
        return Solution(status=SolveStatus.INFEASIBLE, nodes=nodes)
    heap = [(-float(-root.fun), counter, root_lo, root_hi, root)]
    exhausted = False
    # best-bound restarts from the heap; from each restart, dive depth-first
    # toward the more promising child so incumbents (and pruning) arrive early
    while heap and not exhausted:
        neg_bound, _, lo, hi, res = heapq.heappop(heap)
        if -neg_bound <= best_value + BOUND_TOL:
            continue
        while True:
            if float(-res.fun) <= best_value + BOUND_TOL:
                break
            rounded = primal_heuristic(res.x, lo)
            if rounded is not None and rounded[0] > best_value + BOUND_TOL:
                best_value, best_x = rounded
            if float(-res.fun) <= best_value + BOUND_TOL:
                break
            z = res.x[nd:]
            frac = np.abs(z - np.round(z))
            if float(frac.max(initial=0.0)) <= INTEGRALITY_TOL:
                # verify by re-solving with the binaries pinned; a relaxation
                # optimum integral only within rounding tolerance can still be
                # infeasible once truly fixed, and must not become incumbent
                z_fix = np.round(z)
                fixed = solve_node(z_fix, z_fix)
                nodes += 1
                if fixed.status == _solver.OPTIMAL:
                    value = float(-fixed.fun)
                    if value > best_value + BOUND_TOL:
                        best_value = value
                        best_x = fixed.x
                    break
                # pinning failed: branch on the least-integral free binary
            free = np.flatnonzero(lo < hi)
            if free.size == 0 or nodes + 2 > node_budget:
                exhausted = free.size > 0
                break
            j = int(free[np.argmin(np.abs(z[free] - 0.5))])
            children = []
            for branch_value in (1.0, 0.0):
                child_lo, child_hi = lo.copy(), hi.copy()
                child_lo[j] = child_hi[j] = branch_value
                child = solve_node(child_lo, child_hi)
                nodes += 1
                if child.status == _solver.INFEASIBLE:
                    continue
                child_bound = float(-child.fun)
                if child_bound <= best_value + BOUND_TOL:
                    continue
                children.append((child_bound, branch_value, child_lo, child_hi, child))
            if not children:
                break
            children.sort(key=lambda c: (-c[0], -c[1]))
            for child_bound, _, child_lo, child_hi, child in children[1:]:
                counter += 1
                heapq.heappush(
                    heap, (-child_bound, counter, child_lo, child_hi, child)
                )
            _, _, lo, hi, res = children[0]
    if exhausted:
        status = SolveStatus.ITERATION_LIMIT
    elif best_x is None:
        # every leaf was infeasible, which the vacuous z = 0 assignment rules out
        return Solution(status=SolveStatus.INFEASIBLE, nodes=nodes)
    else:
        status = SolveStatus.OPTIMAL
    if best_x is None:
        return Solution(status=status, nodes=nodes)
    assignment = tuple(int(round(v)) for v in best_x[nd:])
    return Solution(
        status=status,
        point=_measure_from_vector(best_x[:nd], p.base),
        objective_value=float(best_value),
        binary_assignment=assignment,
        nodes=nodes,
    )


def enumerate_milp(p: MilpProgram) -> Solution:
    """Exhaustive oracle: check every binary assignment with one LP each.

    Independent of the branch-and-bound path; intended for cross-checking on
    programs with few binaries.
    """
    nz = len(p.binaries)
    if nz > 20:
        raise ValueError("enumeration oracle limited to 20 binaries")
    weights = np.asarray([b.weight for b in p.binaries], dtype=float)
    best = None
    for mask in range(2**nz):
        z = np.array([(mask >> j) & 1 for j in range(nz)], dtype=float)
        rows = [
            (-p.binaries[j].row_coeffs, -p.binaries[j].row_lb)
            for j in range(nz)
            if z[j] > 0.5
        ]
        for dc, zc, ub in p.mixed_rows:
            rows.append((dc, ub - float(zc @ z)))
        ok = True
        for coeffs, ub in p.binary_rows:
            if float(coeffs @ z) > ub + 1e-9:
                ok = False
                break
        if not ok:
            continue
        obj = LinearObjective(
            p.d_coeffs if p.d_coeffs is not None else np.zeros(p.base.dim), MAXIMIZE
        )
        sol = solve_lp(p.base, rows, obj)
        if sol.status != SolveStatus.OPTIMAL:
            continue
        value = sol.objective_value + float(weights @ z)
        if best is None or value > best.objective_value + BOUND_TOL:
            best = Solution(
                status=SolveStatus.OPTIMAL,
                point=sol.point,
                objective_value=value,
                binary_assignment=tuple(int(v) for v in z),
            )
    if best is None:
        return Solution(status=SolveStatus.INFEASIBLE)
    return best


def dump_lp(poly: OccupancyPolytope, extra_rows, obj: LinearObjective) -> str:
    """Plain-text dump of an LP for external cross-checks.

    Format: one header line ``lp <sense> <dim>``, one ``obj`` line with the
    coefficients, then ``le``/``eq`` lines with ``coeffs... : bound``.
    """
    a_ub, b_ub = _stack_rows(poly, extra_rows)
    lines = [f"lp {obj.sense} {poly.dim}"]
    lines.append("obj " + " ".join(repr(v) for v in obj.coeffs))
    for row, bound in zip(a_ub, b_ub):
        lines.append("le " + " ".join(repr(v) for v in row) + " : " + repr(float(bound)))
    for row, bound in zip(poly.a_eq, poly.b_eq):
        lines.append("eq " + " ".join(repr(v) for v in row) + " : " + repr(float(bound)))
    return "\n".join(lines) + "\n"
