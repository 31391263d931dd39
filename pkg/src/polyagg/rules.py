"""Aggregation rules over the occupancy polytope.

Every rule expects a model whose rewards have already been normalized (each
agent's return spans [0, 1] over the polytope), takes the shared volumetric
estimates (a sample cloud or per-agent return CDFs), and returns a
:class:`RuleResult` whose occupancy measure has been completed to a
welfare-maximizing, hence Pareto-optimal, point of the rule's feasible set.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import _solver, lp, volume
from .errors import ConcaveRegionEmpty, DegeneratePolytope, LpFailure, MilpBudgetExhausted
from .mdp import Momdp, OccupancyMeasure, OccupancyPolytope, Policy, occupancy_to_policy
from .volume import ReturnCdf, SampleCloud

PLURALITY_SLACK = 1e-6   # alpha = 1 threshold is 1 minus this, absorbing LP slack
VETO_BISECTIONS = 30
COMPLETION_RELAX = 1e-9  # loosen achieved-return bounds by this much


@dataclass(frozen=True, eq=False)
class Diagnostics:
    lp_solves: int
    samples_used: int
    wall_time: float


@dataclass(frozen=True, eq=False)
class RuleResult:
    occupancy: OccupancyMeasure
    policy: Policy
    returns: np.ndarray
    certificate: object
    diagnostics: Diagnostics

    def __post_init__(self):
        r = np.array(self.returns, dtype=float, copy=True)
        r.flags.writeable = False
        object.__setattr__(self, "returns", r)


@dataclass(frozen=True, eq=False)
class VetoCertificate:
    epsilon: float
    delta: float               # per-agent cut budget 1/n - eps/(n+1)
    order: tuple[int, ...]
    thresholds: tuple[float, ...]
    cut_fractions: tuple[float, ...]  # measured against the original polytope


@dataclass(frozen=True, eq=False)
class QuantileCertificate:
    q_star: float
    thresholds: tuple[float, ...]
    infeasible_above: float | None  # first grid level found infeasible, if any


@dataclass(frozen=True, eq=False)
class ApprovalCertificate:
    alpha: float
    approving_agents: tuple[int, ...]
    thresholds: tuple[float, ...]
    score: int


@dataclass(frozen=True, eq=False)
class BordaCertificate:
    epsilon: float
    level_indicators: tuple[tuple[int, ...], ...]  # [agent][level]
    rounded_score: float
    weights: tuple[tuple[float, ...], ...]


@dataclass(frozen=True, eq=False)
class ConcaveBordaCertificate:
    modes: tuple[float, ...]
    envelope_objective: float
    score: float


@dataclass(frozen=True, eq=False)
class WelfareCertificate:
    welfare: float


@dataclass(frozen=True, eq=False)
class LeximinCertificate:
    sorted_returns: tuple[float, ...]


class _Stopwatch:
    def __init__(self, samples_used: int = 0):
        self.t0 = time.perf_counter()
        self.solves0 = _solver.solve_count
        self.samples_used = samples_used

    def diagnostics(self) -> Diagnostics:
        return Diagnostics(
            lp_solves=_solver.solve_count - self.solves0,
            samples_used=self.samples_used,
            wall_time=time.perf_counter() - self.t0,
        )


def _finish(m: Momdp, d: OccupancyMeasure, certificate, watch: _Stopwatch) -> RuleResult:
    returns = m.reward_vectors() @ d.flat
    return RuleResult(
        occupancy=d,
        policy=occupancy_to_policy(d),
        returns=returns,
        certificate=certificate,
        diagnostics=watch.diagnostics(),
    )


def utilitarian(m: Momdp, poly: OccupancyPolytope) -> RuleResult:
    """Maximize the sum of (normalized) returns with one LP."""
    watch = _Stopwatch()
    r = m.reward_vectors()
    point = lp.pareto_complete(poly, np.zeros(m.num_agents), r)
    welfare = float((r @ point.flat).sum())
    return _finish(m, point, WelfareCertificate(welfare=welfare), watch)


def egalitarian(m: Momdp, poly: OccupancyPolytope) -> RuleResult:
    """Lexicographically maximize the sorted return vector (iterative leximin)."""
    watch = _Stopwatch()
    r = m.reward_vectors()
    point = lp.leximin(poly, r)
    values = tuple(sorted(float(v) for v in r @ point.flat))
    return _finish(m, point, LeximinCertificate(sorted_returns=values), watch)


def veto_core(
    m: Momdp,
    poly: OccupancyPolytope,
    cloud: SampleCloud,
    epsilon: float,
    order=None,
) -> RuleResult:
    """Sequential proportional veto core.

    Agents take turns (in ``order``, default input order) cutting away the
    delta = 1/n - eps/(n+1) fraction of the *original* polytope's volume
    where their own return is lowest: a bisection over the threshold v_i
    finds the cut whose volume, measured on a fresh uniform sample of the
    current region and rescaled by the region's running volume fraction,
    matches delta.  Every bisection probe first re-checks by LP that the
    candidate region stays nonempty, so over-cutting backs off to the last
    feasible threshold.  The returned point is the welfare-maximizing point
    of the final region.
    """
    n = m.num_agents
    if not 0.0 < epsilon < 1.0 / n:
        raise ValueError("epsilon must lie in (0, 1/n)")
    order = tuple(range(n)) if order is None else tuple(int(i) for i in order)
    if sorted(order) != list(range(n)):
        raise ValueError("order must be a permutation of the agents")
    watch = _Stopwatch(samples_used=cloud.count)
    delta = 1.0 / n - epsilon / (n + 1)
    rewards = m.reward_vectors()
    chart = cloud.chart if cloud.chart is not None else volume.affine_hull(poly)

    rows: list[tuple[np.ndarray, float]] = []
    thresholds = np.zeros(n)
    cut_fractions = np.zeros(n)
    remaining_fraction = 1.0
    for step, i in enumerate(order):
        region_cloud = _region_samples(poly, chart, rows, cloud, salt=step + 1)
        watch.samples_used += region_cloud.count
        returns_i = region_cloud.returns(rewards[i])
        target = min(delta / max(remaining_fraction, 1e-12), 1.0 - 1e-9)
        lo, hi = 0.0, 1.0
        for _ in range(VETO_BISECTIONS):
            mid = 0.5 * (lo + hi)
            candidate = rows + [(-rewards[i], -mid)]
            if not lp.feasible(poly, candidate):
                hi = mid
                continue
            if float(np.mean(returns_i <= mid)) <= target:
                lo = mid
            else:
                hi = mid
        v_i = lo
        in_region_cut = float(np.mean(returns_i <= v_i))
        thresholds[i] = v_i
        cut_fractions[i] = in_region_cut * remaining_fraction
        remaining_fraction *= 1.0 - in_region_cut
        rows.append((-rewards[i], -v_i))

    point = lp.pareto_complete(poly, thresholds, rewards)
    cert = VetoCertificate(
        epsilon=epsilon,
        delta=delta,
        order=order,
        thresholds=tuple(float(v) for v in thresholds),
        cut_fractions=tuple(float(c) for c in cut_fractions),
    )
    return _finish(m, point, cert, watch)


def _region_samples(poly, chart, rows, cloud, salt):
    """Fresh uniform samples of the polytope cut down by ``rows``.

    If the region is too thin to chart an interior, fall back to the base
    cloud's points that satisfy the rows (same law, fewer samples), so thin
    regions never surface an error from the sequential veto loop.
    """
    if not rows:
        return cloud
    if chart.dim == 0:
        return cloud
    try:
        region = volume.region_chart(poly, rows, chart)
    except DegeneratePolytope:
        keep = np.ones(cloud.count, dtype=bool)
        for coeffs, bound in rows:
            keep &= cloud.points @ np.asarray(coeffs) <= bound + 1e-9
        if not keep.any():
            raise
        return volume.SampleCloud(
            points=cloud.points[keep], seed=cloud.seed,
            walk_params=cloud.walk_params, chart=cloud.chart,
            table_shape=cloud.table_shape,
        )
    sub_seed = int(np.random.SeedSequence([cloud.seed, salt]).generate_state(1)[0])
    p = cloud.walk_params
    return volume.sample_uniform(
        poly, region, p.count, sub_seed,
        burn_in=p.burn_in, thinning=p.thinning, chains=p.chains,
        extra_rows=rows,
    )


def max_quantile(
    m: Momdp,
    poly: OccupancyPolytope,
    cdfs: list[ReturnCdf],
    epsilon: float = 0.01,
) -> RuleResult:
    """Largest q such that every agent can sit in their top q-fraction.

    Bisects q on the fixed grid {0, eps, 2 eps, ..., 1}; a level is feasible
    when the LP region {d : <R_i, d> >= F_i^{-1}(q) for all i} is nonempty.
    Returns the welfare-maximizing point at the best feasible level.
    """
    if epsilon <= 0 or epsilon > 0.5:
        raise ValueError("epsilon must lie in (0, 0.5]")
    watch = _Stopwatch()
    rewards = m.reward_vectors()
    grid = int(round(1.0 / epsilon))

    def thresholds_at(q: float) -> np.ndarray:
        return np.array([volume.quantile_inverse(cdf, q) for cdf in cdfs])

    def feasible_at(q: float) -> bool:
        return lp.feasible(poly, lp.lower_bound_rows(rewards, thresholds_at(q)))

    infeasible_above = None
    if feasible_at(1.0):
        q_star = 1.0
    else:
        lo, hi = 0, grid  # q = 0 is always feasible; q = 1 just failed
        infeasible_above = 1.0
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if feasible_at(mid * epsilon):
                lo = mid
            else:
                hi = mid
                infeasible_above = mid * epsilon
        q_star = lo * epsilon
    tau = thresholds_at(q_star)
    point = lp.pareto_complete(poly, tau, rewards)
    cert = QuantileCertificate(
        q_star=float(q_star),
        thresholds=tuple(float(t) for t in tau),
        infeasible_above=infeasible_above,
    )
    return _finish(m, point, cert, watch)


def approval_program(
    m: Momdp,
    poly: OccupancyPolytope,
    cdfs: list[ReturnCdf] | None,
    alpha: float,
) -> tuple[lp.MilpProgram, np.ndarray]:
    """The approval indicator program and its per-agent thresholds."""
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    rewards = m.reward_vectors()
    n = m.num_agents
    if alpha >= 1.0:
        tau = np.full(n, 1.0 - PLURALITY_SLACK)
    else:
        if cdfs is None:
            raise ValueError("alpha < 1 needs per-agent return CDFs")
        tau = np.array([volume.quantile_inverse(cdfs[i], alpha) for i in range(n)])
    program = lp.MilpProgram(
        base=poly,
        binaries=tuple(
            lp.BinaryVar(weight=1.0, row_coeffs=rewards[i], row_lb=float(tau[i]))
            for i in range(n)
        ),
    )
    return program, tau


def alpha_approval(
    m: Momdp,
    poly: OccupancyPolytope,
    cdfs: list[ReturnCdf] | None,
    alpha: float,
    node_budget: int = lp.DEFAULT_NODE_BUDGET,
) -> RuleResult:
    """Maximize the number of agents whose return clears their alpha-quantile.

    Solves the indicator MILP ``max sum_i a_i`` with rows
    ``a_i * F_i^{-1}(alpha) <= <R_i, d>`` exactly (no big-M: the row is
    vacuous at a_i = 0 because normalized returns are nonnegative), then
    welfare-completes while preserving the winning approval set.  Plurality
    is alpha = 1, whose threshold is 1 - 1e-6 to absorb LP slack.
    """
    watch = _Stopwatch()
    rewards = m.reward_vectors()
    n = m.num_agents
    program, tau = approval_program(m, poly, cdfs, alpha)
    sol = lp.milp_solve(program, node_budget=node_budget)
    if sol.status == lp.SolveStatus.ITERATION_LIMIT:
        raise MilpBudgetExhausted("approval MILP ran out of branch-and-bound nodes")
    if sol.status != lp.SolveStatus.OPTIMAL:
        raise LpFailure("approval MILP did not solve")
    approving = tuple(i for i, z in enumerate(sol.binary_assignment) if z)
    bounds = np.zeros(n)
    for i in approving:
        bounds[i] = tau[i]
    point = lp.pareto_complete(poly, bounds, rewards)
    cert = ApprovalCertificate(
        alpha=alpha,
        approving_agents=approving,
        thresholds=tuple(float(t) for t in tau),
        score=len(approving),
    )
    return _finish(m, point, cert, watch)


def plurality(m: Momdp, poly: OccupancyPolytope, **kwargs) -> RuleResult:
    """Approval at alpha = 1: approve only return-optimal policies."""
    return alpha_approval(m, poly, None, alpha=1.0, **kwargs)


def borda_milp(
    m: Momdp,
    poly: OccupancyPolytope,
    cdfs: list[ReturnCdf],
    epsilon: float = 0.05,
    node_budget: int = lp.DEFAULT_NODE_BUDGET,
) -> RuleResult:
    """Approximate Borda winner via level-indicator MILP.

    For each agent, 1/eps binaries a_{i,k} mark the eps-rounded return levels
    k*eps; the objective weights each indicator by the cdf increment
    F_i(k eps) - F_i((k-1) eps), so the optimum attains at least the best
    Borda score among eps-rounded return vectors.  Redundant monotone rows
    a_{i,k+1} <= a_{i,k} tighten the relaxation.  The final point is
    welfare-completed with bounds at the achieved returns.
    """
    levels = 1.0 / epsilon
    if abs(levels - round(levels)) > 1e-9:
        raise ValueError("1/epsilon must be an integer")
    k_max = int(round(levels))
    watch = _Stopwatch()
    rewards = m.reward_vectors()
    n = m.num_agents

    weights = np.zeros((n, k_max))
    for i in range(n):
        grid = np.arange(k_max + 1) * epsilon
        values = np.asarray(cdfs[i].evaluate(grid))
        weights[i] = np.diff(values)

    binaries = []
    for i in range(n):
        for k in range(1, k_max + 1):
            binaries.append(
                lp.BinaryVar(
                    weight=float(weights[i, k - 1]),
                    row_coeffs=rewards[i],
                    row_lb=float(k * epsilon),
                )
            )
    binary_rows = []
    for i in range(n):
        base = i * k_max
        for k in range(k_max - 1):
            row = np.zeros(len(binaries))
            row[base + k + 1] = 1.0
            row[base + k] = -1.0
            binary_rows.append((row, 0.0))
    # aggregate tightening per agent: active levels cover at most the return,
    # epsilon * sum_k a_{i,k} <= <R_i, d>; valid for every intended assignment
    # and it pins the relaxation to the step function's concave envelope
    mixed_rows = []
    for i in range(n):
        zc = np.zeros(len(binaries))
        zc[i * k_max:(i + 1) * k_max] = epsilon
        mixed_rows.append((-rewards[i], zc, 0.0))
    program = lp.MilpProgram(
        base=poly, binaries=tuple(binaries), binary_rows=tuple(binary_rows),
        mixed_rows=tuple(mixed_rows),
    )
    sol = lp.milp_solve(program, node_budget=node_budget)
    if sol.status == lp.SolveStatus.ITERATION_LIMIT:
        raise MilpBudgetExhausted("Borda MILP ran out of branch-and-bound nodes")
    if sol.status != lp.SolveStatus.OPTIMAL:
        raise LpFailure("Borda MILP did not solve")
    achieved = rewards @ sol.point.flat
    point = lp.pareto_complete(poly, achieved - COMPLETION_RELAX, rewards)
    indicators = tuple(
        tuple(sol.binary_assignment[i * k_max + k] for k in range(k_max))
        for i in range(n)
    )
    cert = BordaCertificate(
        epsilon=epsilon,
        level_indicators=indicators,
        rounded_score=float(sol.objective_value),
        weights=tuple(tuple(float(w) for w in weights[i]) for i in range(n)),
    )
    return _finish(m, point, cert, watch)


def borda_concave(
    m: Momdp,
    poly: OccupancyPolytope,
    cdfs: list[ReturnCdf],
    knots: int = 20,
) -> RuleResult:
    """Borda winner restricted to the region past every density mode.

    There each F_i is concave, so maximizing ``sum_i F_i(<R_i, d>)`` becomes
    one LP over hypograph variables bounded by the piecewise-linear concave
    upper envelope of F_i sampled at ``knots`` points on [mode_i, 1].  Raises
    :class:`ConcaveRegionEmpty` when no policy clears every mode (callers
    should fall back to the MILP variant).
    """
    watch = _Stopwatch()
    rewards = m.reward_vectors()
    n = m.num_agents
    modes = np.array([volume.mode_estimate(cdf) for cdf in cdfs])
    mode_rows = lp.lower_bound_rows(rewards, modes)
    if not lp.feasible(poly, mode_rows):
        raise ConcaveRegionEmpty("no policy reaches every agent's density mode")

    nd = poly.dim
    width = nd + n
    ub_rows = []
    ub_rhs = []
    for row, bound in zip(poly.a_ub, poly.b_ub):
        ub_rows.append(np.concatenate([row, np.zeros(n)]))
        ub_rhs.append(float(bound))
    for coeffs, bound in mode_rows:
        ub_rows.append(np.concatenate([coeffs, np.zeros(n)]))
        ub_rhs.append(float(bound))
    for i in range(n):
        envelope = _concave_envelope(cdfs[i], modes[i], knots)
        for slope, intercept in envelope:
            # t_i <= slope * <R_i, d> + intercept
            row = np.zeros(width)
            row[:nd] = -slope * rewards[i]
            row[nd + i] = 1.0
            ub_rows.append(row)
            ub_rhs.append(float(intercept))
    a_eq = np.hstack([poly.a_eq, np.zeros((poly.a_eq.shape[0], n))])
    c = np.zeros(width)
    c[nd:] = -1.0
    res = _solver.lp(c, a_ub=np.vstack(ub_rows), b_ub=np.asarray(ub_rhs),
                     a_eq=a_eq, b_eq=poly.b_eq)
    if res.status != _solver.OPTIMAL:
        raise LpFailure("concave Borda LP did not solve")
    achieved = rewards @ res.x[:nd]
    point = lp.pareto_complete(poly, achieved - COMPLETION_RELAX, rewards)
    score = float(sum(cdfs[i].evaluate(float(rewards[i] @ point.flat)) for i in range(n)))
    cert = ConcaveBordaCertificate(
        modes=tuple(float(v) for v in modes),
        envelope_objective=float(-res.fun),
        score=score,
    )
    return _finish(m, point, cert, watch)


def _concave_envelope(cdf: ReturnCdf, mode: float, knots: int):
    """Line segments (slope, intercept) of the concave majorant of F on [mode, 1]."""
    hi = max(1.0, mode + 1e-6)
    xs = np.linspace(mode, hi, knots)
    ys = np.asarray(cdf.evaluate(xs))
    hull = [0]
    for k in range(1, len(xs)):
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            cross = (ys[b] - ys[a]) * (xs[k] - xs[a]) - (ys[k] - ys[a]) * (xs[b] - xs[a])
            if cross <= 0:  # keeping b would bend convex-side; drop it
                hull.pop()
            else:
                break
        hull.append(k)
    segments = []
    for a, b in zip(hull[:-1], hull[1:]):
        if xs[b] == xs[a]:
            continue
        slope = (ys[b] - ys[a]) / (xs[b] - xs[a])
        segments.append((slope, ys[a] - slope * xs[a]))
    if not segments:
        segments.append((0.0, float(ys.max())))
    return segments
