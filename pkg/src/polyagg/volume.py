"""Volumetric oracle over the occupancy polytope.

The polytope's equality rows give it zero ambient volume, so all sampling
happens in intrinsic coordinates on its affine hull: an orthonormal null-space
basis of the equality system plus a strictly interior origin.  Volume-fraction
queries, per-agent return CDFs, quantile inversion, centroid and density-mode
estimates are all derived from one shared uniform sample cloud.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from . import _solver
from .errors import DegeneratePolytope
from .mdp import OccupancyMeasure, OccupancyPolytope

EMPIRICAL = "empirical"
LOGISTIC = "logistic"

HULL_EQ_TOL = 1e-9        # charted points satisfy equalities within this
INTERIOR_TOL = 1e-10      # minimum Chebyshev radius before degeneracy
DEFAULT_CHAINS = 64
LOGISTIC_MAX_DEV = 0.05   # reject a fit whose cdf deviates more than this
QUANTILE_REL_TOL = 1e-4   # bisection width, relative to the support


@dataclass(frozen=True, eq=False)
class HullChart:
    """Affine-hull parametrization x = origin + basis @ y, y in R^dim."""

    basis: np.ndarray   # (ambient, dim), orthonormal columns
    origin: np.ndarray  # strictly interior ambient point
    dim: int

    def to_ambient(self, y: np.ndarray) -> np.ndarray:
        return np.asarray(y, dtype=float) @ self.basis.T + self.origin

    def to_intrinsic(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.origin) @ self.basis


@dataclass(frozen=True)
class WalkParams:
    burn_in: int
    thinning: int
    count: int
    chains: int = DEFAULT_CHAINS


@dataclass(frozen=True, eq=False)
class SampleCloud:
    """Uniform samples of a polytope: a (count, ambient) matrix of points.

    Reproducible bit-for-bit from (seed, walk_params).  ``degenerate`` marks
    clouds over zero-dimensional polytopes, where every row is the unique
    feasible point.
    """

    points: np.ndarray
    seed: int
    walk_params: WalkParams
    chart: HullChart | None = None
    degenerate: bool = False
    table_shape: tuple[int, int] | None = None

    def __post_init__(self):
        pts = np.array(self.points, dtype=float, order="C", copy=True)
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    @property
    def count(self) -> int:
        return self.points.shape[0]

    def returns(self, reward_table) -> np.ndarray:
        """Per-sample returns <x, R> for one reward table (any shape)."""
        r = np.asarray(reward_table, dtype=float).reshape(-1)
        return self.points @ r


@dataclass(frozen=True, eq=False)
class FractionEstimate:
    fraction: float
    std_error: float
    count: int


@dataclass(frozen=True, eq=False)
class ReturnCdf:
    """Estimated cdf of one agent's return over the polytope.

    ``samples`` holds the sorted sample returns regardless of kind; the
    logistic kind additionally evaluates through fitted parameters
    ``(growth, midpoint, asymmetry)`` of ``(1 + exp(-B (v - M)))**(-nu)``.
    """

    agent: int | str
    kind: str
    samples: np.ndarray
    support: tuple[float, float]
    params: tuple[float, float, float] | None = None

    def __post_init__(self):
        s = np.array(self.samples, dtype=float, copy=True)
        s.sort()
        s.flags.writeable = False
        object.__setattr__(self, "samples", s)

    def evaluate(self, v):
        """F(v), vectorized; exactly 0/1 at or beyond the support edges."""
        v = np.asarray(v, dtype=float)
        lo, hi = self.support
        if self.kind == LOGISTIC:
            growth, midpoint, asymmetry = self.params
            z = np.clip(-growth * (v - midpoint), -700.0, 700.0)
            out = (1.0 + np.exp(z)) ** (-asymmetry)
            out = np.where(v <= lo, 0.0, out)
            out = np.where(v >= hi, 1.0, out)
        else:
            n = self.samples.shape[0]
            left = np.searchsorted(self.samples, v, side="left")
            right = np.searchsorted(self.samples, v, side="right")
            out = (left + right) / (2.0 * n)
            out = np.where(v <= lo, 0.0, out)
            out = np.where(v >= hi, 1.0, out)
        return out if out.ndim else float(out)


def affine_hull(poly: OccupancyPolytope) -> HullChart:
    """Chart the polytope's affine hull.

    The basis is the orthonormal null space of the equality rows (SVD,
    standard rank tolerance); the origin maximizes the minimum inequality
    slack (a Chebyshev-center LP in intrinsic coordinates).  If the polytope
    turns out to be flat against some inequality, that inequality is
    re-detected as an implicit equality and the chart is rebuilt once.
    """
    basis, particular = _null_space_chart(poly.a_eq, poly.b_eq, poly.dim)
    if basis.shape[1] == 0:
        _check_point_feasible(poly, particular)
        return HullChart(basis=basis, origin=particular, dim=0)
    origin, radius = _chebyshev_origin(poly, (), basis, particular)
    if radius > INTERIOR_TOL:
        return HullChart(basis=basis, origin=origin, dim=basis.shape[1])
    # flat: promote implicitly tight inequalities to equalities and retry
    tight = _implicit_equalities(poly)
    if not tight:
        raise DegeneratePolytope("polytope has no interior on its affine hull")
    a_eq = np.vstack([poly.a_eq, poly.a_ub[tight]])
    b_eq = np.concatenate([poly.b_eq, poly.b_ub[tight]])
    basis, particular = _null_space_chart(a_eq, b_eq, poly.dim)
    if basis.shape[1] == 0:
        _check_point_feasible(poly, particular)
        return HullChart(basis=basis, origin=particular, dim=0)
    origin, radius = _chebyshev_origin(poly, (), basis, particular)
    if radius <= INTERIOR_TOL:
        raise DegeneratePolytope("polytope has no interior after equality re-detection")
    return HullChart(basis=basis, origin=origin, dim=basis.shape[1])


def _null_space_chart(a_eq, b_eq, dim):
    if a_eq.shape[0] == 0:
        return np.eye(dim), np.zeros(dim)
    u, s, vt = np.linalg.svd(a_eq, full_matrices=True)
    tol = max(a_eq.shape) * np.finfo(float).eps * (s[0] if s.size else 0.0)
    rank = int(np.sum(s > tol))
    basis = vt[rank:].T
    particular, *_ = np.linalg.lstsq(a_eq, b_eq, rcond=None)
    return basis, particular


def _check_point_feasible(poly, x, tol=1e-7):
    if poly.a_ub.shape[0] and np.max(poly.a_ub @ x - poly.b_ub) > tol:
        raise DegeneratePolytope("equality system pins an infeasible point")


def _intrinsic_inequalities(poly, extra_rows, basis, origin):
    """Rows g x <= h become (g @ basis) y <= h - g @ origin."""
    rows = [poly.a_ub]
    rhs = [poly.b_ub]
    for coeffs, bound in extra_rows:
        rows.append(np.asarray(coeffs, dtype=float).reshape(1, -1))
        rhs.append(np.asarray([bound], dtype=float))
    g = np.vstack(rows)
    h = np.concatenate(rhs)
    gy = g @ basis
    hy = h - g @ origin
    return gy, hy


def _chebyshev_origin(poly, extra_rows, basis, particular):
    """Interior point maximizing the minimum slack, in intrinsic coordinates."""
    gy, hy = _intrinsic_inequalities(poly, extra_rows, basis, particular)
    norms = np.linalg.norm(gy, axis=1)
    active = norms > 1e-12
    if not np.any(active):
        return particular, np.inf
    k = int(active.sum())
    dim = basis.shape[1]
    a_ub = np.zeros((k, dim + 1))
    a_ub[:, :dim] = gy[active]
    a_ub[:, dim] = norms[active]
    c = np.zeros(dim + 1)
    c[dim] = -1.0
    res = _solver.lp(c, a_ub=a_ub, b_ub=hy[active])
    if res.status != _solver.OPTIMAL:
        raise DegeneratePolytope("Chebyshev-center LP failed")
    y = res.x[:dim]
    radius = float(res.x[dim])
    return particular + basis @ y, radius


def _implicit_equalities(poly):
    """Indices of inequality rows whose slack is zero over the whole polytope."""
    tight = []
    for i in range(poly.a_ub.shape[0]):
        res = _solver.lp(
            -poly.a_ub[i], a_ub=poly.a_ub, b_ub=poly.b_ub,
            a_eq=poly.a_eq, b_eq=poly.b_eq,
        )
        if res.status != _solver.OPTIMAL:
            continue
        max_slack = poly.b_ub[i] - float(-res.fun)
        if max_slack <= INTERIOR_TOL:
            tight.append(i)
    return tight


def region_chart(poly: OccupancyPolytope, extra_rows, base: HullChart) -> HullChart:
    """Re-center a chart inside the polytope intersected with extra halfspaces.

    The affine hull (basis) is unchanged; only the interior origin moves.
    Raises :class:`DegeneratePolytope` when the region has no interior.
    """
    if base.dim == 0:
        return base
    origin, radius = _chebyshev_origin(poly, extra_rows, base.basis, base.origin)
    if radius <= INTERIOR_TOL:
        raise DegeneratePolytope("region has no interior on the hull")
    return HullChart(basis=base.basis, origin=origin, dim=base.dim)


def sample_uniform(
    poly: OccupancyPolytope,
    chart: HullChart,
    count: int,
    seed: int,
    burn_in: int | None = None,
    thinning: int | None = None,
    chains: int = DEFAULT_CHAINS,
    extra_rows=(),
) -> SampleCloud:
    """Asymptotically uniform samples via hit-and-run on the affine hull.

    Runs ``chains`` walkers in lockstep from the chart origin under a single
    seeded generator: each step picks an isotropic direction, intersects the
    chord with every inequality, and jumps to a uniform point of the chord.
    After ``burn_in`` steps (default 1000 * dim) every ``thinning``-th state
    (default dim) is recorded per chain; the cloud concatenates the chains'
    records in chain-major order and truncates to ``count``.

    A zero-dimensional chart cannot be walked: the unique feasible point is
    repeated ``count`` times and the cloud is flagged degenerate.
    """
    if count < 1:
        raise ValueError("count must be positive")
    dim = chart.dim
    if dim == 0:
        params = WalkParams(burn_in=0, thinning=1, count=count, chains=1)
        warnings.warn("sampling a zero-dimensional polytope: repeating its point")
        pts = np.tile(chart.origin, (count, 1))
        return SampleCloud(points=pts, seed=seed, walk_params=params,
                           chart=chart, degenerate=True,
                           table_shape=poly.table_shape)
    burn_in = 1000 * dim if burn_in is None else int(burn_in)
    thinning = dim if thinning is None else int(thinning)
    if thinning < 1 or burn_in < 0 or chains < 1:
        raise ValueError("bad walk parameters")
    params = WalkParams(burn_in=burn_in, thinning=thinning, count=count, chains=chains)

    gy, hy = _intrinsic_inequalities(poly, extra_rows, chart.basis, chart.origin)
    keep = np.linalg.norm(gy, axis=1) > 1e-12
    gy, hy = gy[keep], hy[keep]
    if np.any(hy < 0):
        raise DegeneratePolytope("chart origin is not interior to the region")

    rng = np.random.default_rng(seed)
    per_chain = -(-count // chains)
    total_steps = burn_in + per_chain * thinning
    gy_t = np.ascontiguousarray(gy.T)
    y = np.zeros((chains, dim))
    slack = np.tile(hy, (chains, 1))
    records = np.empty((per_chain, chains, dim))
    rec = 0
    along = np.empty((chains, gy.shape[0]))
    hi_buf = np.empty_like(along)
    lo_buf = np.empty_like(along)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        for step in range(total_steps):
            direction = rng.standard_normal((chains, dim))
            np.matmul(direction, gy_t, out=along)
            np.divide(slack, along, out=hi_buf)
            np.copyto(lo_buf, hi_buf)
            np.copyto(hi_buf, np.inf, where=along <= 1e-14)
            np.copyto(lo_buf, -np.inf, where=along >= -1e-14)
            t_hi = hi_buf.min(axis=1)
            t_lo = lo_buf.max(axis=1)
            np.copyto(t_hi, 0.0, where=~np.isfinite(t_hi))
            np.copyto(t_lo, 0.0, where=~np.isfinite(t_lo))
            t = t_lo + (t_hi - t_lo) * rng.random(chains)
            np.copyto(t, 0.0, where=t_hi < t_lo)
            y += t[:, None] * direction
            slack -= t[:, None] * along
            if (step + 1) % 512 == 0:
                slack = hy[None, :] - y @ gy.T  # resync against drift
            if step >= burn_in and (step - burn_in + 1) % thinning == 0:
                records[rec] = y
                rec += 1
    flat = records.transpose(1, 0, 2).reshape(chains * per_chain, dim)[:count]
    ambient = chart.to_ambient(flat)
    return SampleCloud(points=ambient, seed=seed, walk_params=params, chart=chart,
                       table_shape=poly.table_shape)


def vol_fraction(cloud: SampleCloud, halfspace) -> FractionEstimate:
    """Fraction of samples with ``coeffs @ x <= bound``, with its standard error."""
    coeffs, bound = halfspace
    values = cloud.returns(coeffs)
    hits = values <= bound
    n = cloud.count
    frac = float(hits.mean())
    se = float(np.sqrt(frac * (1.0 - frac) / n))
    return FractionEstimate(fraction=frac, std_error=se, count=n)


def estimate_cdf(cloud: SampleCloud, reward_table, kind: str = EMPIRICAL,
                 agent: int | str = 0) -> ReturnCdf:
    """Estimate one agent's return cdf from the shared cloud.

    The empirical kind evaluates by midpoint rank over the sorted sample
    returns.  The logistic kind least-squares fits the generalized logistic
    family ``(1 + exp(-B (v - M)))**(-nu)`` to the empirical cdf and falls
    back to the empirical kind when the fit strays more than 0.05 anywhere
    on the sample-quantile grid.
    """
    values = np.sort(cloud.returns(reward_table))
    support = (float(values[0]), float(values[-1]))
    if kind == EMPIRICAL:
        return ReturnCdf(agent=agent, kind=EMPIRICAL, samples=values, support=support)
    if kind != LOGISTIC:
        raise ValueError(f"unknown cdf kind {kind!r}")
    params = _fit_generalized_logistic(values)
    if params is not None:
        fitted = ReturnCdf(agent=agent, kind=LOGISTIC, samples=values,
                           support=support, params=params)
        if _logistic_fit_acceptable(fitted, values):
            return fitted
    return ReturnCdf(agent=agent, kind=EMPIRICAL, samples=values, support=support)


def _fit_generalized_logistic(sorted_values):
    n = sorted_values.shape[0]
    span = sorted_values[-1] - sorted_values[0]
    if span <= 0:
        return None
    grid = np.unique(np.linspace(0, n - 1, num=min(n, 512)).astype(int))
    v = sorted_values[grid]
    p = (grid + 0.5) / n
    scale = np.std(sorted_values)
    if scale <= 0:
        return None
    x0 = np.array([4.0 / scale, float(np.median(sorted_values)), 1.0])

    def residual(theta):
        growth, midpoint, asymmetry = theta
        z = np.clip(-growth * (v - midpoint), -700.0, 700.0)
        return (1.0 + np.exp(z)) ** (-asymmetry) - p

    try:
        fit = least_squares(
            residual, x0,
            bounds=([1e-8, sorted_values[0] - 10 * span, 1e-8],
                    [1e8, sorted_values[-1] + 10 * span, 1e6]),
            max_nfev=200,
        )
    except Exception:
        return None
    if not np.all(np.isfinite(fit.x)):
        return None
    return tuple(float(t) for t in fit.x)


def _logistic_fit_acceptable(cdf: ReturnCdf, sorted_values) -> bool:
    # the check grid reaches both sample extremes, so tail misfit beyond
    # LOGISTIC_MAX_DEV rejects too; evaluation clamps to exactly 0/1 at the
    # support edges either way
    n = sorted_values.shape[0]
    grid = np.unique(np.linspace(0, n - 1, num=min(n, 1024)).astype(int))
    v = sorted_values[grid]
    p = (grid + 0.5) / n
    growth, midpoint, asymmetry = cdf.params
    z = np.clip(-growth * (v - midpoint), -700.0, 700.0)
    fit_vals = (1.0 + np.exp(z)) ** (-asymmetry)
    return float(np.max(np.abs(fit_vals - p))) <= LOGISTIC_MAX_DEV


def quantile_inverse(cdf: ReturnCdf, q: float) -> float:
    """Smallest v in the support with F(v) >= q, by bisection.

    The search stops at width 1e-4 of the support, so it costs
    O(log(1/delta)) cdf evaluations.
    """
    if not 0.0 <= q <= 1.0:
        raise ValueError("q must lie in [0, 1]")
    lo, hi = cdf.support
    if q <= 0.0:
        return lo
    if lo == hi:
        return lo
    delta = QUANTILE_REL_TOL * (hi - lo)
    while hi - lo > delta:
        mid = 0.5 * (lo + hi)
        if cdf.evaluate(mid) >= q:
            hi = mid
        else:
            lo = mid
    return float(hi)


def centroid_point(cloud: SampleCloud) -> np.ndarray:
    """Coordinate-wise sample mean, re-projected onto the equality subspace.

    The projection through the hull chart guards against accumulated drift
    off the equality rows.
    """
    mean = cloud.points.mean(axis=0)
    if cloud.chart is not None:
        chart = cloud.chart
        mean = chart.origin + chart.basis @ ((mean - chart.origin) @ chart.basis)
    return mean


def centroid_estimate(cloud: SampleCloud) -> OccupancyMeasure:
    """Centroid of an occupancy polytope as a typed occupancy measure."""
    mean = centroid_point(cloud)
    shape = cloud.table_shape or (1, cloud.points.shape[1])
    return OccupancyMeasure(table=mean.reshape(shape))


def mode_estimate(cdf: ReturnCdf, bins: int = 100) -> float:
    """Density mode via a 100-bin histogram of the sample returns.

    Ties break toward the lower return (``argmax`` picks the first maximal
    bin); a flat density therefore reports its lowest bin.
    """
    lo, hi = cdf.support
    if hi <= lo:
        return lo
    counts, edges = np.histogram(cdf.samples, bins=bins, range=(lo, hi))
    k = int(np.argmax(counts))
    return float(0.5 * (edges[k] + edges[k + 1]))


# --- cloud CSV interchange ---------------------------------------------------
#
# Column order: the flattened (s, a) row-major coordinates of each point.
# Header comment lines carry seed and walk parameters; floats are written
# with 17 significant digits so points reload bit-for-bit.


def save_cloud(cloud: SampleCloud, path) -> None:
    p = cloud.walk_params
    header = (
        f"polyagg-cloud seed={cloud.seed} burn_in={p.burn_in} thinning={p.thinning} "
        f"count={p.count} chains={p.chains} degenerate={int(cloud.degenerate)}"
    )
    np.savetxt(path, cloud.points, delimiter=",", fmt="%.17g", header=header)


def load_cloud(path) -> SampleCloud:
    with open(path) as fh:
        first = fh.readline()
    if not first.startswith("# polyagg-cloud"):
        raise ValueError("not a polyagg cloud file")
    fields = dict(tok.split("=") for tok in first.split()[2:])
    pts = np.loadtxt(path, delimiter=",", ndmin=2)
    params = WalkParams(
        burn_in=int(fields["burn_in"]),
        thinning=int(fields["thinning"]),
        count=int(fields["count"]),
        chains=int(fields["chains"]),
    )
    return SampleCloud(
        points=pts,
        seed=int(fields["seed"]),
        walk_params=params,
        chart=None,
        degenerate=bool(int(fields["degenerate"])),
    )
