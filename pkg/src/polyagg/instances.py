"""Instance generators and brute-force oracles.

Includes the warehouse monitoring environment, the one-hot simplex instance,
fully connected models built from graphs (independent-set encoding) and 2-CNF
formulas (satisfiability encoding), and exhaustive oracles used to cross-check
the aggregation rules on small inputs.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import SizeLimit
from .mdp import AVERAGE, DISCOUNTED, Momdp, OccupancyMeasure, Policy, policy_to_occupancy

NORM, RISK, INC = 0, 1, 2
STAGES = 3

MAX_WAREHOUSE_VARS = 100_000
MAX_ENUM_POLICIES = 1_000_000
MAX_BRUTE_VERTICES = 20
MAX_BRUTE_VARIABLES = 20


@dataclass(frozen=True)
class WarehouseParams:
    """Sampled configuration of the warehouse monitoring environment.

    ``warehouses`` sites each cycle through normal -> risky -> incident
    unless monitored; monitoring resets a site to normal.  Agents carry a
    personal penalty scale and a list of sites they care about.
    """

    warehouses: int
    agents: int
    seed: int
    incident_penalty: tuple[float, ...] | None = None   # w_j
    agent_scale: tuple[float, ...] | None = None        # rho_i
    p_risk: tuple[float, ...] | None = None
    p_incident: tuple[float, ...] | None = None
    agent_sites: tuple[tuple[int, ...], ...] | None = None  # l_i
    criterion: str = AVERAGE
    gamma: float = 0.95

    def __post_init__(self):
        if self.warehouses < 1 or self.agents < 1:
            raise ValueError("need at least one warehouse and one agent")
        rng = np.random.default_rng(self.seed)
        m, n = self.warehouses, self.agents
        if self.incident_penalty is None:
            grid = np.arange(100.0, 250.0 + 1e-9, 50.0)
            object.__setattr__(
                self, "incident_penalty", tuple(float(w) for w in rng.choice(grid, size=m))
            )
        if self.agent_scale is None:
            grid = np.arange(0.25, n + 1e-9, 0.25)
            object.__setattr__(
                self, "agent_scale", tuple(float(r) for r in rng.choice(grid, size=n))
            )
        if self.p_risk is None:
            object.__setattr__(
                self, "p_risk", tuple(float(p) for p in rng.uniform(0.5, 0.8, size=m))
            )
        if self.p_incident is None:
            object.__setattr__(
                self, "p_incident", tuple(float(p) for p in rng.uniform(0.5, 0.8, size=m))
            )
        if self.agent_sites is None:
            sites = []
            for _ in range(n):
                mask = rng.integers(0, 2, size=m)
                if not mask.any():
                    mask[rng.integers(0, m)] = 1
                sites.append(tuple(int(j) for j in np.flatnonzero(mask)))
            object.__setattr__(self, "agent_sites", tuple(sites))
        for name, length in (
            ("incident_penalty", m), ("p_risk", m), ("p_incident", m),
            ("agent_scale", n), ("agent_sites", n),
        ):
            if len(getattr(self, name)) != length:
                raise ValueError(f"{name} must have length {length}")


def _snap_rows_to_one(p: np.ndarray) -> np.ndarray:
    """Nudge each transition row so its float sum is exactly 1.0."""
    flat = p.reshape(-1, p.shape[-1])
    for row in flat:
        for _ in range(4):
            delta = 1.0 - row.sum()
            if delta == 0.0:
                break
            row[int(np.argmax(row))] += delta
    return p


def _stage_digits(m: int) -> np.ndarray:
    """digits[j, s] = stage of warehouse j in state s (warehouse 0 least significant)."""
    states = STAGES**m
    s = np.arange(states)
    return np.stack([(s // STAGES**j) % STAGES for j in range(m)])


def gen_warehouse(params: WarehouseParams) -> Momdp:
    """Build the warehouse monitoring MOMDP.

    States enumerate stage vectors in {norm, risk, inc}^m as mixed-radix
    integers, warehouse 0 least significant.  Action j < m monitors
    warehouse j (resetting it to normal); action m is a no-op.  Unmonitored
    sites advance norm -> risk with p_risk and risk -> inc with p_incident,
    otherwise stay.  The joint transition is the product over warehouses.
    Rewards: -1 for monitoring anything, minus ``rho_i * w_j`` for every
    valued site j sitting at incident while not being monitored.
    """
    m, n = params.warehouses, params.agents
    states = STAGES**m
    actions = m + 1
    if states * actions > MAX_WAREHOUSE_VARS:
        raise SizeLimit(f"{states * actions} state-action pairs exceed the cap")
    digits = _stage_digits(m)

    # stage_next[j, a, stage, stage'] for one warehouse under one action
    stage_next = np.zeros((m, actions, STAGES, STAGES))
    for j in range(m):
        for a in range(actions):
            if a == j:
                stage_next[j, a, :, NORM] = 1.0
            else:
                pr, pi = params.p_risk[j], params.p_incident[j]
                stage_next[j, a, NORM, NORM] = 1.0 - pr
                stage_next[j, a, NORM, RISK] = pr
                stage_next[j, a, RISK, RISK] = 1.0 - pi
                stage_next[j, a, RISK, INC] = pi
                stage_next[j, a, INC, INC] = 1.0

    transition = np.ones((states, actions, states))
    for j in range(m):
        # factor[s, a, s'] = stage_next[j, a, digits[j, s], digits[j, s']]
        transition *= stage_next[j][:, digits[j]][:, :, digits[j]].transpose(1, 0, 2)
    _snap_rows_to_one(transition)

    rewards = np.zeros((n, states, actions))
    monitoring_cost = np.zeros(actions)
    monitoring_cost[:m] = 1.0
    for i in range(n):
        rho = params.agent_scale[i]
        table = -np.tile(monitoring_cost, (states, 1))
        for j in params.agent_sites[i]:
            incident = digits[j] == INC
            not_monitored = np.ones(actions, dtype=bool)
            not_monitored[j] = False
            table -= (
                rho * params.incident_penalty[j]
                * np.outer(incident, not_monitored)
            )
        rewards[i] = table

    if params.criterion == DISCOUNTED:
        d_init = np.zeros(states)
        d_init[0] = 1.0  # all warehouses start normal
        return Momdp(transition=transition, rewards=rewards, criterion=DISCOUNTED,
                     gamma=params.gamma, d_init=d_init)
    return Momdp(transition=transition, rewards=rewards)


def gen_simplex_instance(num_actions: int) -> Momdp:
    """Single-state MOMDP whose occupancy polytope is the (l-1)-simplex.

    l actions, l agents; agent i earns 1 on action i and 0 otherwise, so the
    returns are born normalized.
    """
    if num_actions < 2:
        raise ValueError("need at least two actions")
    ell = num_actions
    transition = np.ones((1, ell, 1))
    rewards = np.eye(ell).reshape(ell, 1, ell)
    return Momdp(transition=transition, rewards=rewards)


@dataclass(frozen=True)
class Graph:
    """Simple undirected graph: vertex count plus an edge list."""

    num_vertices: int
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        seen = set()
        canon = []
        for u, v in self.edges:
            u, v = int(u), int(v)
            if u == v:
                raise ValueError("self-loops are not allowed")
            if not (0 <= u < self.num_vertices and 0 <= v < self.num_vertices):
                raise ValueError("edge endpoint out of range")
            key = (min(u, v), max(u, v))
            if key in seen:
                raise ValueError("duplicate edge")
            seen.add(key)
            canon.append(key)
        object.__setattr__(self, "edges", tuple(canon))


@dataclass(frozen=True)
class CnfFormula:
    """2-CNF: variable count plus clauses of two signed literals.

    A literal is a nonzero int: +k / -k mean variable k-1 plain / negated.
    The two literals of a clause must name distinct variables.
    """

    num_variables: int
    clauses: tuple[tuple[int, int], ...]

    def __post_init__(self):
        canon = []
        for clause in self.clauses:
            if len(clause) != 2:
                raise ValueError("clauses must have exactly 2 literals")
            a, b = int(clause[0]), int(clause[1])
            for lit in (a, b):
                if lit == 0 or abs(lit) > self.num_variables:
                    raise ValueError(f"literal {lit} out of range")
            if abs(a) == abs(b):
                raise ValueError("clause literals must name distinct variables")
            canon.append((a, b))
        object.__setattr__(self, "clauses", tuple(canon))


def _fully_connected(states: int, actions: int) -> np.ndarray:
    p = np.full((states, actions, states), 1.0 / states)
    return _snap_rows_to_one(p)


def gen_from_mis(g: Graph) -> Momdp:
    """Fully connected MOMDP encoding independent sets of a graph.

    One state per edge, two actions picking an endpoint, one agent per
    vertex; agent i earns 1 at (s_e, a_k) exactly when endpoint k of edge e
    is vertex i.  A policy is optimal for a set of agents iff that set is
    independent.
    """
    if not g.edges:
        raise ValueError("graph needs at least one edge")
    states = len(g.edges)
    transition = _fully_connected(states, 2)
    rewards = np.zeros((g.num_vertices, states, 2))
    for e, (u, v) in enumerate(g.edges):
        rewards[u, e, 0] = 1.0
        rewards[v, e, 1] = 1.0
    return Momdp(transition=transition, rewards=rewards)


def _literal_pair(lit: int) -> tuple[int, int]:
    """Map a signed literal to its (state, action) pair; action 0 is True."""
    return abs(lit) - 1, 0 if lit > 0 else 1


def gen_from_max2sat(f: CnfFormula) -> Momdp:
    """Fully connected MOMDP encoding a 2-CNF.

    One state per variable, actions {True, False}.  Each clause (c1 or c2)
    contributes three agents rewarded on the literal pairs (c1, c2),
    (c1, not c2) and (not c1, c2); each agent's best scaled return is 2 and
    at most one of the three can exceed 3/2 under any policy.
    """
    if not f.clauses:
        raise ValueError("formula needs at least one clause")
    states = f.num_variables
    transition = _fully_connected(states, 2)
    patterns = ((1, 1), (1, -1), (-1, 1))
    rewards = np.zeros((3 * len(f.clauses), states, 2))
    names = []
    for c, (lit1, lit2) in enumerate(f.clauses):
        for k, (sign1, sign2) in enumerate(patterns):
            agent = 3 * c + k
            for lit in (sign1 * lit1, sign2 * lit2):
                s, a = _literal_pair(lit)
                rewards[agent, s, a] = 1.0
            names.append(f"clause{c}_{k}")
    return Momdp(transition=transition, rewards=rewards, agent_names=tuple(names))


def brute_force_mis(g: Graph) -> int:
    """Maximum independent set size by exhaustive subset enumeration."""
    if g.num_vertices > MAX_BRUTE_VERTICES:
        raise SizeLimit(f"brute force limited to {MAX_BRUTE_VERTICES} vertices")
    adjacency = [0] * g.num_vertices
    for u, v in g.edges:
        adjacency[u] |= 1 << v
        adjacency[v] |= 1 << u
    best = 0
    for mask in range(1 << g.num_vertices):
        ok = True
        rest = mask
        while rest:
            u = (rest & -rest).bit_length() - 1
            if adjacency[u] & mask:
                ok = False
                break
            rest &= rest - 1
        if ok:
            best = max(best, mask.bit_count())
    return best


def brute_force_max2sat(f: CnfFormula) -> int:
    """Maximum number of simultaneously satisfiable clauses, by enumeration."""
    if f.num_variables > MAX_BRUTE_VARIABLES:
        raise SizeLimit(f"brute force limited to {MAX_BRUTE_VARIABLES} variables")
    best = 0
    for mask in range(1 << f.num_variables):
        satisfied = 0
        for lit1, lit2 in f.clauses:
            val1 = bool(mask >> (abs(lit1) - 1) & 1) == (lit1 > 0)
            val2 = bool(mask >> (abs(lit2) - 1) & 1) == (lit2 > 0)
            satisfied += val1 or val2
        best = max(best, satisfied)
    return best


def enumerate_deterministic_policies(m: Momdp) -> list[tuple[Policy, OccupancyMeasure]]:
    """All deterministic policies with their occupancy measures."""
    total = m.num_actions**m.num_states
    if total > MAX_ENUM_POLICIES:
        raise SizeLimit(f"{total} deterministic policies exceed the enumeration cap")
    out = []
    for choice in itertools.product(range(m.num_actions), repeat=m.num_states):
        pi = np.zeros((m.num_states, m.num_actions))
        pi[np.arange(m.num_states), choice] = 1.0
        policy = Policy(pi=pi)
        out.append((policy, policy_to_occupancy(policy, m)))
    return out


def random_momdp(num_states: int, num_actions: int, num_agents: int, seed: int,
                 criterion: str = AVERAGE, gamma: float = 0.95) -> Momdp:
    """Random dense MOMDP with Dirichlet transition rows.

    Rewards are drawn uniformly on a dyadic grid (multiples of 2**-20), so
    exact positive affine transforms of them stay exact in floating point.
    """
    rng = np.random.default_rng(seed)
    transition = rng.dirichlet(np.ones(num_states), size=(num_states, num_actions))
    _snap_rows_to_one(transition)
    rewards = rng.integers(0, 2**20 + 1, size=(num_agents, num_states, num_actions))
    rewards = rewards.astype(float) * 2.0**-20
    if criterion == DISCOUNTED:
        d_init = rng.dirichlet(np.ones(num_states))
        d_init = d_init / d_init.sum()
        return Momdp(transition=transition, rewards=rewards, criterion=DISCOUNTED,
                     gamma=gamma, d_init=d_init)
    return Momdp(transition=transition, rewards=rewards)


def random_graph(num_vertices: int, edge_prob: float, seed: int) -> Graph:
    """Erdos-Renyi graph, resampled once if it comes out edgeless."""
    rng = np.random.default_rng(seed)
    edges = [
        (u, v)
        for u in range(num_vertices)
        for v in range(u + 1, num_vertices)
        if rng.random() < edge_prob
    ]
    if not edges:
        u, v = sorted(rng.choice(num_vertices, size=2, replace=False))
        edges = [(int(u), int(v))]
    return Graph(num_vertices=num_vertices, edges=tuple(edges))


def random_2cnf(num_variables: int, num_clauses: int, seed: int) -> CnfFormula:
    """Random 2-CNF with distinct variables inside each clause."""
    if num_variables < 2:
        raise ValueError("need at least two variables")
    rng = np.random.default_rng(seed)
    clauses = []
    for _ in range(num_clauses):
        u, v = rng.choice(num_variables, size=2, replace=False)
        s1, s2 = rng.choice([-1, 1], size=2)
        clauses.append((int(s1) * (int(u) + 1), int(s2) * (int(v) + 1)))
    return CnfFormula(num_variables=num_variables, clauses=tuple(clauses))


# --- plain-text parsing (DIMACS-like) ----------------------------------------


def parse_graph(text: str) -> Graph:
    """Parse ``p edge N M`` followed by ``e u v`` lines (1-based vertices)."""
    num = None
    edges = []
    for line in text.splitlines():
        tok = line.split()
        if not tok or tok[0] == "c":
            continue
        if tok[0] == "p":
            num = int(tok[2])
        elif tok[0] == "e":
            edges.append((int(tok[1]) - 1, int(tok[2]) - 1))
    if num is None:
        raise ValueError("missing 'p edge' header")
    return Graph(num_vertices=num, edges=tuple(edges))


def parse_cnf(text: str) -> CnfFormula:
    """Parse ``p cnf N M`` followed by zero-terminated 2-literal clauses."""
    num = None
    clauses = []
    for line in text.splitlines():
        tok = line.split()
        if not tok or tok[0] == "c":
            continue
        if tok[0] == "p":
            num = int(tok[2])
        else:
            lits = [int(t) for t in tok]
            if lits[-1] == 0:
                lits = lits[:-1]
            if lits:
                clauses.append(tuple(lits))
    if num is None:
        raise ValueError("missing 'p cnf' header")
    return CnfFormula(num_variables=num, clauses=tuple(clauses))
