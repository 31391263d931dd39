import numpy as np
import pytest

import polyagg as pa


@pytest.fixture
def simplex2():
    return pa.gen_simplex_instance(2)


@pytest.fixture
def simplex3():
    return pa.gen_simplex_instance(3)


@pytest.fixture
def two_cycle():
    """Deterministic 2-state cycle with a single action."""
    transition = np.zeros((2, 1, 2))
    transition[0, 0, 1] = 1.0
    transition[1, 0, 0] = 1.0
    return pa.Momdp(transition=transition, rewards=np.array([[[1.0], [0.0]]]))


@pytest.fixture
def fully_connected_22():
    """Fully connected 2-state, 2-action model with two agents."""
    transition = np.full((2, 2, 2), 0.5)
    rewards = np.array([
        [[1.0, 0.0], [0.0, 0.0]],
        [[0.0, 0.0], [0.0, 1.0]],
    ])
    return pa.Momdp(transition=transition, rewards=rewards)


def unit_box(dim):
    """Axis-aligned unit box as a raw polytope (no equalities)."""
    return pa.OccupancyPolytope(
        a_ub=np.vstack([np.eye(dim), -np.eye(dim)]),
        b_ub=np.concatenate([np.ones(dim), np.zeros(dim)]),
        a_eq=np.zeros((0, dim)),
        b_eq=np.zeros(0),
    )


def random_policy(num_states, num_actions, rng):
    pi = rng.dirichlet(np.ones(num_actions), size=num_states)
    pi /= pi.sum(axis=1, keepdims=True)
    return pa.Policy(pi=pi)
