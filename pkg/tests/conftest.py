import random
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

import agendamech as am


@pytest.fixture(scope="session")
def log_tech():
    return am.log_technology()


@pytest.fixture
def golden_economy(log_tech):
    """Two agents, log benefits, head-tax outside option: thresholds 0.1/1.1."""
    return am.Economy(
        agenda_setter_type=0.5,
        agent_types=(0.8,),
        distributions=am.uniform(0.0, 1.0),
        tech=log_tech,
        reservation=am.linear_reservation(log_tech, 2),
        quota=2,
        outside_g=0.0,
    )


@pytest.fixture
def majority_economy(log_tech):
    """Three agents, quota two: the low type is excluded and provision caps
    at the efficient level; raw thresholds are non-monotone."""
    return am.Economy(
        agenda_setter_type=0.5,
        agent_types=(0.2, 0.8),
        distributions=am.uniform(0.0, 1.0),
        tech=log_tech,
        reservation=am.linear_reservation(log_tech, 3),
        quota=2,
        outside_g=0.0,
    )


@pytest.fixture
def concave_economy(log_tech):
    """Interior binding type at the realized 0.5 agent: g* = 2**0.9 - 1."""
    return am.Economy(
        agenda_setter_type=0.6,
        agent_types=(0.3, 0.5, 0.8),
        distributions=am.uniform(0.0, 1.0),
        tech=log_tech,
        reservation=am.quadratic_share_reservation(log_tech, 1.4, -0.5),
        quota=4,
        outside_g=1.0,
    )


@pytest.fixture
def convex_economy(log_tech):
    """Participation binds at both support ends: g* = 2**0.8 - 1."""
    return am.Economy(
        agenda_setter_type=0.6,
        agent_types=(0.3, 0.5, 0.8),
        distributions=am.uniform(0.0, 1.0),
        tech=log_tech,
        reservation=am.quadratic_share_reservation(log_tech, 0.3, 0.5),
        quota=4,
        outside_g=1.0,
    )


@pytest.fixture
def concave_window_economy(log_tech):
    """n=5, quota 3: excluding the two middle agents dominates, giving a
    non-convex winning coalition."""
    return am.Economy(
        agenda_setter_type=0.5,
        agent_types=(0.2, 0.45, 0.55, 0.9),
        distributions=am.uniform(0.0, 1.0),
        tech=log_tech,
        reservation=am.quadratic_share_reservation(log_tech, 1.4, -0.5),
        quota=3,
        outside_g=1.3,
    )


@pytest.fixture
def convex_tail_economy(log_tech):
    return am.Economy(
        agenda_setter_type=0.5,
        agent_types=(0.1, 0.45, 0.55, 0.95),
        distributions=am.uniform(0.0, 1.0),
        tech=log_tech,
        reservation=am.quadratic_share_reservation(log_tech, 0.3, 0.5),
        quota=3,
        outside_g=1.0,
    )


def random_economy(rng: random.Random, curvatures=("linear", "concave", "convex")):
    """One draw of the randomized test corpus."""
    n = rng.randint(2, 6)
    q = rng.randint((n + 1) // 2, n)
    tech = am.log_technology() if rng.random() < 0.6 else am.power_technology(
        rng.choice([0.3, 0.5, 0.7]))
    curv = rng.choice(list(curvatures))
    if curv == "linear":
        res = am.linear_reservation(tech, n)
    elif curv == "concave":
        a = rng.uniform(0.8, 1.6)
        res = am.quadratic_share_reservation(tech, a, -rng.uniform(0.05, 0.45 * a))
    elif curv == "convex":
        res = am.quadratic_share_reservation(tech, rng.uniform(0.2, 0.8), rng.uniform(0.1, 1.0))
    else:
        level = rng.uniform(0.5, 1.5)
        res = am.negative_slope_reservation(tech, level, rng.uniform(0.1, level))
    dists = []
    for _ in range(n - 1):
        u = rng.random()
        if u < 0.5:
            dists.append(am.uniform(0.0, 1.0))
        elif u < 0.8:
            dists.append(am.truncated_exponential(rng.uniform(0.5, 2.0), 0.0, 1.0))
        else:
            dists.append(am.truncated_normal(rng.uniform(0.2, 0.8), rng.uniform(0.3, 1.0), 0.0, 1.0))
    return am.Economy(
        agenda_setter_type=rng.uniform(0.05, 1.2),
        agent_types=tuple(rng.uniform(0.02, 0.98) for _ in range(n - 1)),
        distributions=tuple(dists),
        tech=tech,
        reservation=res,
        quota=q,
        outside_g=rng.uniform(0.0, 2.5),
    )
