import itertools

import numpy as np
import pytest

from ail_lab.expert import ExpertDataset
from ail_lab.instances import make_fig2_example
from ail_lab.mdp import NonStationaryPolicy, TabularMDP


@pytest.fixture
def fig2():
    return make_fig2_example()


@pytest.fixture
def two_traj_data():
    # both start in s1; the second moves to s2 at step 2
    return ExpertDataset(np.array([[[0, 0], [0, 0]], [[0, 0], [1, 0]]]), 0)


def random_mdp(rng, S, A, H, sparse=False):
    P = rng.random((H, S, A, S))
    if sparse:
        P *= rng.random(P.shape) < 0.4
        P[..., 0] += 1e-3
    P /= P.sum(-1, keepdims=True)
    rho = rng.random(S)
    return TabularMDP(P, rng.random((H, S, A)), rho / rho.sum())


def random_policy(rng, H, S, A):
    p = rng.random((H, S, A)) + 1e-3
    return NonStationaryPolicy(p / p.sum(-1, keepdims=True))


def all_deterministic(H, S, A):
    for flat in itertools.product(range(A), repeat=H * S):
        yield NonStationaryPolicy.deterministic(np.array(flat).reshape(H, S), A)


def beta_policy(beta):
    """Two-step example family: expert except pi_1(green|s2) = beta."""
    p = np.zeros((2, 3, 2))
    p[:, :, 0] = 1.0
    p[0, 1] = (beta, 1 - beta)
    return NonStationaryPolicy(p)


# lines recorded by the acceptance suite, echoed in the terminal summary
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
