import numpy as np

from entropic_compose.mdp import TabularMdp

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("-", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def make_random_mdp(
    rng: np.random.Generator,
    num_states: int | None = None,
    num_actions: int | None = None,
    feature_dim: int = 2,
    gamma: float | None = None,
    max_states: int = 20,
    max_actions: int = 5,
) -> TabularMdp:
    """Random dense MDP with Dirichlet transition rows and normal features."""
    s = num_states if num_states is not None else int(rng.integers(2, max_states + 1))
    a = num_actions if num_actions is not None else int(rng.integers(2, max_actions + 1))
    g = gamma if gamma is not None else float(rng.uniform(0.5, 0.95))
    transitions = rng.dirichlet(np.ones(s), size=(s, a))
    features = rng.normal(size=(s, a, s, feature_dim))
    return TabularMdp(transitions=transitions, features=features, gamma=g)


def make_one_state_mdp(gamma: float = 0.9) -> TabularMdp:
    """Single state, two actions; action k collects feature unit vector e_k."""
    transitions = np.ones((1, 2, 1))
    features = np.zeros((1, 2, 1, 2))
    features[0, 0, 0] = (1.0, 0.0)
    features[0, 1, 0] = (0.0, 1.0)
    return TabularMdp(transitions=transitions, features=features, gamma=gamma)
