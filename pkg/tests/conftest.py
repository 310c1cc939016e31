import pytest
from hypothesis import HealthCheck, settings

from powersample import SymmetricTreeSpec, TabularModel, build_symmetric_tree, random_tabular_model

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def toy_model():
    """|V|=3, T=2 table with a zero-probability transition out of prefix (2,)."""
    rows = {
        (): [0.5, 0.3, 0.2],
        (0,): [0.6, 0.4, 0.0], (1,): [0.1, 0.1, 0.8], (2,): [0.0, 1.0, 0.0],
    }
    for a in range(3):
        for b in range(3):
            if rows[(a,)][b] > 0:
                rows[(a, b)] = [0.2, 0.3, 0.5] if (a + b) % 2 else [1 / 3, 1 / 3, 1 / 3]
    return TabularModel(3, 2, rows)


@pytest.fixture
def small_random():
    return random_tabular_model(3, 3, rng=11)


@pytest.fixture
def tree_8():
    return build_symmetric_tree(SymmetricTreeSpec(8, (2, 5), (2, 2), 0.0))
