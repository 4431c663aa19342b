import numpy as np
import pytest

from coupledmf.synthetic import make_synthetic
from coupledmf.toy import ITEM_ROWS, USER_ROWS, toy_items, toy_ratings, toy_users


@pytest.fixture
def items():
    return toy_items()


@pytest.fixture
def users():
    return toy_users()


@pytest.fixture
def toy_ds():
    return toy_ratings()


@pytest.fixture
def item_rows():
    return [list(r) for r in ITEM_ROWS]


@pytest.fixture
def user_rows():
    return [list(r) for r in USER_ROWS]


@pytest.fixture(scope="session")
def small_world():
    """20 x 20 rank-2 synthetic ratings with informative attributes."""
    return make_synthetic(n_users=20, n_items=20, rank=2, density=0.6, seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        rec = results[number]
        terminalreporter.write_line(f"criterion {number} [{rec['status']}] {rec['title']}: {rec['detail']}")
