import numpy as np
import pytest

from barabanov import examples as ex
from barabanov.norm.bellman import approximate_barabanov_norm


@pytest.fixture(scope="session")
def ex2_field():
    return approximate_barabanov_norm(ex.example2(2.0))


@pytest.fixture(scope="session")
def supgap_field():
    return approximate_barabanov_norm(ex.supgap_system())


@pytest.fixture(scope="session")
def tuned():
    from barabanov.cycles import tune_pair

    return tune_pair(ex.sample_pair(), start_count=6)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_hurwitz(rng, n=3, margin=(0.1, 1.0)):
    from barabanov.matnum import spectrum

    G = rng.standard_normal((n, n))
    return G - (spectrum(G).abscissa + rng.uniform(*margin)) * np.eye(n)


def random_pair(rng, attempts=200):
    """A controllable Hurwitz triple with a valid determinant sign."""
    from barabanov.model import validate_pair

    for _ in range(attempts):
        A = random_hurwitz(rng)
        b = rng.standard_normal(3)
        c = rng.standard_normal(3)
        rep = validate_pair(A, b, c)
        if rep.passed:
            return A, b, c
    raise RuntimeError("no valid pair sampled")


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
