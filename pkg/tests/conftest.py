import numpy as np
import pytest

from ebmbandit.posterior import ArmPriorState, SufficientStats


def random_spd(rng, d, jitter=0.3):
    A = rng.standard_normal((d, d))
    return A @ A.T + jitter * np.eye(d)


def random_problem(rng, N=None, d=None, max_T=20, sigma2=None, lam=None):
    """Random hierarchical-arm problem: per-instance data, prior and raw arrays."""
    N = N or int(rng.integers(1, 5))
    d = d or int(rng.integers(1, 4))
    sigma2 = sigma2 if sigma2 is not None else float(rng.uniform(0.25, 4.0))
    lam = lam if lam is not None else float(rng.choice([1e-3, 1.0]))
    Sigma = random_spd(rng, d)
    data = []
    for _ in range(N):
        T = int(rng.integers(0, max_T + 1))
        X = rng.standard_normal((T, d))
        y = rng.standard_normal(T) * 2.0
        data.append((X, y))
    stats = [SufficientStats.from_data(X, y) if len(y) else SufficientStats.empty(d)
             for X, y in data]
    prior = ArmPriorState.from_covariance(Sigma, sigma2, lam)
    return stats, prior, data


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    import sys
    module = sys.modules.get("test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(module.RESULTS):
        terminalreporter.write_line(module.RESULTS[number])
