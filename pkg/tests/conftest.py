import numpy as np
import pytest

from bilinrs.channel import CovarianceSet, ScenarioConfig, build_covariance, drop_users
from bilinrs.sinr import SinrOperators
from bilinrs.training import build_pilot_matrix, training_noise_variance


def random_covariances(rng, K, M, rank=None):
    """Random Hermitian PSD matrices, optionally rank-deficient."""
    rank = M if rank is None else rank
    G = (rng.standard_normal((K, M, rank)) + 1j * rng.standard_normal((K, M, rank))) / np.sqrt(2 * rank)
    return CovarianceSet(G @ np.conj(np.swapaxes(G, 1, 2)))


def make_ops(rng, K=2, M=8, T=4, P_dl=100.0, rank=None):
    cov = random_covariances(rng, K, M, rank)
    Phi = build_pilot_matrix(M, T)
    return SinrOperators.build(cov, Phi, training_noise_variance(P_dl, T))


def scenario_ops(seed, M=16, K=3, T=4, P_dl=100.0, **kw):
    sc = ScenarioConfig(M=M, K=K, seed=seed, **kw)
    cov = build_covariance(drop_users(sc, np.random.default_rng(seed)), sc)
    Phi = build_pilot_matrix(M, T)
    return SinrOperators.build(cov, Phi, training_noise_variance(P_dl, T))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# (criterion, verdict, detail) rows filled by test_acceptance.py
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
