import numpy as np
import pytest

from bilinrs.channel import crandn
from bilinrs.errors import NumericalBreakdown
from bilinrs.private import (
    bisect_lambda,
    f1a,
    f2,
    f2a,
    init_private,
    optimize_private,
    rescale,
    solve_ap_given_lambda,
    update_alpha,
    update_beta,
)
from bilinrs.sinr import private_sinrs

from conftest import make_ops, scenario_ops


def test_dual_transform_is_tight_at_current_sinr(rng):
    ops = make_ops(rng, K=3, M=6, T=3)
    A_p = crandn(rng, 3, 6, 3)
    gamma = private_sinrs(ops, A_p)
    assert np.allclose(update_alpha(A_p, ops), gamma)
    assert f1a(A_p, gamma, ops) == pytest.approx(np.log2(1 + gamma).sum(), rel=1e-12)
    for _ in range(20):
        alpha = gamma * rng.uniform(0, 3, size=3)
        assert f1a(A_p, alpha, ops) <= np.log2(1 + gamma).sum() + 1e-12


def test_quadratic_transform_is_tight_at_optimal_beta(rng):
    ops = make_ops(rng, K=3, M=6, T=3)
    A_p = crandn(rng, 3, 6, 3)
    alpha = rng.uniform(0.1, 2.0, size=3)
    beta = update_beta(A_p, alpha, ops)
    assert f2a(A_p, beta, alpha, ops) == pytest.approx(f2(A_p, alpha, ops), rel=1e-12)
    for _ in range(20):
        b = beta + 0.1 * crandn(rng, 3)
        assert f2a(A_p, b, alpha, ops) <= f2(A_p, alpha, ops) + 1e-12


@pytest.mark.parametrize("lam", [1e-3, 0.3, 5.0])
def test_structured_solve_matches_dense(rng, lam):
    ops = make_ops(rng, K=2, M=4, T=2)
    A_p = crandn(rng, 2, 4, 2)
    alpha = private_sinrs(ops, A_p)
    beta = update_beta(A_p, alpha, ops)
    fast = solve_ap_given_lambda(beta, alpha, lam, ops)
    dense = solve_ap_given_lambda(beta, alpha, lam, ops, dense=True)
    assert np.allclose(fast, dense, rtol=1e-8, atol=1e-10 * np.abs(dense).max())


def test_lambda_solution_maximizes_lagrangian(rng):
    ops = make_ops(rng, K=2, M=4, T=2)
    A_p = crandn(rng, 2, 4, 2)
    alpha = private_sinrs(ops, A_p)
    beta = update_beta(A_p, alpha, ops)
    lam = 0.7

    def lagrangian(A):
        return f2a(A, beta, alpha, ops) - lam * ops.private_power(A)

    best = solve_ap_given_lambda(beta, alpha, lam, ops)
    top = lagrangian(best)
    for _ in range(50):
        assert lagrangian(best + 1e-3 * crandn(rng, 2, 4, 2)) <= top + 1e-12


def test_bisection_meets_budget(rng):
    ops = make_ops(rng, K=3, M=8, T=4, P_dl=1000.0)
    A_p = init_private(ops, 50.0)
    alpha = private_sinrs(ops, A_p)
    beta = update_beta(A_p, alpha, ops)
    lam, A = bisect_lambda(beta, alpha, ops, 50.0)
    power = ops.private_power(A)
    assert lam > 0
    assert 50.0 * (1 - 1e-6) <= power <= 50.0


def test_rescale_and_init(rng):
    ops = make_ops(rng, K=2, M=4, T=2)
    A = init_private(ops, 7.0)
    assert ops.private_power(A) == pytest.approx(7.0, rel=1e-12)
    assert not np.any(rescale(A, 0.0, 1.0))


def test_single_user_reaches_generalized_eigen_bound(rng):
    """K = 1: max |q^H a|^2 / (a^H Q a + 1) s.t. a^H F a <= P equals q^H (Q + F / P)^-1 q."""
    ops = make_ops(rng, K=1, M=6, T=3, P_dl=100.0)
    P = 100.0
    q = ops.q(0)
    Q = ops.Q(0, 0).dense()
    F = ops.F_p(0).dense()
    bound = np.vdot(q, np.linalg.solve(Q + F / P, q)).real
    res = optimize_private(ops, 0.0, P, tol=1e-12, max_iter=2000)
    assert res.sinr[0] == pytest.approx(bound, rel=1e-5)
    assert ops.private_power(res.A_p) <= P * (1 + 1e-9)


def test_optimize_private_monotone_and_feasible():
    ops = scenario_ops(3, P_dl=1000.0)
    res = optimize_private(ops, 0.3, 1000.0)
    values = [v for _, v, _ in res.trace]
    powers = [p for _, _, p in res.trace]
    assert all(b >= a * (1 - 1e-9) for a, b in zip(values, values[1:]))
    assert all(p <= 700.0 * (1 + 1e-6) for p in powers)
    assert res.rates.sum() == pytest.approx(values[-1])
    assert res.iterations == len(res.trace) - 1


def test_zero_budget_and_warm_start(rng):
    ops = make_ops(rng, K=2, M=4, T=2)
    res = optimize_private(ops, 1.0, 10.0)
    assert not np.any(res.A_p) and res.iterations == 0
    cold = optimize_private(ops, 0.2, 10.0)
    warm = optimize_private(ops, 0.5, 10.0, init=cold.A_p)
    assert ops.private_power(warm.A_p) == pytest.approx(5.0, rel=1e-6)
    # an all-zero warm start falls back to the default start
    zero = optimize_private(ops, 0.5, 10.0, init=np.zeros_like(cold.A_p))
    assert zero.rates.sum() > 0


def test_bracket_failure_is_reported(rng):
    ops = make_ops(rng, K=2, M=4, T=2)
    A_p = crandn(rng, 2, 4, 2)
    alpha = private_sinrs(ops, A_p)
    beta = update_beta(A_p, alpha, ops)
    with pytest.raises(NumericalBreakdown):
        bisect_lambda(beta, alpha, ops, 1e-300, max_doublings=3)


def test_power_curve_is_non_increasing(rng):
    from bilinrs.private import _LambdaSolver

    ops = make_ops(rng, K=3, M=8, T=4)
    A_p = crandn(rng, 3, 8, 4)
    alpha = private_sinrs(ops, A_p)
    solver = _LambdaSolver(update_beta(A_p, alpha, ops), alpha, ops)
    grid = [0.0] + list(10.0 ** np.arange(-6, 7))
    powers = [solver.power(lam) for lam in grid]
    assert all(b <= a * (1 + 1e-12) for a, b in zip(powers, powers[1:]))


def test_beats_random_feasible_search(rng):
    ops = make_ops(rng, K=2, M=8, T=4, P_dl=100.0)
    res = optimize_private(ops, 0.0, 100.0)
    best = -np.inf
    for _ in range(200):
        A = crandn(rng, 2, 8, 4)
        A = rescale(A, ops.private_power(A), 100.0)
        best = max(best, np.log2(1 + private_sinrs(ops, A)).sum())
    assert res.rates.sum() >= best
