import numpy as np
import pytest

from bilinrs.channel import crandn
from bilinrs.errors import ConfigError
from bilinrs.iwmmse import (
    IwmmseState,
    augmented_mse,
    effective_gains,
    estimate_all,
    initial_precoders,
    mmse_channel_estimate,
    objective,
    run_iwmmse,
    solve_precoders,
    surrogate_objective,
    update_auxiliaries,
    update_equalizers_weights,
)
from bilinrs.sinr import instantaneous_rates
from bilinrs.training import build_pilot_matrix, observe

from conftest import random_covariances


def test_estimate_is_wiener_filter(rng):
    cov = random_covariances(rng, 1, 5)
    Phi = build_pilot_matrix(5, 3)
    s2 = 0.2
    y = crandn(rng, 3)
    C = cov.C[0]
    W = C @ Phi @ np.linalg.inv(Phi.conj().T @ C @ Phi + s2 * np.eye(3))
    assert np.allclose(mmse_channel_estimate(y, C, Phi, s2), W @ y)


def test_estimation_error_matches_theory(rng):
    cov = random_covariances(rng, 2, 6)
    Phi = build_pilot_matrix(6, 3)
    s2 = 0.05
    roots = np.linalg.cholesky(cov.C)
    h = np.einsum("kmn,skn->skm", roots, crandn(rng, 40000, 2, 6))
    Y = observe(h, Phi, s2, rng=rng)
    H_hat = estimate_all(Y, cov.C, Phi, s2)
    for k in range(2):
        C = cov.C[k]
        CPhi = C @ Phi
        err = C - CPhi @ np.linalg.solve(Phi.conj().T @ CPhi + s2 * np.eye(3), CPhi.conj().T)
        mse = np.mean(np.sum(np.abs(h[:, k] - H_hat[:, k]) ** 2, axis=1))
        assert mse == pytest.approx(np.trace(err).real, rel=0.03)


def test_singular_observation_covariance():
    C = np.zeros((4, 4), dtype=complex)
    with pytest.raises(ConfigError):
        mmse_channel_estimate(np.ones(2), C, build_pilot_matrix(4, 2), 0.0)


def test_augmented_mse_minimizer():
    eps = np.array([0.1, 0.5, 0.9])
    best = augmented_mse(eps, 1 / eps)
    assert np.allclose(best, 1 + np.log2(eps))
    for u in (0.5, 2.0, 11.0):
        assert np.all(augmented_mse(eps, u) >= best - 1e-15)


def test_objective_matches_rates(rng):
    H = crandn(rng, 3, 6)
    P = crandn(rng, 6, 4)
    r = instantaneous_rates(H, P[:, 0], P[:, 1:].T)
    rc = np.log2(1 + r.common_sinr)
    expected = np.max(1 - rc) + np.sum(1 - r.private_rates)
    assert objective(H, P) == pytest.approx(expected, rel=1e-12)
    assert objective(H, P, rs=False) == pytest.approx(np.sum(1 - r.private_rates), rel=1e-12)


def test_weights_make_surrogate_tight(rng):
    H = crandn(rng, 3, 6)
    state = IwmmseState(P=crandn(rng, 6, 4))
    update_equalizers_weights(state, H)
    update_auxiliaries(state, H)
    F = effective_gains(H, state.P)
    assert surrogate_objective(F, state) == pytest.approx(objective(H, state.P), rel=1e-10)


def test_precoder_update_beats_random_feasible_points(rng):
    H = crandn(rng, 3, 6)
    P_dl = 10.0
    state = IwmmseState(P=initial_precoders(H, P_dl))
    update_equalizers_weights(state, H)
    update_auxiliaries(state, H)
    P_new = solve_precoders(state, H, P_dl)
    assert np.linalg.norm(P_new) ** 2 <= P_dl * (1 + 1e-9)
    best = surrogate_objective(effective_gains(H, P_new), state)
    for _ in range(200):
        X = P_new + 0.3 * crandn(rng, 6, 4)
        X *= np.sqrt(P_dl) / max(np.linalg.norm(X), np.sqrt(P_dl))
        assert surrogate_objective(effective_gains(H, X), state) >= best - 1e-7


def test_single_user_converges_to_matched_filter(rng):
    h = crandn(rng, 1, 8)
    res = run_iwmmse(h, 10.0, tol=1e-12, max_iter=500, rs=False)
    expected = 1 - np.log2(1 + 10.0 * np.linalg.norm(h) ** 2)
    assert res.trace[-1] == pytest.approx(expected, abs=1e-6)
    assert not np.any(res.p_c)


def test_run_is_monotone_and_feasible(rng):
    for rs in (True, False):
        H = crandn(rng, 4, 8)
        res = run_iwmmse(H, 100.0, rs=rs)
        t = res.trace
        assert all(b <= a + 1e-8 * abs(a) for a, b in zip(t, t[1:]))
        assert np.linalg.norm(res.P) ** 2 <= 100.0 * (1 + 1e-9)
        assert res.P_p.shape == (4, 8)
        if not rs:
            assert not np.any(res.p_c)


def test_zero_power():
    res = run_iwmmse(np.ones((2, 3)), 0.0)
    assert not np.any(res.P) and res.iterations == 0


def test_estimation_error_is_orthogonal_to_estimate(rng):
    cov = random_covariances(rng, 1, 6)
    Phi = build_pilot_matrix(6, 2)
    s2 = 0.1
    h = np.einsum("mn,sn->sm", np.linalg.cholesky(cov.C[0]), crandn(rng, 100_000, 6))
    h_hat = mmse_channel_estimate(observe(h, Phi, s2, rng=rng), cov.C[0], Phi, s2)
    cross = np.einsum("sm,sn->mn", h - h_hat, h_hat.conj()) / h.shape[0]
    assert np.abs(cross).max() <= 0.02 * np.trace(cov.C[0]).real


def test_mse_weight_identities(rng):
    H = crandn(rng, 3, 5)
    state = IwmmseState(P=crandn(rng, 5, 4))
    update_equalizers_weights(state, H)
    r = instantaneous_rates(H, state.p_c, state.P_p)
    assert np.allclose(state.eps_p * (1 + r.private_sinr), 1.0, atol=1e-10)
    xi_p = augmented_mse(state.eps_p, state.u_p)
    assert np.allclose(xi_p, 1 - r.private_rates, atol=1e-10)
    assert state.xi_c == pytest.approx(np.max(1 - np.log2(1 + r.common_sinr)), abs=1e-10)


def test_perfect_csi_single_user_high_power(rng):
    h = crandn(rng, 1, 8)
    res = run_iwmmse(h, 1e4, rs=True)
    rate = instantaneous_rates(h, res.p_c, res.P_p).sum_rs
    assert rate == pytest.approx(np.log2(1 + 1e4 * np.linalg.norm(h) ** 2), rel=0.05)
