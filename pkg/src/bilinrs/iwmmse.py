"""Iterative weighted MMSE rate-splitting baseline on MMSE channel estimates.

Per channel realization the precoder P = [p_c, p_p1, ..., p_pK] is found by
alternating MMSE weights, quadratic-transform auxiliaries and a convex
precoder update. The augmented weighted MSE is taken as

    xi = 1 + (u eps - 1 - ln u) / ln 2

which is minimized by u = 1/eps and then equals 1 - log2(1 + SINR).

The precoder update minimizes max_k xi_ck + sum_k xi_pk under
||P||_F^2 <= P_dl. It is solved through its dual: for simplex weights nu
on the common constraints and a power multiplier mu every column has a
closed form, mu follows from the power budget by root finding, and nu
maximizes the (concave, smooth) dual function. All optimal columns lie in
the span of the estimates, so the work is done in a K-dimensional basis.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.optimize

from .errors import ConfigError, NumericalBreakdown

LN2 = np.log(2.0)


def mmse_channel_estimate(y_k: np.ndarray, C_k: np.ndarray, Phi: np.ndarray, sigma_n2: float) -> np.ndarray:
    """h_hat = C Phi (Phi^H C Phi + sigma_n2 I)^{-1} y for one or many observations.

    ``y_k`` has shape ``(..., T)``; the result has shape ``(..., M)``.
    """
    CPhi = C_k @ Phi
    C_y = Phi.conj().T @ CPhi + sigma_n2 * np.eye(Phi.shape[1])
    try:
        # filter applied to the trailing axis: h = (C Phi C_y^{-1}) y
        Fh = np.linalg.solve(C_y.T, CPhi.T).T
    except np.linalg.LinAlgError as exc:
        raise ConfigError("observation covariance is singular") from exc
    if not np.all(np.isfinite(Fh)) or np.linalg.cond(C_y) > 1e14:
        raise ConfigError("observation covariance is singular")
    return np.asarray(y_k) @ Fh.T


def estimate_all(Y: np.ndarray, C: np.ndarray, Phi: np.ndarray, sigma_n2: float) -> np.ndarray:
    """Estimates for all users: ``Y`` is ``(..., K, T)``, result ``(..., K, M)``."""
    return np.stack(
        [mmse_channel_estimate(Y[..., k, :], C[k], Phi, sigma_n2) for k in range(C.shape[0])], axis=-2
    )


def augmented_mse(eps, u):
    return 1.0 + (u * eps - 1.0 - np.log(u)) / LN2


@dataclass
class IwmmseState:
    """Iterate of the alternating scheme.

    ``P`` is ``(M, K+1)`` with the common column first. Scalars are
    per-user arrays of length K.
    """

    P: np.ndarray
    rs: bool = True
    T_c: np.ndarray | None = None
    T_p: np.ndarray | None = None
    g_c: np.ndarray | None = None
    g_p: np.ndarray | None = None
    eps_c: np.ndarray | None = None
    eps_p: np.ndarray | None = None
    u_c: np.ndarray | None = None
    u_p: np.ndarray | None = None
    w_c: np.ndarray | None = None
    w_p: np.ndarray | None = None
    xi_c: float = 0.0
    nu: np.ndarray | None = None

    @property
    def p_c(self) -> np.ndarray:
        return self.P[:, 0]

    @property
    def P_p(self) -> np.ndarray:
        """Private precoders as rows, ``(K, M)``."""
        return self.P[:, 1:].T


def effective_gains(h_hats: np.ndarray, P: np.ndarray) -> np.ndarray:
    """``F[k, j] = h_k^H P[:, j]``."""
    return h_hats.conj() @ P


def _denominators(F):
    T_p = np.sum(np.abs(F[:, 1:]) ** 2, axis=1) + 1.0
    T_c = T_p + np.abs(F[:, 0]) ** 2
    return T_c, T_p


def update_equalizers_weights(state: IwmmseState, h_hats: np.ndarray) -> IwmmseState:
    """MMSE equalizers, the resulting MSEs and their optimal weights."""
    F = effective_gains(h_hats, state.P)
    T_c, T_p = _denominators(F)
    own = np.diagonal(F[:, 1:])
    state.T_c, state.T_p = T_c, T_p
    state.g_c = np.conj(F[:, 0]) / T_c
    state.g_p = np.conj(own) / T_p
    state.eps_c = T_p / T_c
    state.eps_p = (T_p - np.abs(own) ** 2) / T_p
    state.u_c = 1.0 / state.eps_c
    state.u_p = 1.0 / state.eps_p
    state.xi_c = float(np.max(augmented_mse(state.eps_c, state.u_c))) if state.rs else 0.0
    return state


def update_auxiliaries(state: IwmmseState, h_hats: np.ndarray) -> IwmmseState:
    F = effective_gains(h_hats, state.P)
    T_c, T_p = _denominators(F)
    state.w_c = F[:, 0] / T_c
    state.w_p = np.diagonal(F[:, 1:]) / T_p
    return state


def surrogate_terms(F, state: IwmmseState):
    """Per-user xi_ck and xi_pk with weights and auxiliaries held fixed."""
    T_c, T_p = _denominators(F)
    own = np.diagonal(F[:, 1:])
    e_c = 1 - 2 * (np.conj(state.w_c) * F[:, 0]).real + np.abs(state.w_c) ** 2 * T_c
    e_p = 1 - 2 * (np.conj(state.w_p) * own).real + np.abs(state.w_p) ** 2 * T_p
    return augmented_mse(e_c, state.u_c), augmented_mse(e_p, state.u_p)


def objective(h_hats: np.ndarray, P: np.ndarray, rs: bool = True) -> float:
    """Augmented weighted MMSE objective at optimal weights and filters.

    Equals max_k (1 - R_ck) + sum_k (1 - R_pk), instantaneous rates on the
    estimates (the common term is dropped without rate splitting).
    """
    F = effective_gains(h_hats, P)
    T_c, T_p = _denominators(F)
    own = np.abs(np.diagonal(F[:, 1:])) ** 2
    value = float(np.sum(1 - np.log2(T_p / (T_p - own))))
    if rs:
        value += float(np.max(1 - np.log2(T_c / T_p)))
    return value


def surrogate_objective(F, state: IwmmseState) -> float:
    xc, xp = surrogate_terms(F, state)
    return float(np.sum(xp) + (np.max(xc) if state.rs else 0.0))


class _Basis:
    """Orthonormal basis Q of span{h_k}; columns are P = Q X."""

    def __init__(self, h_hats):
        H = h_hats.T  # (M, K)
        U, s, _ = np.linalg.svd(H, full_matrices=False)
        r = int(np.sum(s > 1e-12 * max(s.max(initial=0.0), np.finfo(float).tiny)))
        self.Q = U[:, :r]
        self.E = h_hats.conj() @ self.Q  # (K, r): h_k^H Q


class _ColumnSolver:
    """Closed-form columns for fixed (nu, mu) and the power as a function of mu."""

    def __init__(self, basis: _Basis, state: IwmmseState, nu):
        E = basis.E
        K = E.shape[0]
        c_c = nu * state.u_c * np.abs(state.w_c) ** 2 / LN2 if state.rs else np.zeros(K)
        c_p = state.u_p * np.abs(state.w_p) ** 2 / LN2
        r_p = state.u_p * state.w_p / LN2
        A_p = (E.conj().T * (c_p + c_c)) @ E
        self.lp, self.Vp = np.linalg.eigh(A_p)
        self.bp = self.Vp.conj().T @ (E.conj().T * r_p)  # (r, K): one column per user
        if state.rs:
            r_c = nu * state.u_c * state.w_c / LN2
            A_c = (E.conj().T * c_c) @ E
            self.lc, self.Vc = np.linalg.eigh(A_c)
            self.bc = self.Vc.conj().T @ (E.conj().T @ r_c)
        else:
            self.lc = self.Vc = self.bc = None

    @staticmethod
    def _inv(lam, mu):
        d = lam + mu
        tiny = 1e-12 * max(np.abs(lam).max(initial=0.0), 1e-300)
        with np.errstate(divide="ignore"):
            return np.where(d > tiny, 1.0 / np.where(d > tiny, d, 1.0), 0.0)

    def power(self, mu: float) -> float:
        p = float(np.sum(np.abs(self.bp) ** 2 * self._inv(self.lp, mu)[:, None] ** 2))
        if self.bc is not None:
            p += float(np.sum(np.abs(self.bc) ** 2 * self._inv(self.lc, mu) ** 2))
        return p

    def columns(self, mu: float) -> np.ndarray:
        X_p = self.Vp @ (self._inv(self.lp, mu)[:, None] * self.bp)
        if self.bc is None:
            x_c = np.zeros(X_p.shape[0], dtype=complex)
        else:
            x_c = self.Vc @ (self._inv(self.lc, mu) * self.bc)
        return np.column_stack([x_c, X_p])


def _solve_for_nu(basis, state, nu, P_dl):
    solver = _ColumnSolver(basis, state, nu)
    if solver.power(0.0) <= P_dl:
        mu = 0.0
    else:
        hi = 1.0
        for _ in range(400):
            if solver.power(hi) <= P_dl:
                break
            hi *= 2.0
        else:
            raise NumericalBreakdown("power multiplier bracket expansion failed")
        mu = scipy.optimize.brentq(lambda m: solver.power(m) - P_dl, 0.0, hi, xtol=1e-300, rtol=1e-14)
    X = solver.columns(mu)
    power = float(np.sum(np.abs(X) ** 2))
    if power > P_dl:
        X *= np.sqrt(P_dl / power)
    return X


def solve_precoders(state: IwmmseState, h_hats: np.ndarray, P_dl: float, basis: _Basis | None = None) -> np.ndarray:
    """Minimize the surrogate objective for fixed weights and auxiliaries.

    The result never has a larger surrogate value than ``state.P``.
    """
    if basis is None:
        basis = _Basis(h_hats)
    K = h_hats.shape[0]
    E = basis.E

    def primal(nu):
        X = _solve_for_nu(basis, state, nu, P_dl)
        F = E @ X
        return X, F

    if not state.rs or K == 1:
        nu = np.ones(K)
        X, F = primal(nu)
    else:
        def neg_dual(nu):
            _, F = primal(nu)
            xc, xp = surrogate_terms(F, state)
            return -(float(nu @ xc) + float(xp.sum())), -xc

        start = state.nu if state.nu is not None else np.full(K, 1.0 / K)
        res = scipy.optimize.minimize(
            neg_dual, start, jac=True, method="SLSQP", bounds=[(0.0, 1.0)] * K,
            constraints=[{"type": "eq", "fun": lambda v: v.sum() - 1.0, "jac": lambda v: np.ones_like(v)}],
            options={"ftol": 1e-14, "maxiter": 200},
        )
        nu = np.clip(res.x, 0.0, None)
        nu = nu / nu.sum() if nu.sum() > 0 else np.full(K, 1.0 / K)
        X, F = primal(nu)
    state.nu = nu
    P_new = basis.Q @ X
    if surrogate_objective(F, state) > surrogate_objective(effective_gains(h_hats, state.P), state):
        return state.P
    return P_new


def initial_precoders(h_hats: np.ndarray, P_dl: float, alpha_c: float = 0.5, rs: bool = True) -> np.ndarray:
    """Matched-filter private columns and a summed-estimate common column."""
    K, M = h_hats.shape
    if not rs:
        alpha_c = 0.0
    P = np.zeros((M, K + 1), dtype=complex)
    norms = np.linalg.norm(h_hats, axis=1)
    live = norms > 0
    if live.any():
        P[:, 1:][:, live] = (h_hats[live] / norms[live, None]).T * np.sqrt((1 - alpha_c) * P_dl / K)
    s = h_hats.sum(axis=0)
    if rs and np.linalg.norm(s) > 0:
        P[:, 0] = s / np.linalg.norm(s) * np.sqrt(alpha_c * P_dl)
    return P


@dataclass
class IwmmseResult:
    P: np.ndarray
    iterations: int
    trace: list = field(default_factory=list)  # objective per iteration, initial point first

    @property
    def p_c(self) -> np.ndarray:
        return self.P[:, 0]

    @property
    def P_p(self) -> np.ndarray:
        return self.P[:, 1:].T


def run_iwmmse(h_hats: np.ndarray, P_dl: float, tol: float = 1e-4, max_iter: int = 100,
               rs: bool = True, alpha_c: float = 0.5, init: np.ndarray | None = None) -> IwmmseResult:
    """Alternate weights, auxiliaries and precoders for estimates ``h_hats`` (K, M)."""
    h_hats = np.asarray(h_hats, dtype=complex)
    K, M = h_hats.shape
    if P_dl <= 0:
        return IwmmseResult(np.zeros((M, K + 1), dtype=complex), 0, [float(K + rs)])
    P = initial_precoders(h_hats, P_dl, alpha_c, rs) if init is None else np.array(init, dtype=complex)
    basis = _Basis(h_hats)
    state = IwmmseState(P=P, rs=rs)
    value = objective(h_hats, P, rs)
    trace = [value]
    it = 0
    for it in range(1, max_iter + 1):
        update_equalizers_weights(state, h_hats)
        update_auxiliaries(state, h_hats)
        state.P = solve_precoders(state, h_hats, P_dl, basis)
        new_value = objective(h_hats, state.P, rs)
        trace.append(new_value)
        done = abs(value - new_value) <= tol * max(abs(new_value), 1e-12)
        value = new_value
        if done:
            break
    return IwmmseResult(state.P, it, trace)
