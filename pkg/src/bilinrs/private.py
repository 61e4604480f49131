"""Private precoder optimization: Lagrangian dual transform + quadratic transform.

One outer iteration sets the slacks to the current SINRs, the auxiliaries
to their closed-form optimum and then maximizes the quadratic-transform
surrogate over the transforms under the private power budget. The
surrogate's maximizer for a fixed multiplier lambda is

    a_pk(lambda) = sqrt(1 + alpha_k) beta_k G_k^{-1} q_k / (1 + |beta_k|^2 q_k^H G_k^{-1} q_k)

with G_k = C_yk^T kron (W + lambda I) and W = sum_i |beta_i|^2 C_i
(Sherman-Morrison removes the rank-one |beta_k|^2 q_k q_k^H term). One
eigendecomposition of W per outer iteration makes every power evaluation
of the lambda root search an O(M K) operation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.optimize

from .errors import NumericalBreakdown
from .sinr import SinrOperators, private_sinrs

LN2 = np.log(2.0)


def f1a(A_p: np.ndarray, alpha: np.ndarray, ops: SinrOperators) -> float:
    """Dual-transform objective in bits.

    The terms outside the logarithm are divided by ln 2 so that the
    maximizing slack is exactly alpha_k = gamma_pk and the maximum equals
    sum_k log2(1 + gamma_pk).
    """
    gamma = private_sinrs(ops, A_p)
    alpha = np.asarray(alpha, dtype=float)
    return float(
        np.sum(np.log2(1.0 + alpha))
        + np.sum(-alpha + (1.0 + alpha) * gamma / (1.0 + gamma)) / LN2
    )


def f2a(A_p: np.ndarray, beta: np.ndarray, alpha: np.ndarray, ops: SinrOperators) -> float:
    """Quadratic-transform surrogate of sum_k (1+alpha_k) gamma_k / (1+gamma_k)."""
    signal, interference, _ = ops.private_terms(A_p)
    denom = np.abs(signal) ** 2 + interference.sum(axis=0) + 1.0
    return float(
        np.sum(2 * np.sqrt(1 + alpha) * (np.conj(beta) * signal).real - np.abs(beta) ** 2 * denom)
    )


def f2(A_p: np.ndarray, alpha: np.ndarray, ops: SinrOperators) -> float:
    gamma = private_sinrs(ops, A_p)
    return float(np.sum((1 + alpha) * gamma / (1 + gamma)))


def update_alpha(A_p: np.ndarray, ops: SinrOperators) -> np.ndarray:
    return private_sinrs(ops, A_p)


def update_beta(A_p: np.ndarray, alpha: np.ndarray, ops: SinrOperators) -> np.ndarray:
    signal, interference, _ = ops.private_terms(A_p)
    denom = 1.0 + interference.sum(axis=0) + np.abs(signal) ** 2
    return np.sqrt(1.0 + alpha) * signal / denom


class _LambdaSolver:
    """Closed-form a_p(lambda) and its power for fixed (alpha, beta)."""

    def __init__(self, beta, alpha, ops: SinrOperators):
        self.ops = ops
        self.active = np.abs(beta) > 0
        W = np.einsum("k,kmn->mn", np.abs(beta) ** 2, ops.C)
        w, U = np.linalg.eigh(0.5 * (W + W.conj().T))
        null = w <= 1e-12 * max(w.max(initial=0.0), np.finfo(float).tiny)
        self.w = np.where(null, 0.0, w)
        self.U = U
        # X_k = U^H C_k Phi C_yk^{-1}; r_k[m] = (X_k C_yk X_k^H)[m, m]
        Y = U.conj().T[None] @ ops.CPhi
        self.X = Y @ ops.Cyk_inv
        self.X[:, null, :] = 0.0
        r = np.einsum("kmt,kmt->km", Y.conj(), self.X).real
        r[~self.active] = 0.0
        self.r = np.clip(r, 0.0, None)
        self.null = null
        self.coef = np.sqrt(1.0 + alpha) * beta
        self.beta2 = np.abs(beta) ** 2

    def _inv_eigs(self, lam):
        d = self.w + lam
        with np.errstate(divide="ignore"):
            inv = np.where(self.null & (lam <= 0), 0.0, 1.0 / d)
        if not np.all(np.isfinite(inv)):
            raise NumericalBreakdown("singular private system at lambda = 0")
        return inv

    def _scale(self, inv):
        return self.coef / (1.0 + self.beta2 * (self.r @ inv))

    def power(self, lam: float) -> float:
        inv = self._inv_eigs(lam)
        s = self._scale(inv)
        return float(np.sum(np.abs(s) ** 2 * (self.r @ inv**2)))

    def transforms(self, lam: float) -> np.ndarray:
        inv = self._inv_eigs(lam)
        s = self._scale(inv)
        A = self.U[None] @ (inv[None, :, None] * self.X)
        A *= s[:, None, None]
        A[~self.active] = 0.0
        return A


def solve_ap_given_lambda(beta, alpha, lam: float, ops: SinrOperators, dense: bool = False):
    """Stationary point of the Lagrangian for a fixed multiplier.

    ``dense=True`` builds the ``(M T)``-sized system explicitly and solves it
    directly; it is the reference path for small problems.
    """
    if not dense:
        return _LambdaSolver(beta, alpha, ops).transforms(lam)
    K, M, T = ops.K, ops.M, ops.T
    A_p = np.zeros((K, M, T), dtype=complex)
    for k in range(K):
        if beta[k] == 0:
            continue
        q = ops.q(k)
        G = abs(beta[k]) ** 2 * np.outer(q, q.conj())
        for i in range(K):
            G = G + abs(beta[i]) ** 2 * ops.Q(k, i).dense()
        G = G + lam * ops.F_p(k).dense()
        if np.linalg.matrix_rank(G) < G.shape[0]:
            a = np.linalg.lstsq(G, q, rcond=1e-12)[0]
        else:
            a = np.linalg.solve(G, q)
        A_p[k] = (np.sqrt(1 + alpha[k]) * beta[k] * a).reshape(M, T, order="F")
    return A_p


def bisect_lambda(beta, alpha, ops: SinrOperators, budget: float, eps: float = 1e-6,
                  max_doublings: int = 200):
    """Smallest multiplier whose solution meets the power budget.

    Returns ``(lambda, A_p)``. The returned point never exceeds the budget
    and, when the constraint is active, lies within ``eps * budget`` of it.
    """
    solver = _LambdaSolver(beta, alpha, ops)
    if solver.power(0.0) <= budget:
        return 0.0, solver.transforms(0.0)
    lo, hi = 0.0, 1.0
    doublings = 0
    while solver.power(hi) > budget:
        lo, hi = hi, 2.0 * hi
        doublings += 1
        if doublings > max_doublings:
            raise NumericalBreakdown("lambda bracket expansion failed")
    if solver.power(hi) < budget * (1 - eps):
        # Brent's bracketed root search on the monotone power curve
        hi = scipy.optimize.brentq(lambda lam: solver.power(lam) - budget, lo, hi,
                                   xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    A_p = solver.transforms(hi)
    power = ops.private_power(A_p)
    if power > budget:
        A_p *= np.sqrt(budget / power)
    return hi, A_p


def init_private(ops: SinrOperators, budget: float) -> np.ndarray:
    """A_pk = Phi for every user, jointly scaled to the full budget."""
    A_p = np.broadcast_to(ops.Phi, (ops.K, ops.M, ops.T)).astype(complex)
    return rescale(A_p, ops.private_power(A_p), budget)


def rescale(A: np.ndarray, power: float, budget: float) -> np.ndarray:
    if power <= 0 or budget <= 0:
        return np.zeros_like(A)
    return A * np.sqrt(budget / power)


@dataclass
class PrivateResult:
    A_p: np.ndarray
    sinr: np.ndarray
    iterations: int
    trace: list = field(default_factory=list)  # (iteration, f1a, power)

    @property
    def rates(self) -> np.ndarray:
        return np.log2(1.0 + self.sinr)


def optimize_private(ops: SinrOperators, alpha_c: float, P_dl: float, init=None,
                     tol: float = 1e-5, max_iter: int = 200, eps: float = 1e-12) -> PrivateResult:
    """Ascent on sum_k log2(1 + gamma_pk) under the private budget (1 - alpha_c) P_dl.

    ``init`` (transforms of shape ``(K, M, T)``) is rescaled to the full
    budget before use. ``eps`` is the relative accuracy of the lambda
    bisection; it is kept far below ``tol`` so budget slack cannot break
    the monotone ascent.
    """
    budget = (1.0 - alpha_c) * P_dl
    K, M, T = ops.K, ops.M, ops.T
    if budget <= 0:
        A_p = np.zeros((K, M, T), dtype=complex)
        return PrivateResult(A_p, np.zeros(K), 0, [(0, 0.0, 0.0)])
    if init is None:
        A_p = init_private(ops, budget)
    else:
        A_p = rescale(np.asarray(init, dtype=complex), ops.private_power(init), budget)
        if not np.any(A_p):
            A_p = init_private(ops, budget)

    gamma = private_sinrs(ops, A_p)
    value = float(np.sum(np.log2(1 + gamma)))
    trace = [(0, value, ops.private_power(A_p))]
    it = 0
    for it in range(1, max_iter + 1):
        alpha = gamma
        beta = update_beta(A_p, alpha, ops)
        if not np.any(beta):
            break
        _, A_new = bisect_lambda(beta, alpha, ops, budget, eps=eps)
        A_p = A_new
        gamma = private_sinrs(ops, A_p)
        new_value = float(np.sum(np.log2(1 + gamma)))
        trace.append((it, new_value, ops.private_power(A_p)))
        converged = abs(new_value - value) <= tol * max(abs(new_value), np.finfo(float).tiny)
        value = new_value
        if converged:
            break
    return PrivateResult(A_p, gamma, it, trace)
