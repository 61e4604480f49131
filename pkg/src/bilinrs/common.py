"""Common precoder: max-min common SINR by iterative SINR increase.

For fixed private transforms every user sees a constant load
sigma_k^2 (private interference plus noise), and the common SINR is a
ratio of quadratic forms in a_c. The quadratic transform replaces it by

    2 Re{eta_k^* z_k^H a_c} - |eta_k|^2 (a_c^H Z_k a_c + sigma_k^2)

and each step moves a_c towards the weakest user on the power sphere:

    a_c <- (1 - u) a_c + v Z_l^{-1/2} a_perp

where a_perp is orthogonal to Z_l^{-1/2} F_c a_c (so the power cross term
vanishes) and normalized so that ||F_c^{1/2} Z_l^{-1/2} a_perp|| = 1, which
makes |v|^2 = alpha_c P_dl (2u - u^2) keep the budget met with equality.
A step is kept only if the minimum common SINR strictly increases; the
step size doubles on success and halves on failure.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .sinr import SinrOperators, common_sinrs


def init_common(ops: SinrOperators, budget: float) -> np.ndarray:
    """Phi in the block of the user with the smallest tr(C_k), zeros elsewhere, scaled to the budget."""
    weakest = int(np.argmin(np.trace(ops.C, axis1=1, axis2=2).real))
    A_c = np.zeros((ops.M, ops.K * ops.T), dtype=complex)
    A_c[:, ops.block(weakest)] = ops.Phi
    return _rescale(A_c, ops.common_power(A_c), budget)


def tiled_common(ops: SinrOperators, budget: float) -> np.ndarray:
    """A_c = [Phi, ..., Phi] scaled to the budget."""
    A_c = np.tile(ops.Phi, (1, ops.K)).astype(complex)
    return _rescale(A_c, ops.common_power(A_c), budget)


def _rescale(A, power, budget):
    if power <= 0 or budget <= 0:
        return np.zeros_like(A)
    return A * np.sqrt(budget / power)


def update_eta(A_c: np.ndarray, load: np.ndarray, ops: SinrOperators) -> np.ndarray:
    mean, var, _ = ops.common_terms(A_c)
    return mean / (var + load)


def constraint_lhs(A_c: np.ndarray, eta: np.ndarray, load: np.ndarray, ops: SinrOperators) -> np.ndarray:
    """Quadratic-transform form of each user's common SINR."""
    mean, var, _ = ops.common_terms(A_c)
    return 2 * (np.conj(eta) * mean).real - np.abs(eta) ** 2 * (var + load)


def _best_start(ops, A_p, init, load, budget):
    """Starting point with the largest minimum common SINR.

    Candidates: :func:`init_common`, :func:`tiled_common`, the stacked
    private transforms and ``init`` (all rescaled to the budget).
    The single-block start alone leaves the other users at zero SINR, where
    the step direction vanishes, and the iteration only climbs locally, so
    a start aligned with the users' own precoders matters.
    """
    candidates = [init_common(ops, budget), tiled_common(ops, budget)]
    if np.any(A_p):
        stacked = np.concatenate(list(A_p), axis=1)
        candidates.append(_rescale(stacked, ops.common_power(stacked), budget))
    if init is not None and np.any(init):
        init = np.asarray(init, dtype=complex)
        candidates.append(_rescale(init, ops.common_power(init), budget))
    best = None
    for A in candidates:
        gamma = common_sinrs(ops, None, A, load=load)
        if best is None or gamma.min() > best[1].min():
            best = (A, gamma)
    return best


@dataclass
class StepResult:
    accepted: bool
    A_c: np.ndarray
    u: float
    worst_user: int
    gamma_min: float
    gamma: np.ndarray
    # diagnostics of the proposed move (None when no direction exists)
    candidate: np.ndarray | None = None
    direction: np.ndarray | None = None
    projector_axis: np.ndarray | None = None


def sinr_increase_step(A_c: np.ndarray, eta: np.ndarray, u: float, ops: SinrOperators,
                       load: np.ndarray, budget: float, u_max: float = 1.0,
                       gamma: np.ndarray | None = None) -> StepResult:
    """One iteration of the common-SINR increasing update.

    ``A_c`` must meet the budget with equality. Returns the (possibly
    unchanged) transform and the adapted step size.
    """
    if gamma is None:
        gamma = common_sinrs(ops, None, A_c, load=load)
    ell = int(np.argmin(gamma))
    gmin = float(gamma[ell])

    Ci, Cs = ops.C_isqrt[ell], ops.C_sqrt[ell]

    def z_isqrt(X):
        return Ci @ X @ ops.Cy_isqrt

    t = z_isqrt(A_c @ ops.C_y)
    target = np.zeros_like(A_c)
    target[:, ops.block(ell)] = ops.CPhi[ell]
    d = eta[ell] * z_isqrt(target) - abs(eta[ell]) ** 2 * (1 - u) * (Cs @ A_c @ ops.Cy_sqrt)
    tt = np.vdot(t, t).real
    a_perp = d - t * (np.vdot(t, d) / tt) if tt > 0 else d
    if np.linalg.norm(a_perp) <= 1e-14 * max(np.linalg.norm(d), np.finfo(float).tiny):
        return StepResult(False, A_c, u / 2, ell, gmin, gamma)

    w = z_isqrt(a_perp)
    norm = np.sqrt(ops.common_power(w))
    a_perp = a_perp / norm
    w = w / norm
    c = np.vdot(d, a_perp)
    v = np.sqrt(budget * (2 * u - u * u)) * np.exp(-1j * np.angle(c))
    candidate = (1 - u) * A_c + v * w
    gamma_new = common_sinrs(ops, None, candidate, load=load)
    if gamma_new.min() > gmin:
        return StepResult(True, candidate, min(2 * u, u_max), ell, float(gamma_new.min()),
                          gamma_new, candidate, a_perp, t)
    return StepResult(False, A_c, u / 2, ell, gmin, gamma, candidate, a_perp, t)


@dataclass
class CommonResult:
    A_c: np.ndarray
    sinr: np.ndarray
    sweeps: int
    steps: int
    accepted: int
    trace: list = field(default_factory=list)  # (step, worst_user, gamma_min, u, power)

    @property
    def rates(self) -> np.ndarray:
        return np.log2(1.0 + self.sinr)

    @property
    def min_rate(self) -> float:
        return float(np.log2(1.0 + self.sinr.min())) if self.sinr.size else 0.0


def optimize_common(A_p: np.ndarray, ops: SinrOperators, alpha_c: float, P_dl: float,
                    init=None, u_max: float = 1.0, N_max: int = 500,
                    outer_tol: float = 1e-4, max_sweeps: int = 50,
                    u_min: float = 1e-4, record: bool = False) -> CommonResult:
    """Maximize min_k gamma_ck under the common budget alpha_c P_dl.

    Alternates the auxiliary update with runs of the SINR-increasing
    iteration. A run ends after ``N_max`` steps or once the step size
    falls below ``u_min``; the sweeps stop when the relative gain of the
    minimum common rate drops below ``outer_tol``.
    """
    budget = alpha_c * P_dl
    shape = (ops.M, ops.K * ops.T)
    if budget <= 0:
        return CommonResult(np.zeros(shape, dtype=complex), np.zeros(ops.K), 0, 0, 0)
    load = ops.private_load(A_p)
    A_c, gamma = _best_start(ops, A_p, init, load, budget)
    value = np.log2(1 + gamma.min())
    trace = []
    steps = accepted = sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        eta = update_eta(A_c, load, ops)
        u = u_max
        for _ in range(N_max):
            res = sinr_increase_step(A_c, eta, u, ops, load, budget, u_max=u_max, gamma=gamma)
            steps += 1
            if res.accepted:
                accepted += 1
                A_c, gamma = res.A_c, res.gamma
            if record:
                trace.append((steps, res.worst_user, res.gamma_min, u, ops.common_power(A_c)))
            u = res.u
            if u < u_min:
                break
        new_value = np.log2(1 + gamma.min())
        gain = new_value - value
        value = new_value
        if gain <= outer_tol * max(value, np.finfo(float).tiny):
            break
    return CommonResult(A_c, gamma, sweeps, steps, accepted, trace)
