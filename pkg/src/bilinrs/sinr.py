"""Closed-form hardening-bound SINRs of bilinear precoders and instantaneous rates.

With p_pk = A_pk y_k and p_c = A_c y (y the stacked observations), the
expectation terms reduce to traces that are linear or quadratic in
a = vec(A)::

    E[h_k^H p_pk]          = q_k^H a_pk          q_k  = vec(C_k Phi)
    E[h_k^H p_c]           = z_k^H a_c           z_k  = q_k placed in block k
    E|h_k^H p_pi|^2 - ...  = a_pi^H Q_ik a_pi    Q_ik = C_yi^T kron C_k
    var(h_k^H p_c)         = a_c^H Z_k a_c       Z_k  = C_y^T kron C_k
    transmit powers        : F_pk = C_yk^T kron I_M,  F_c = C_y^T kron I_M

The solvers work on the matrix forms directly (``tr(A C_y A^H C_k)`` and
friends); :class:`SinrOperators` also exposes the vector/operator view.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .channel import CovarianceSet
from .errors import ConfigError
from .kron import KronOperator, hermitian_power, vec
from .training import ObservationModel, observation_covariances

# C_k^{-1/2} floors eigenvalues at this fraction of lambda_max.
EIG_FLOOR = 1e-10


@dataclass
class PrecoderTransforms:
    """Deterministic transforms: ``A_p`` is ``(K, M, T)``, ``A_c`` is ``(M, K*T)``."""

    A_p: np.ndarray
    A_c: np.ndarray
    alpha_c: float = 0.0

    @property
    def a_p(self) -> list[np.ndarray]:
        return [vec(A) for A in self.A_p]

    @property
    def a_c(self) -> np.ndarray:
        return vec(self.A_c)

    def precoders(self, y: np.ndarray):
        """Realized precoders for observations ``y`` of shape ``(..., K, T)``.

        Returns ``(p_c, P_p)`` with shapes ``(..., M)`` and ``(..., K, M)``.
        """
        P_p = np.einsum("kmt,...kt->...km", self.A_p, y)
        y_stacked = y.reshape(*y.shape[:-2], -1)
        p_c = np.einsum("mn,...n->...m", self.A_c, y_stacked)
        return p_c, P_p


@dataclass
class SinrOperators:
    """Statistics and Kronecker factors shared by every SINR evaluation.

    Immutable after construction; solver instances may share one object.
    """

    C: np.ndarray  # (K, M, M)
    Phi: np.ndarray  # (M, T)
    sigma_n2: float
    C_yk: np.ndarray  # (K, T, T)
    C_y: np.ndarray = field(init=False)
    CPhi: np.ndarray = field(init=False)
    C_sqrt: np.ndarray = field(init=False)
    C_isqrt: np.ndarray = field(init=False)
    Cy_sqrt: np.ndarray = field(init=False)
    Cy_isqrt: np.ndarray = field(init=False)
    Cyk_inv: np.ndarray = field(init=False)

    def __post_init__(self):
        K, M, _ = self.C.shape
        if self.Phi.shape[0] != M or self.C_yk.shape != (K, self.T, self.T):
            raise ConfigError("covariances, pilot matrix and observation statistics disagree")
        self.C_y = scipy.linalg.block_diag(*self.C_yk)
        self.CPhi = self.C @ self.Phi
        self.C_sqrt = np.stack([hermitian_power(Ck, 0.5) for Ck in self.C])
        self.C_isqrt = np.stack([hermitian_power(Ck, -0.5, EIG_FLOOR) for Ck in self.C])
        self.Cy_sqrt = scipy.linalg.block_diag(*[hermitian_power(B, 0.5) for B in self.C_yk])
        self.Cy_isqrt = scipy.linalg.block_diag(
            *[hermitian_power(B, -0.5, EIG_FLOOR) for B in self.C_yk]
        )
        self.Cyk_inv = np.linalg.inv(self.C_yk)

    @classmethod
    def build(cls, cov: CovarianceSet, Phi: np.ndarray, sigma_n2: float) -> "SinrOperators":
        obs = observation_covariances(cov, Phi, sigma_n2)
        return cls.from_model(cov, obs)

    @classmethod
    def from_model(cls, cov: CovarianceSet, obs: ObservationModel) -> "SinrOperators":
        return cls(C=cov.C, Phi=obs.Phi, sigma_n2=obs.sigma_n2, C_yk=obs.C_yk)

    @property
    def K(self) -> int:
        return self.C.shape[0]

    @property
    def M(self) -> int:
        return self.C.shape[1]

    @property
    def T(self) -> int:
        return self.Phi.shape[1]

    def block(self, k: int) -> slice:
        return slice(k * self.T, (k + 1) * self.T)

    # vector / operator view
    def q(self, k: int) -> np.ndarray:
        return vec(self.CPhi[k])

    def z(self, k: int) -> np.ndarray:
        Z = np.zeros((self.M, self.K * self.T), dtype=complex)
        Z[:, self.block(k)] = self.CPhi[k]
        return vec(Z)

    def Q(self, i: int, k: int) -> KronOperator:
        return KronOperator(self.C[k], self.C_yk[i], (self.M, self.T))

    def Z(self, k: int) -> KronOperator:
        return KronOperator(self.C[k], self.C_y, (self.M, self.K * self.T))

    def F_p(self, k: int) -> KronOperator:
        return KronOperator(None, self.C_yk[k], (self.M, self.T))

    @property
    def F_c(self) -> KronOperator:
        return KronOperator(None, self.C_y, (self.M, self.K * self.T))

    def Z_sqrt(self, k: int) -> KronOperator:
        return KronOperator(self.C_sqrt[k], self.Cy_sqrt, (self.M, self.K * self.T))

    def Z_inv_sqrt(self, k: int) -> KronOperator:
        return KronOperator(self.C_isqrt[k], self.Cy_isqrt, (self.M, self.K * self.T))

    # matrix-form evaluations used by the solvers
    def private_terms(self, A_p: np.ndarray):
        """``(signal, interference, power)`` of the private transforms.

        ``signal[k] = q_k^H a_pk``, ``interference[i, k] = a_pi^H Q_ik a_pi``,
        ``power[i] = a_pi^H F_pi a_pi``.
        """
        self._check_private(A_p)
        signal = np.einsum("kmt,kmt->k", self.CPhi.conj(), A_p)
        S = A_p @ self.C_yk @ np.conj(np.swapaxes(A_p, 1, 2))
        interference = np.einsum("imn,knm->ik", S, self.C).real
        power = np.einsum("imm->i", S).real
        return signal, interference, power

    def common_terms(self, A_c: np.ndarray):
        """``(mean, variance, power)``: z_k^H a_c, a_c^H Z_k a_c and a_c^H F_c a_c."""
        self._check_common(A_c)
        blocks = A_c.reshape(self.M, self.K, self.T)
        mean = np.einsum("kmt,mkt->k", self.CPhi.conj(), blocks)
        S = A_c @ self.C_y @ A_c.conj().T
        var = np.einsum("mn,knm->k", S, self.C).real
        return mean, var, float(np.trace(S).real)

    def private_power(self, A_p: np.ndarray) -> float:
        return float(np.einsum("kmt,kts,kms->", A_p, self.C_yk, A_p.conj()).real)

    def common_power(self, A_c: np.ndarray) -> float:
        return float(np.vdot(A_c, A_c @ self.C_y).real)

    def private_load(self, A_p: np.ndarray) -> np.ndarray:
        """Interference-plus-noise seen by the common stream of each user.

        Sums E|h_k^H p_pi|^2 over all private streams, including user k's
        own (it is still undecoded when the common message is detected),
        plus the unit receiver noise.
        """
        signal, interference, _ = self.private_terms(A_p)
        return interference.sum(axis=0) + np.abs(signal) ** 2 + 1.0

    def _check_private(self, A_p):
        if A_p.shape != (self.K, self.M, self.T):
            raise ConfigError(f"A_p has shape {A_p.shape}, expected {(self.K, self.M, self.T)}")

    def _check_common(self, A_c):
        if A_c.shape != (self.M, self.K * self.T):
            raise ConfigError(f"A_c has shape {A_c.shape}, expected {(self.M, self.K * self.T)}")


def quartic_moment(A: np.ndarray, Phi: np.ndarray, C: np.ndarray) -> float:
    """E|h^H A Phi^H h|^2 for h ~ CN(0, C)."""
    B = A @ Phi.conj().T
    return float(abs(np.trace(B @ C)) ** 2 + np.trace(B @ C @ B.conj().T @ C).real)


def private_sinrs(ops: SinrOperators, A_p: np.ndarray) -> np.ndarray:
    signal, interference, _ = ops.private_terms(A_p)
    return np.abs(signal) ** 2 / (interference.sum(axis=0) + 1.0)


def common_sinrs(ops: SinrOperators, A_p: np.ndarray, A_c: np.ndarray, load=None) -> np.ndarray:
    """Common-stream SINRs; ``load`` may carry a precomputed :meth:`SinrOperators.private_load`."""
    if load is None:
        load = ops.private_load(A_p)
    mean, var, _ = ops.common_terms(A_c)
    return np.abs(mean) ** 2 / (var + load)


def private_sinr(transforms: PrecoderTransforms, ops: SinrOperators, k: int) -> float:
    return float(private_sinrs(ops, transforms.A_p)[k])


def common_sinr(transforms: PrecoderTransforms, ops: SinrOperators, k: int) -> float:
    return float(common_sinrs(ops, transforms.A_p, transforms.A_c)[k])


def hardening_rates(transforms: PrecoderTransforms, ops: SinrOperators):
    """Lower-bound rates ``(R_c per user, R_p per user)`` in bits."""
    gc = common_sinrs(ops, transforms.A_p, transforms.A_c)
    gp = private_sinrs(ops, transforms.A_p)
    return np.log2(1.0 + gc), np.log2(1.0 + gp)


@dataclass
class InstantRates:
    """Per-realization rates. Leading axes follow the inputs."""

    common_sinr: np.ndarray  # (..., K)
    private_sinr: np.ndarray  # (..., K)

    @property
    def common_rate(self) -> np.ndarray:
        """Deliverable common rate log2(1 + min_k SINR)."""
        return np.log2(1.0 + self.common_sinr.min(axis=-1))

    @property
    def private_rates(self) -> np.ndarray:
        return np.log2(1.0 + self.private_sinr)

    @property
    def sum_rs(self) -> np.ndarray:
        return self.common_rate + self.private_rates.sum(axis=-1)

    @property
    def sum_nors(self) -> np.ndarray:
        return self.private_rates.sum(axis=-1)


def instantaneous_rates(H: np.ndarray, p_c: np.ndarray, P_p: np.ndarray) -> InstantRates:
    """Rates for realized channels ``H`` (..., K, M) and precoders.

    ``p_c`` is (..., M) and ``P_p`` (..., K, M); unit receiver noise.
    """
    gains = np.abs(np.einsum("...km,...jm->...kj", H.conj(), P_p)) ** 2
    total = gains.sum(axis=-1)
    desired = np.diagonal(gains, axis1=-2, axis2=-1)
    common = np.abs(np.einsum("...km,...m->...k", H.conj(), p_c)) ** 2
    return InstantRates(
        common_sinr=common / (total + 1.0),
        private_sinr=desired / (total - desired + 1.0),
    )
