"""DL training with reused pilots: pilot matrix, observations and their statistics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .channel import CovarianceSet, crandn
from .errors import ConfigError


def build_pilot_matrix(M: int, T_dl: int) -> np.ndarray:
    """Orthonormal ``M x T_dl`` pilot matrix with antenna reuse.

    Stacks ceil(M/T_dl) identity blocks, truncates to M rows and normalizes
    each column, so antennas ``m`` and ``m + T_dl`` share pilot ``m % T_dl``.
    """
    if not 1 <= T_dl <= M:
        raise ConfigError(f"need 1 <= T_dl <= M, got T_dl={T_dl}, M={M}")
    reps = -(-M // T_dl)
    Phi = np.tile(np.eye(T_dl), (reps, 1))[:M].astype(complex)
    Phi /= np.linalg.norm(Phi, axis=0)
    return Phi


def training_noise_variance(P_dl: float, T_dl: int) -> float:
    """Lumped training and feedback noise variance 1 / (P_dl * T_dl)."""
    if not P_dl > 0 or T_dl < 1:
        raise ConfigError(f"need P_dl > 0 and T_dl >= 1, got P_dl={P_dl}, T_dl={T_dl}")
    return 1.0 / (P_dl * T_dl)


def observe(h: np.ndarray, Phi: np.ndarray, sigma_n2: float, rng=None, noise=None) -> np.ndarray:
    """y_k = Phi^H h_k + n_k for channels with the antenna index last.

    Either ``rng`` draws fresh unit-variance noise or ``noise`` supplies it
    (unit variance; it is scaled by ``sqrt(sigma_n2)`` here), which lets a
    caller reuse one draw across several noise levels.
    """
    y = np.asarray(h) @ Phi.conj()
    if sigma_n2 > 0:
        if noise is None:
            noise = crandn(rng, *y.shape)
        y = y + np.sqrt(sigma_n2) * noise
    return y


@dataclass
class ObservationModel:
    """Second-order statistics of the stacked observation y = D h + n.

    ``C_yk`` has shape ``(K, T, T)``. D = I_K kron Phi^H is kept implicit.
    """

    Phi: np.ndarray
    sigma_n2: float
    C_yk: np.ndarray

    @property
    def K(self) -> int:
        return self.C_yk.shape[0]

    @property
    def T(self) -> int:
        return self.Phi.shape[1]

    @property
    def C_y(self) -> np.ndarray:
        return scipy.linalg.block_diag(*self.C_yk)

    def selection(self, k: int) -> slice:
        """Index range of user ``k`` inside a stacked observation vector."""
        return slice(k * self.T, (k + 1) * self.T)

    def D(self) -> np.ndarray:
        return np.kron(np.eye(self.K), self.Phi.conj().T)


def observation_covariances(cov: CovarianceSet, Phi: np.ndarray, sigma_n2: float) -> ObservationModel:
    T = Phi.shape[1]
    C_yk = np.einsum("mt,kmn,ns->kts", Phi.conj(), cov.C, Phi) + sigma_n2 * np.eye(T)
    C_yk = 0.5 * (C_yk + np.conj(np.swapaxes(C_yk, 1, 2)))
    return ObservationModel(Phi=Phi, sigma_n2=float(sigma_n2), C_yk=C_yk)
