"""User drops, multi-cluster DL covariance matrices and channel sampling.

Covariances follow the cluster/ray sum

    C_k = p_k * sum_n (beta_n / N_rays) * sum_m a(theta_knm) a(theta_knm)^H

with ULA steering vectors evaluated at the DL carrier (antenna spacing of
half an UL wavelength, so the phase progression carries the DL/UL
frequency ratio ``nu``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ConfigError, InvalidCovarianceError

# Path loss: p_k = (d_k / D_REF)**(-PATHLOSS_EXP), rescaled to max_k p_k = 1.
D_REF = 100.0
PATHLOSS_EXP = 3.7

# "distance": the law above; "equal": every user gets p_k = 1.
PATH_LOSS_MODELS = ("distance", "equal")

# Angular spreads (radians).
CENTER_SPREAD = np.pi / 3
CLUSTER_SPREAD = np.pi / 12
RAY_SPREAD = np.pi / 90


@dataclass(frozen=True)
class ScenarioConfig:
    """Cell layout and scattering parameters of one scenario."""

    M: int = 64
    K: int = 5
    cell_radius: float = 250.0
    N_path: int = 6
    N_rays: int = 20
    nu: float = 1.1
    seed: int = 0
    center_spread: float = CENTER_SPREAD
    cluster_spread: float = CLUSTER_SPREAD
    ray_spread: float = RAY_SPREAD
    path_loss: str = "distance"

    def __post_init__(self):
        if self.M < 2:
            raise ConfigError(f"M must be >= 2, got {self.M}")
        if self.K < 1:
            raise ConfigError(f"K must be >= 1, got {self.K}")
        if self.N_path < 1 or self.N_rays < 1:
            raise ConfigError("N_path and N_rays must be >= 1")
        if not self.nu > 0:
            raise ConfigError(f"nu must be positive, got {self.nu}")
        if self.path_loss not in PATH_LOSS_MODELS:
            raise ConfigError(f"path_loss must be one of {PATH_LOSS_MODELS}, got {self.path_loss!r}")
        if min(self.center_spread, self.cluster_spread, self.ray_spread) < 0:
            raise ConfigError("angular spreads must be nonnegative")
        if not self.cell_radius > 0:
            raise ConfigError(f"cell_radius must be positive, got {self.cell_radius}")


@dataclass
class UserGeometry:
    """Random drop: distances, path gains, cluster powers and ray angles.

    ``angles`` has shape ``(K, N_path, N_rays)``.
    """

    distances: np.ndarray
    path_gains: np.ndarray
    cluster_powers: np.ndarray
    angles: np.ndarray


@dataclass
class CovarianceSet:
    """Per-user DL covariances ``C`` of shape ``(K, M, M)``."""

    C: np.ndarray

    @property
    def K(self) -> int:
        return self.C.shape[0]

    @property
    def M(self) -> int:
        return self.C.shape[1]

    def vec(self, k: int) -> np.ndarray:
        """Column-major vectorization c_k of C_k."""
        return self.C[k].reshape(-1, order="F")

    @property
    def C_h(self) -> np.ndarray:
        """Block-diagonal covariance of the stacked channel vector."""
        return scipy.linalg.block_diag(*self.C)

    @property
    def c_h(self) -> np.ndarray:
        return self.C_h.reshape(-1, order="F")


def steering_vector(theta, nu: float, M: int) -> np.ndarray:
    """ULA steering vector(s) at the DL carrier.

    Entry ``i`` (0-based) is ``exp(j*pi*nu*i*sin(theta))``. ``theta`` may be
    an array, in which case the antenna index is the last axis.
    """
    theta = np.asarray(theta, dtype=float)
    idx = np.arange(M)
    return np.exp(1j * np.pi * nu * np.multiply.outer(np.sin(theta), idx))


def cluster_powers(N_path: int) -> np.ndarray:
    beta = np.exp(-np.arange(1, N_path + 1) / 2.0)
    return beta / beta.sum()


def path_gains(distances: np.ndarray, model: str = "distance") -> np.ndarray:
    if model == "equal":
        return np.ones(np.shape(distances))
    gains = (np.asarray(distances, dtype=float) / D_REF) ** (-PATHLOSS_EXP)
    return gains / gains.max()


def drop_users(cfg: ScenarioConfig, rng: np.random.Generator) -> UserGeometry:
    """Drop ``cfg.K`` users uniformly (by area) in the cell and draw their rays."""
    K, N, R = cfg.K, cfg.N_path, cfg.N_rays
    # 1 - U lies in (0, 1], so distances never hit zero.
    distances = cfg.cell_radius * np.sqrt(1.0 - rng.random(K))
    centers = rng.uniform(-cfg.center_spread, cfg.center_spread, size=K)
    clusters = centers[:, None] + rng.uniform(-cfg.cluster_spread, cfg.cluster_spread, size=(K, N))
    angles = clusters[:, :, None] + rng.uniform(-cfg.ray_spread, cfg.ray_spread, size=(K, N, R))
    return UserGeometry(
        distances=distances,
        path_gains=path_gains(distances, cfg.path_loss),
        cluster_powers=cluster_powers(N),
        angles=angles,
    )


def build_covariance(geom: UserGeometry, cfg: ScenarioConfig) -> CovarianceSet:
    """Accumulate the cluster/ray sum for every user."""
    K, N, R = geom.angles.shape
    a = steering_vector(geom.angles, cfg.nu, cfg.M)  # (K, N, R, M)
    weights = np.sqrt(geom.cluster_powers / R)[None, :, None, None]
    a = (a * weights).reshape(K, N * R, cfg.M)
    C = np.einsum("krm,krn->kmn", a, a.conj())
    C *= geom.path_gains[:, None, None]
    C = 0.5 * (C + np.conj(np.swapaxes(C, 1, 2)))
    return CovarianceSet(C)


def psd_sqrt(C: np.ndarray) -> np.ndarray:
    """Hermitian square root of a PSD matrix; rejects clearly indefinite input."""
    if not np.allclose(C, C.conj().T, atol=1e-10 * max(1.0, np.abs(C).max())):
        raise InvalidCovarianceError("covariance is not Hermitian")
    w, U = np.linalg.eigh(C)
    scale = max(np.abs(w).max(initial=0.0), np.finfo(float).tiny)
    if w.min(initial=0.0) < -1e-8 * scale:
        raise InvalidCovarianceError(
            f"covariance has negative eigenvalue {w.min():.3e} (scale {scale:.3e})"
        )
    return (U * np.sqrt(np.clip(w, 0.0, None))) @ U.conj().T


def crandn(rng: np.random.Generator, *shape) -> np.ndarray:
    """Standard circularly-symmetric complex Gaussian samples."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def sample_channels(cov: CovarianceSet, rng: np.random.Generator, n: int | None = None) -> np.ndarray:
    """Draw h_k ~ CN(0, C_k) independently for every user.

    Returns shape ``(K, M)``, or ``(n, K, M)`` when ``n`` is given.
    """
    roots = np.stack([psd_sqrt(Ck) for Ck in cov.C])
    shape = (cov.K, cov.M) if n is None else (n, cov.K, cov.M)
    w = crandn(rng, *shape)
    return np.einsum("kmn,...kn->...km", roots, w)
