"""Matrix-free Kronecker operators.

Everything uses column-major vectorization, for which

    (B^T kron A) vec(X) = vec(A X B).

An operator is stored as its two factors and applied through the matrix
product on the right-hand side, so the (dim^2)-sized Kronecker matrix is
never formed (``dense`` exists for tests on small instances).
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError


def vec(X: np.ndarray) -> np.ndarray:
    return np.asarray(X).reshape(-1, order="F")


def unvec(x: np.ndarray, rows: int, cols: int) -> np.ndarray:
    return np.asarray(x).reshape(rows, cols, order="F")


def apply_kron(left, right, x: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Return ``(right^T kron left) @ x`` for ``x = vec(X)``, ``X`` of ``shape``.

    ``None`` for a factor means the identity.
    """
    rows, cols = shape
    if x.size != rows * cols:
        raise ConfigError(f"vector of length {x.size} does not reshape to {shape}")
    X = unvec(x, rows, cols)
    if left is not None:
        if left.shape[1] != rows:
            raise ConfigError(f"left factor {left.shape} does not conform with {shape}")
        X = left @ X
    if right is not None:
        if right.shape[0] != cols:
            raise ConfigError(f"right factor {right.shape} does not conform with {shape}")
        X = X @ right
    return vec(X)


class KronOperator:
    """The linear map ``vec(X) -> vec(left @ X @ right)``."""

    def __init__(self, left, right, shape: tuple[int, int]):
        self.left = left
        self.right = right
        self.in_shape = tuple(shape)

    @property
    def size(self) -> int:
        return self.in_shape[0] * self.in_shape[1]

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Matrix form of the map."""
        if self.left is not None:
            X = self.left @ X
        if self.right is not None:
            X = X @ self.right
        return X

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return apply_kron(self.left, self.right, x, self.in_shape)

    __matmul__ = matvec

    def quad(self, x: np.ndarray) -> float:
        """Real part of ``x^H op x`` (exact for Hermitian operators)."""
        return float(np.vdot(x, self.matvec(x)).real)

    def dense(self) -> np.ndarray:
        rows, cols = self.in_shape
        L = np.eye(rows) if self.left is None else self.left
        R = np.eye(cols) if self.right is None else self.right
        return np.kron(R.T, L)


def hermitian_power(C: np.ndarray, power: float, floor_rel: float = 0.0) -> np.ndarray:
    """``C**power`` for Hermitian PSD ``C`` through its eigendecomposition.

    Eigenvalues below ``floor_rel * lambda_max`` are raised to that floor
    first, which keeps negative powers finite on rank-deficient input.
    """
    w, U = np.linalg.eigh(C)
    top = max(w.max(initial=0.0), 0.0)
    floor = floor_rel * top
    w = np.maximum(w, floor) if floor > 0 else np.clip(w, 0.0, None)
    with np.errstate(divide="ignore"):
        wp = np.where(w > 0, w ** power, 0.0)
    return (U * wp) @ U.conj().T
