"""Plain-text complex matrix stacks.

Layout::

    <rows> <count>
    re im re im ...      # row 0 of matrix 0
    ...                  # rows in order, matrix after matrix

The first line holds the number of rows per matrix and the number of
matrices (``M K`` for a covariance set, ``M 1`` for a pilot matrix). Each
following line is one matrix row written as interleaved real/imaginary
pairs, so the column count is half the number of fields. Values are
written with ``repr`` and round-trip exactly.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .channel import CovarianceSet
from .errors import ConfigError


def write_matrices(path, mats: np.ndarray) -> None:
    mats = np.asarray(mats, dtype=complex)
    if mats.ndim == 2:
        mats = mats[None]
    count, rows, cols = mats.shape
    lines = [f"{rows} {count}"]
    for mat in mats:
        for row in mat:
            pairs = np.empty(2 * cols)
            pairs[0::2] = row.real
            pairs[1::2] = row.imag
            lines.append(" ".join(repr(float(x)) for x in pairs))
    Path(path).write_text("\n".join(lines) + "\n")


def read_matrices(path) -> np.ndarray:
    """Read a stack written by :func:`write_matrices`; shape ``(count, rows, cols)``."""
    text = Path(path).read_text().split("\n")
    try:
        rows, count = (int(x) for x in text[0].split())
    except ValueError as exc:
        raise ConfigError(f"{path}: malformed header {text[0]!r}") from exc
    body = [line for line in text[1:] if line.strip()]
    if len(body) != rows * count:
        raise ConfigError(f"{path}: expected {rows * count} rows, found {len(body)}")
    data = np.array([[float(x) for x in line.split()] for line in body])
    if data.shape[1] % 2:
        raise ConfigError(f"{path}: odd number of fields per row")
    mats = data[:, 0::2] + 1j * data[:, 1::2]
    return mats.reshape(count, rows, -1)


def save_covariances(path, cov: CovarianceSet) -> None:
    write_matrices(path, cov.C)


def load_covariances(path) -> CovarianceSet:
    C = read_matrices(path)
    if C.shape[1] != C.shape[2]:
        raise ConfigError(f"{path}: covariance matrices must be square, got {C.shape[1:]}")
    return CovarianceSet(C)
