"""Sample covariance and signal/noise subspace extraction per subcarrier."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .signal import ReceivedData


@dataclass(frozen=True)
class SubspaceDecomposition:
    """Signal/noise eigenbasis of one per-subcarrier covariance matrix.

    ``signal_basis`` holds the eigenvectors of the P largest eigenvalues,
    ``noise_basis`` the remaining N - P; together they are orthonormal.
    ``eigenvalues`` is the full real spectrum in descending order.
    """

    signal_basis: np.ndarray
    noise_basis: np.ndarray
    eigenvalues: np.ndarray

    @property
    def n_targets(self) -> int:
        return self.signal_basis.shape[1]


def sample_covariance(y: np.ndarray) -> np.ndarray:
    """Sample covariance (1/K) Y Y^H of an N x K snapshot matrix.

    The output is symmetrized so it is Hermitian to machine precision.
    """
    y = np.asarray(y)
    if y.ndim != 2 or y.shape[1] < 1:
        raise ValueError("expected an N x K matrix with K >= 1")
    sigma = y @ y.conj().T / y.shape[1]
    return (sigma + sigma.conj().T) / 2.0


def hermitian_eig(sigma: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a Hermitian matrix, eigenvalues descending.

    Returns (eigenvalues, eigenvectors) with eigenvectors in columns matching
    the eigenvalue order. The input is symmetrized before decomposition.
    """
    sigma = np.asarray(sigma)
    if not np.all(np.isfinite(sigma)):
        raise ValueError("covariance contains non-finite entries")
    sigma = (sigma + sigma.conj().T) / 2.0
    values, vectors = np.linalg.eigh(sigma)
    return values[::-1], vectors[:, ::-1]


def split_subspaces(
    eigenvalues: np.ndarray, eigenvectors: np.ndarray, n_targets: int
) -> SubspaceDecomposition:
    """Split a descending eigendecomposition into signal and noise subspaces."""
    n = eigenvectors.shape[0]
    if not 1 <= n_targets < n:
        raise ValueError(f"n_targets must be in [1, {n - 1}], got {n_targets}")
    return SubspaceDecomposition(
        signal_basis=eigenvectors[:, :n_targets].copy(),
        noise_basis=eigenvectors[:, n_targets:].copy(),
        eigenvalues=np.asarray(eigenvalues, dtype=float).copy(),
    )


def decompose_covariance(sigma: np.ndarray, n_targets: int) -> SubspaceDecomposition:
    """Covariance to :class:`SubspaceDecomposition` in one step."""
    values, vectors = hermitian_eig(sigma)
    return split_subspaces(values, vectors, n_targets)


def decompose_received(
    received: ReceivedData, n_targets: int
) -> list[SubspaceDecomposition]:
    """Per-subcarrier covariance + eigendecomposition of received data."""
    return [
        decompose_covariance(sample_covariance(y_m), n_targets)
        for y_m in received.per_subcarrier
    ]
