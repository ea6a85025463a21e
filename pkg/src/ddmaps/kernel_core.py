"""Gaussian kernel assembly, diffusion normalizations and eigendecomposition.

The kernel used throughout is

    K(x, y) = exp(-||x - y||^2 / (2 * epsilon))

so ``epsilon`` carries units of squared distance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.spatial.distance import cdist, pdist, squareform

from .errors import InvalidConfig, InvalidData, NumericalDegeneracy

__all__ = [
    "KernelConfig",
    "EigenSystem",
    "as_data_matrix",
    "squared_distances",
    "median_epsilon",
    "kernel_matrix",
    "cross_kernel",
    "normalize",
    "eigendecompose",
    "fix_signs",
]


@dataclass(frozen=True)
class KernelConfig:
    """Diffusion kernel hyperparameters.

    Parameters
    ----------
    epsilon
        Squared bandwidth of the Gaussian kernel.
    alpha
        Density normalization exponent, 0 or 1.
    markov
        Whether to row-normalize into a Markov matrix.
    """

    epsilon: float
    alpha: int = 0
    markov: bool = True

    def __post_init__(self):
        if not np.isfinite(self.epsilon) or self.epsilon <= 0:
            raise InvalidConfig(f"epsilon must be positive, got {self.epsilon!r}")
        if self.alpha not in (0, 1):
            raise InvalidConfig(f"alpha must be 0 or 1, got {self.alpha!r}")
        object.__setattr__(self, "alpha", int(self.alpha))
        object.__setattr__(self, "epsilon", float(self.epsilon))

    def to_dict(self) -> dict:
        return {"epsilon": self.epsilon, "alpha": self.alpha, "markov": self.markov}

    @classmethod
    def from_dict(cls, d: dict) -> "KernelConfig":
        return cls(epsilon=d["epsilon"], alpha=d.get("alpha", 0), markov=d.get("markov", True))


@dataclass(frozen=True)
class EigenSystem:
    """Eigenpairs sorted by descending eigenvalue; columns of ``eigenvectors``
    have unit Euclidean norm and a positive largest-magnitude entry."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def __len__(self):
        return len(self.eigenvalues)


def as_data_matrix(X, name="X") -> np.ndarray:
    """Return ``X`` as a finite 2-D float array (1-D input becomes a column)."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise InvalidData(f"{name} must be 2-D, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise InvalidData(f"{name} contains non-finite entries")
    return X


def _check_epsilon(epsilon):
    if not np.isfinite(epsilon) or epsilon <= 0:
        raise InvalidConfig(f"epsilon must be positive, got {epsilon!r}")


def squared_distances(X, Y=None) -> np.ndarray:
    """Pairwise squared Euclidean distances.

    With ``Y`` omitted the result is exactly symmetric with a zero diagonal.
    """
    if Y is None:
        return squareform(pdist(X, "sqeuclidean"))
    return cdist(X, Y, "sqeuclidean")


def median_epsilon(X) -> float:
    """Median of the squared pairwise distances of ``X``."""
    X = as_data_matrix(X)
    d2 = pdist(X, "sqeuclidean")
    eps = float(np.median(d2)) if d2.size else 0.0
    if eps <= 0:
        raise InvalidData("cannot derive a bandwidth from coincident points")
    return eps


def kernel_matrix(X, epsilon: float) -> np.ndarray:
    """Symmetric Gaussian kernel matrix of the rows of ``X``."""
    X = as_data_matrix(X)
    _check_epsilon(epsilon)
    if X.shape[0] < 2:
        raise InvalidData("need at least two samples")
    return np.exp(squared_distances(X) / (-2.0 * epsilon))


def cross_kernel(Y, X, epsilon: float) -> np.ndarray:
    """Gaussian kernel between query rows ``Y`` and reference rows ``X``."""
    _check_epsilon(epsilon)
    return np.exp(squared_distances(Y, X) / (-2.0 * epsilon))


def normalize(K, cfg: KernelConfig, return_degrees=False):
    """Apply the density (``alpha``) and Markov normalizations to ``K``.

    Parameters
    ----------
    K : (N, N) ndarray
        Kernel matrix from :func:`kernel_matrix`.
    cfg : KernelConfig
    return_degrees : bool
        Also return the row sums of the density-normalized kernel, needed
        by :func:`eigendecompose` for the symmetric conjugation.

    Returns
    -------
    A : (N, N) ndarray
    degrees : (N,) ndarray, optional
    """
    K = np.asarray(K, dtype=float)
    if cfg.alpha == 1:
        p = K.sum(axis=1)
        if np.any(p <= 0):
            raise NumericalDegeneracy("zero kernel row sum")
        K = K / np.outer(p, p)
    degrees = K.sum(axis=1)
    if cfg.markov:
        if np.any(degrees <= 0):
            raise NumericalDegeneracy("zero kernel row sum")
        A = K / degrees[:, None]
    else:
        A = K
    if return_degrees:
        return A, degrees
    return A


def fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip columns so the largest-magnitude entry of each is positive."""
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def eigendecompose(A, p: int, degrees=None) -> EigenSystem:
    """Leading ``p`` eigenpairs of a row-stochastic diffusion matrix.

    When the row sums ``degrees`` of the symmetric kernel behind ``A`` are
    given, the problem is solved on the symmetric conjugate
    ``S = D^{1/2} A D^{-1/2}`` and eigenvectors are mapped back with
    ``D^{-1/2}``. Otherwise a general dense eigensolver is used on ``A``.
    """
    A = np.asarray(A, dtype=float)
    N = A.shape[0]
    if not 1 <= p <= N:
        raise InvalidConfig(f"number of eigenpairs must be in [1, {N}], got {p}")

    try:
        if degrees is not None:
            d = np.asarray(degrees, dtype=float)
            sq = np.sqrt(d)
            S = (A * sq[:, None]) / sq[None, :]
            S = 0.5 * (S + S.T)
            w, v = scipy.linalg.eigh(S, subset_by_index=[N - p, N - 1])
            v = v / sq[:, None]
        else:
            w, v = scipy.linalg.eig(A)
            if np.abs(w.imag).max() > 1e-8 * max(1.0, np.abs(w.real).max()):
                raise NumericalDegeneracy("matrix has complex eigenvalues")
            w, v = w.real, v.real
            keep = np.argsort(w)[::-1][:p]
            w, v = w[keep], v[:, keep]
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalDegeneracy(f"eigensolver failed: {exc}") from exc

    order = np.argsort(w)[::-1]
    w, v = w[order], v[:, order]
    v = v / np.linalg.norm(v, axis=0)
    return EigenSystem(eigenvalues=w, eigenvectors=fix_signs(v))
