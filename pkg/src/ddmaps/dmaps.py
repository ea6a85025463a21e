"""Diffusion Maps embedding and selection of non-harmonic eigenvectors."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial.distance import pdist

from .errors import InvalidConfig, InvalidData, NoReductionWarning
from .kernel_core import (
    EigenSystem,
    KernelConfig,
    as_data_matrix,
    eigendecompose,
    kernel_matrix,
    normalize,
    squared_distances,
)

__all__ = ["DMapModel", "fit_dmaps", "select_nonharmonic", "local_linear_residuals"]


@dataclass(frozen=True)
class DMapModel:
    """A fitted Diffusion Maps embedding.

    ``eig`` holds the non-trivial eigenpairs only; eigenvector ``j`` (1-based,
    as used by ``selected``) is column ``j - 1``. The training data is kept
    because out-of-sample evaluation needs it.
    """

    X: np.ndarray
    cfg: KernelConfig
    eig: EigenSystem
    selected: tuple = ()
    residuals: np.ndarray = field(default_factory=lambda: np.empty(0))
    row_sums: np.ndarray | None = None

    @property
    def n_samples(self):
        return self.X.shape[0]

    @property
    def ambient_dim(self):
        return self.X.shape[1]

    @property
    def latent_dim(self):
        return len(self.selected)

    @property
    def columns(self):
        """0-based eigenvector columns of the selected coordinates."""
        return np.asarray(self.selected, dtype=int) - 1

    @property
    def latent(self) -> np.ndarray:
        """Training points in latent coordinates, shape ``(N, k)``."""
        if not self.selected:
            raise InvalidConfig("no coordinates selected; run select_nonharmonic first")
        return self.eig.eigenvectors[:, self.columns]

    @property
    def latent_eigenvalues(self) -> np.ndarray:
        return self.eig.eigenvalues[self.columns]

    def with_selection(self, selected) -> "DMapModel":
        """Return a copy using the given 1-based eigenvector indices."""
        selected = tuple(int(j) for j in selected)
        p = len(self.eig)
        if len(set(selected)) != len(selected) or any(not 1 <= j <= p for j in selected):
            raise InvalidConfig(f"invalid eigenvector selection {selected} for {p} pairs")
        return replace(self, selected=selected)

    def to_dict(self) -> dict:
        return {
            "kernel": self.cfg.to_dict(),
            "eigenvalues": self.eig.eigenvalues.tolist(),
            "eigenvectors": self.eig.eigenvectors.tolist(),
            "selected": list(self.selected),
            "residuals": np.asarray(self.residuals).tolist(),
            "X": self.X.tolist(),
            "row_sums": None if self.row_sums is None else self.row_sums.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DMapModel":
        eig = EigenSystem(
            eigenvalues=np.asarray(d["eigenvalues"], dtype=float),
            eigenvectors=np.asarray(d["eigenvectors"], dtype=float),
        )
        return cls(
            X=as_data_matrix(d["X"]),
            cfg=KernelConfig.from_dict(d["kernel"]),
            eig=eig,
            selected=tuple(d.get("selected", ())),
            residuals=np.asarray(d.get("residuals", []), dtype=float),
            row_sums=None if d.get("row_sums") is None else np.asarray(d["row_sums"], dtype=float),
        )


def fit_dmaps(X, cfg: KernelConfig, p: int) -> DMapModel:
    """Embed ``X`` with Diffusion Maps, keeping ``p`` non-trivial eigenpairs.

    The trivial pair (eigenvalue 1, constant eigenvector) is computed and
    dropped. Selection of latent coordinates is left to
    :func:`select_nonharmonic`.
    """
    X = as_data_matrix(X)
    N = X.shape[0]
    if N < 10:
        raise InvalidData(f"need at least 10 samples, got {N}")
    if not cfg.markov:
        raise InvalidConfig("Diffusion Maps embedding requires a Markov normalization")
    if not 1 <= p <= N - 1:
        raise InvalidConfig(f"number of eigenpairs must be in [1, {N - 1}], got {p}")

    K = kernel_matrix(X, cfg.epsilon)
    row_sums = K.sum(axis=1) if cfg.alpha == 1 else None
    A, degrees = normalize(K, cfg, return_degrees=True)
    del K
    eig = eigendecompose(A, p + 1, degrees=degrees)
    nontrivial = EigenSystem(eig.eigenvalues[1:].copy(), eig.eigenvectors[:, 1:].copy())
    return DMapModel(X=X, cfg=cfg, eig=nontrivial, row_sums=row_sums)


def _loo_local_linear_fit(P, y, bandwidth):
    # Leave-one-out kernel-weighted local linear regression of y on P,
    # evaluated at each sample. Solved for all samples at once.
    N, q = P.shape
    W = np.exp(-squared_distances(P) / bandwidth)
    np.fill_diagonal(W, 0.0)

    Z = np.hstack([np.ones((N, 1)), P])
    outer = (Z[:, :, None] * Z[:, None, :]).reshape(N, -1)
    G = (W @ outer).reshape(N, q + 1, q + 1)
    h = W @ (Z * y[:, None])

    # Tiny ridge on the slopes; keeps isolated samples solvable.
    scale = np.trace(G, axis1=1, axis2=2)[:, None, None]
    ridge = np.zeros((q + 1, q + 1))
    ridge[1:, 1:] = np.eye(q)
    G = G + 1e-10 * scale * ridge
    beta = np.linalg.solve(G, h[:, :, None])[:, :, 0]
    return np.einsum("ij,ij->i", Z, beta)


def local_linear_residuals(V, bandwidth_scale=3.0) -> np.ndarray:
    """Non-harmonicity score for each column of ``V``.

    Column ``j`` is predicted from columns ``0..j-1`` by leave-one-out local
    linear regression; the score is the normalized residual, so values near 0
    mark harmonics of earlier columns and values near 1 mark new directions.
    The first column scores 1 by definition.

    The regression bandwidth is the median squared pairwise distance among
    the predictors divided by ``bandwidth_scale``.
    """
    V = np.asarray(V, dtype=float)
    p = V.shape[1]
    r = np.ones(p)
    for j in range(1, p):
        P = V[:, :j]
        P = P / P.std()
        bandwidth = np.median(pdist(P, "sqeuclidean")) / bandwidth_scale
        y = V[:, j]
        fit = _loo_local_linear_fit(P, y, bandwidth)
        r[j] = np.sqrt(np.sum((y - fit) ** 2) / np.sum(y**2))
    return r


def select_nonharmonic(model: DMapModel, threshold: float = 0.5) -> DMapModel:
    """Select the eigenvectors that parametrize independent directions.

    Returns a copy of ``model`` with ``residuals`` filled in and ``selected``
    set to every 1-based index whose residual exceeds ``threshold``. Index 1
    is always selected.
    """
    if not 0 < threshold < 1:
        raise InvalidConfig(f"threshold must lie in (0, 1), got {threshold}")
    r = local_linear_residuals(model.eig.eigenvectors)
    selected = tuple(int(j) + 1 for j in np.flatnonzero(r > threshold))
    if len(selected) > model.ambient_dim:
        warnings.warn(
            f"selected {len(selected)} coordinates for {model.ambient_dim}-dimensional data",
            NoReductionWarning,
            stacklevel=2,
        )
    return replace(model, selected=selected, residuals=r)
