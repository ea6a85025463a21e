"""Out-of-sample restriction (ambient -> latent) and its Jacobian."""

from __future__ import annotations

import numpy as np

from .dmaps import DMapModel
from .errors import InvalidData, OutOfSampleTooFar, UnsupportedNormalization
from .kernel_core import KernelConfig, cross_kernel

__all__ = ["reachable", "nystrom_weights", "nystrom_extend", "nystrom_jacobian", "restrict", "jacobian"]

_UNDERFLOW = 1e-300


def _queries(Y, m):
    Y = np.asarray(Y, dtype=float)
    single = Y.ndim == 1
    Y = np.atleast_2d(Y)
    if Y.shape[1] != m:
        raise InvalidData(f"query points must have {m} coordinates, got {Y.shape[1]}")
    if not np.all(np.isfinite(Y)):
        raise InvalidData("query points contain non-finite entries")
    return Y, single


def reachable(X, epsilon, Y) -> np.ndarray:
    """True for query rows of ``Y`` whose kernel weight to ``X`` does not underflow."""
    return cross_kernel(np.atleast_2d(Y), X, epsilon).sum(axis=1) >= _UNDERFLOW


def nystrom_weights(X, cfg: KernelConfig, Y, row_sums=None) -> np.ndarray:
    """Row-normalized kernel weights between queries ``Y`` and training ``X``.

    ``row_sums`` are the training kernel row sums, required when
    ``cfg.alpha == 1``.
    """
    K = cross_kernel(Y, X, cfg.epsilon)
    total = K.sum(axis=1)
    bad = total < _UNDERFLOW
    if np.any(bad):
        raise OutOfSampleTooFar(
            f"{int(bad.sum())} query point(s) have vanishing kernel weight to the training set"
        )
    if cfg.alpha == 1:
        if row_sums is None:
            raise InvalidData("alpha=1 extension needs the training kernel row sums")
        # The query's own density factor cancels in the row normalization.
        K = K / np.asarray(row_sums)[None, :]
        total = K.sum(axis=1)
    return K / total[:, None]


def nystrom_extend(X, cfg, vectors, eigenvalues, Y, row_sums=None) -> np.ndarray:
    """Evaluate eigenvectors of the diffusion matrix at new points ``Y``.

    Returns an array of shape ``(len(Y), vectors.shape[1])``.
    """
    W = nystrom_weights(X, cfg, Y, row_sums)
    return (W @ vectors) / np.asarray(eigenvalues)[None, :]


def nystrom_jacobian(X, cfg, vectors, eigenvalues, Y) -> np.ndarray:
    """Derivative of :func:`nystrom_extend` with respect to the query point.

    Only defined for ``alpha == 0``. Entry ``[n, b, l]`` is the derivative of
    extended vector ``b`` at ``Y[n]`` along ambient coordinate ``l``. With
    row-normalized weights ``w_i`` and kernel gradient
    ``dK_i/dy = K_i (x_i - y) / epsilon`` this is the weighted covariance

        J[b, l] = (sum_i w_i v_ib (x_il - y_l)
                   - sum_i w_i v_ib * sum_j w_j (x_jl - y_l)) / (epsilon * lambda_b)
    """
    if cfg.alpha != 0:
        raise UnsupportedNormalization("Nystrom Jacobian is only available for alpha=0")
    W = nystrom_weights(X, cfg, Y)
    V = np.asarray(vectors, dtype=float)
    N, k = V.shape
    m = X.shape[1]
    # The y-terms cancel, leaving weighted moments of x only. Centering X
    # keeps the cancellation benign.
    Xc = X - X.mean(axis=0)
    a = W @ V  # (n, k)
    b = W @ Xc  # (n, m)
    c = (W @ (V[:, :, None] * Xc[:, None, :]).reshape(N, k * m)).reshape(-1, k, m)
    J = c - a[:, :, None] * b[:, None, :]
    return J / (cfg.epsilon * np.asarray(eigenvalues)[None, :, None])


def restrict(model: DMapModel, x_new) -> np.ndarray:
    """Latent coordinates of ambient point(s) ``x_new``.

    Accepts a single ``m``-vector (returns a ``k``-vector) or an ``(n, m)``
    batch (returns ``(n, k)``).
    """
    Y, single = _queries(x_new, model.ambient_dim)
    phi = nystrom_extend(
        model.X, model.cfg, model.latent, model.latent_eigenvalues, Y, model.row_sums
    )
    return phi[0] if single else phi


def jacobian(model: DMapModel, x_new) -> np.ndarray:
    """Jacobian ``d phi / d x`` of the restriction, shape ``(k, m)`` per point."""
    Y, single = _queries(x_new, model.ambient_dim)
    if model.cfg.alpha != 0:
        raise UnsupportedNormalization("Nystrom Jacobian is only available for alpha=0")
    # Chunk to bound the (n, N) weight matrix.
    chunk = max(1, int(2e7 // model.n_samples))
    out = [
        nystrom_jacobian(
            model.X, model.cfg, model.latent, model.latent_eigenvalues, Y[s : s + chunk]
        )
        for s in range(0, len(Y), chunk)
    ]
    J = np.concatenate(out)
    return J[0] if single else J
