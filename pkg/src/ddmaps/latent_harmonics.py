"""Latent Harmonics: geometric-harmonics regression on Diffusion Maps coordinates.

A second, unnormalized Gaussian kernel is built on the latent training
points. Target functions are projected onto its leading eigenvectors and
extended to new latent points through the Nystrom formula

    Psi_j(phi) = sigma_j^{-1} sum_i K*(phi, phi_i) psi_j(phi_i).

The same machinery provides lifting (latent -> ambient) when the targets
are the ambient coordinates themselves.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg

from .dmaps import DMapModel
from .errors import (
    IllConditionedWarning,
    InvalidConfig,
    InvalidData,
    NumericalDegeneracy,
    OutOfSampleTooFar,
)
from .kernel_core import as_data_matrix, cross_kernel, fix_signs, kernel_matrix, median_epsilon

__all__ = ["LHModel", "fit_lh", "extend", "lift", "default_epsilon2"]

_UNDERFLOW = 1e-300
_RCOND = 1e-12


@dataclass(frozen=True)
class LHModel:
    """Fitted Latent Harmonics regressor.

    Attributes
    ----------
    Phi_train : (N, k) ndarray
        Latent training points.
    epsilon2 : float
        Squared bandwidth of the latent kernel.
    sigma : (d,) ndarray
        Kernel eigenvalues, descending.
    Psi : (N, d) ndarray
        Orthonormal kernel eigenvectors.
    coeffs : (d, q) ndarray
        Projections of the (scaled) targets onto ``Psi``.
    lo, hi : (q,) ndarray or None
        Min-max scaler of the targets; ``None`` when fitted unscaled.
    """

    Phi_train: np.ndarray
    epsilon2: float
    sigma: np.ndarray
    Psi: np.ndarray
    coeffs: np.ndarray
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None

    @property
    def n_modes(self):
        return len(self.sigma)

    @property
    def n_outputs(self):
        return self.coeffs.shape[1]

    @property
    def scaled(self):
        return self.lo is not None

    @cached_property
    def _weights(self):
        # Folds Psi, sigma^{-1} and the coefficients into one (N, q) matrix.
        return self.Psi @ (self.coeffs / self.sigma[:, None])

    def scale(self, F) -> np.ndarray:
        """Map targets into the model's [0, 1] training range."""
        F = np.asarray(F, dtype=float)
        if not self.scaled:
            return F
        return (F - self.lo) / _span(self.lo, self.hi)

    def unscale(self, F) -> np.ndarray:
        F = np.asarray(F, dtype=float)
        if not self.scaled:
            return F
        return F * _span(self.lo, self.hi) + self.lo

    def projection(self) -> np.ndarray:
        """Projection of the scaled targets onto span(Psi) at the training points."""
        return self.Psi @ self.coeffs

    def to_dict(self) -> dict:
        return {
            "Phi_train": self.Phi_train.tolist(),
            "epsilon2": self.epsilon2,
            "sigma": self.sigma.tolist(),
            "Psi": self.Psi.tolist(),
            "coeffs": self.coeffs.tolist(),
            "lo": None if self.lo is None else self.lo.tolist(),
            "hi": None if self.hi is None else self.hi.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LHModel":
        arr = lambda key: None if d.get(key) is None else np.asarray(d[key], dtype=float)  # noqa: E731
        return cls(
            Phi_train=as_data_matrix(d["Phi_train"]),
            epsilon2=float(d["epsilon2"]),
            sigma=arr("sigma"),
            Psi=np.asarray(d["Psi"], dtype=float),
            coeffs=np.asarray(d["coeffs"], dtype=float),
            lo=arr("lo"),
            hi=arr("hi"),
        )


def _span(lo, hi):
    span = hi - lo
    return np.where(span > 0, span, 1.0)


def default_epsilon2(Phi) -> float:
    """Latent kernel bandwidth: 1% of the median squared latent distance."""
    return 1e-2 * median_epsilon(Phi)


def fit_lh(Phi_train, F, epsilon2: float | None = None, d: int = 300, scale=True) -> LHModel:
    """Fit Latent Harmonics for targets ``F`` given at latent points ``Phi_train``.

    Parameters
    ----------
    Phi_train : (N, k) array_like
    F : (N,) or (N, q) array_like
        Target values, one row per latent point.
    epsilon2 : float, optional
        Squared bandwidth; defaults to :func:`default_epsilon2`.
    d : int
        Number of kernel eigenpairs to keep. Modes whose eigenvalue falls
        below ``1e-12`` times the leading one are dropped with an
        :class:`~ddmaps.errors.IllConditionedWarning`.
    scale : bool
        Min-max scale each target to [0, 1] before projecting.
    """
    Phi = as_data_matrix(Phi_train, "Phi_train")
    F = as_data_matrix(F, "F")
    N = Phi.shape[0]
    if F.shape[0] != N:
        raise InvalidData(f"F has {F.shape[0]} rows for {N} latent points")
    if not 1 <= d <= N:
        raise InvalidConfig(f"d must be in [1, {N}], got {d}")
    if epsilon2 is None:
        epsilon2 = default_epsilon2(Phi)
    if not np.isfinite(epsilon2) or epsilon2 <= 0:
        raise InvalidConfig(f"epsilon2 must be positive, got {epsilon2!r}")

    K = kernel_matrix(Phi, epsilon2)
    try:
        sigma, Psi = scipy.linalg.eigh(K, subset_by_index=[N - d, N - 1])
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalDegeneracy(f"eigensolver failed: {exc}") from exc
    sigma, Psi = sigma[::-1], Psi[:, ::-1]

    keep = sigma > _RCOND * sigma[0]
    if not np.all(keep):
        n_keep = int(np.argmin(keep))
        warnings.warn(
            f"truncating Latent Harmonics from {d} to {n_keep} modes (sigma ratio < {_RCOND})",
            IllConditionedWarning,
            stacklevel=2,
        )
        sigma, Psi = sigma[:n_keep], Psi[:, :n_keep]
    Psi = fix_signs(Psi)

    lo = hi = None
    if scale:
        lo, hi = F.min(axis=0), F.max(axis=0)
        F = (F - lo) / _span(lo, hi)
    return LHModel(
        Phi_train=Phi,
        epsilon2=float(epsilon2),
        sigma=sigma,
        Psi=Psi,
        coeffs=Psi.T @ F,
        lo=lo,
        hi=hi,
    )


def extend(model: LHModel, phi_new, scaled=False) -> np.ndarray:
    """Evaluate the fitted functions at new latent point(s).

    A single ``k``-vector gives a ``q``-vector, an ``(n, k)`` batch gives
    ``(n, q)``. Output is in the targets' original units unless ``scaled``.
    """
    P = np.asarray(phi_new, dtype=float)
    single = P.ndim == 1
    P = np.atleast_2d(P)
    if P.shape[1] != model.Phi_train.shape[1]:
        raise InvalidData(
            f"latent points must have {model.Phi_train.shape[1]} coordinates, got {P.shape[1]}"
        )
    if not np.all(np.isfinite(P)):
        raise InvalidData("latent points contain non-finite entries")
    K = cross_kernel(P, model.Phi_train, model.epsilon2)
    if np.any(K.sum(axis=1) < _UNDERFLOW):
        raise OutOfSampleTooFar("latent point has vanishing kernel weight to the training set")
    out = K @ model._weights
    if not scaled:
        out = model.unscale(out)
    return out[0] if single else out


def lift(dmap: DMapModel, lh: LHModel, phi_new) -> np.ndarray:
    """Map latent point(s) back to ambient coordinates.

    ``lh`` must have been fitted with the ambient training coordinates as
    targets, so its output dimension matches ``dmap``.
    """
    if lh.n_outputs != dmap.ambient_dim:
        raise InvalidConfig(
            f"lift model predicts {lh.n_outputs} outputs, ambient dimension is {dmap.ambient_dim}"
        )
    return extend(lh, phi_new)
