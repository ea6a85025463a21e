"""Benchmark systems and data generators.

* Chafee-Infante reaction-diffusion ``u_t = u - u^3 + nu u_xx`` on
  ``[0, pi]`` with Dirichlet boundaries, Galerkin-projected on
  ``sin(x), ..., sin(10 x)``.
* Uniform samples of a rectangle (harmonic vs. non-harmonic eigenvectors).
* A three-variable stiff system with a known two-dimensional slow manifold,
  standing in for detailed combustion kinetics.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.spatial import cKDTree

from .errors import InsufficientSampling, InvalidConfig, UnstableStep
from .reduced_models import AmbientSystem, Trajectory, integrate

__all__ = [
    "ChafeeInfanteSystem",
    "ci_rhs",
    "SamplingConfig",
    "subsample",
    "sample_manifold",
    "reconstruct_field",
    "FDSolution",
    "fd_pde_solve",
    "rectangle_sample",
    "StiffSurrogateSystem",
    "stiff_rhs",
    "CI_SAMPLING",
    "STIFF_SAMPLING",
]


@dataclass(frozen=True)
class ChafeeInfanteSystem:
    """Galerkin truncation of the Chafee-Infante equation.

    The cubic term is evaluated pseudo-spectrally: the sine series is
    synthesized on ``collocation_points`` interior nodes ``x_j = j pi/(M+1)``,
    cubed, and projected back with a discrete sine transform. For ``M``
    at least three times the number of modes this is exact.
    """

    nu: float = 0.16
    n_modes: int = 10
    collocation_points: int = 64

    def __post_init__(self):
        if not self.nu > 0:
            raise InvalidConfig("nu must be positive")
        if self.n_modes < 1:
            raise InvalidConfig("need at least one mode")
        if self.collocation_points < 4 * self.n_modes:
            raise InvalidConfig("collocation_points must be at least 4 * n_modes")

    @cached_property
    def wavenumbers(self):
        return np.arange(1, self.n_modes + 1, dtype=float)

    @cached_property
    def _basis(self):
        M = self.collocation_points
        x = np.arange(1, M + 1) * np.pi / (M + 1)
        return np.sin(np.outer(x, self.wavenumbers))  # (M, n)

    def rhs(self, alpha) -> np.ndarray:
        """``d alpha / dt``; accepts ``(n_modes,)`` or ``(batch, n_modes)``."""
        alpha = np.asarray(alpha, dtype=float)
        S = self._basis
        u = alpha @ S.T
        cubic = (u * u * u) @ S * (2.0 / (self.collocation_points + 1))
        linear = (1.0 - self.nu * self.wavenumbers**2) * alpha
        return linear - cubic

    def initial_conditions(self, rng, n, amplitude=1.5) -> np.ndarray:
        """Random mode amplitudes ``U(-a, a) / k``."""
        return rng.uniform(-amplitude, amplitude, size=(n, self.n_modes)) / self.wavenumbers

    def as_system(self) -> AmbientSystem:
        return AmbientSystem("chafee-infante", self.n_modes, self.rhs, self.initial_conditions)


_DEFAULT_CI = ChafeeInfanteSystem()


def ci_rhs(alpha) -> np.ndarray:
    """Chafee-Infante Galerkin vector field with ``nu = 0.16`` and 10 modes."""
    return _DEFAULT_CI.rhs(alpha)


@dataclass(frozen=True)
class SamplingConfig:
    """Trajectory sampling settings.

    Trajectories start from ``n_initial_conditions`` random states, run to
    ``t_end`` with fixed step ``h`` and are recorded every
    ``record_interval`` from ``transient_time`` on. Recorded points closer
    than ``subsample_distance`` to an already kept point are dropped.
    """

    n_initial_conditions: int = 400
    ic_amplitude: float = 3.0
    transient_time: float = 4.0
    record_interval: float = 0.05
    t_end: float = 12.0
    subsample_distance: float = 0.0025
    h: float = 0.01

    def __post_init__(self):
        if self.n_initial_conditions < 1:
            raise InvalidConfig("need at least one initial condition")
        for name in ("ic_amplitude", "record_interval", "t_end", "h"):
            if not getattr(self, name) > 0:
                raise InvalidConfig(f"{name} must be positive")
        if self.transient_time < 0 or self.subsample_distance < 0:
            raise InvalidConfig("transient_time and subsample_distance must be non-negative")
        if self.transient_time > self.t_end:
            raise InvalidConfig("transient_time exceeds t_end")


# Defaults are calibrated for Chafee-Infante: ~2800 points on the 2-D
# inertial manifold.
CI_SAMPLING = SamplingConfig()


def subsample(X, d: float) -> np.ndarray:
    """Indices of a greedy subsample with all pairwise distances ``>= d``.

    Points are visited in input order; a point is kept unless it lies
    strictly closer than ``d`` to one already kept.
    """
    X = np.asarray(X, dtype=float)
    if len(X) == 0:
        return np.empty(0, dtype=int)
    if d <= 0:
        return np.arange(len(X))
    if not np.isfinite(d):
        return np.array([0])
    tree = cKDTree(X)
    # Closed-ball query with the next float below d == open ball of radius d.
    r = np.nextafter(d, 0.0)
    dropped = np.zeros(len(X), dtype=bool)
    idx = []
    for i in range(len(X)):
        if dropped[i]:
            continue
        idx.append(i)
        dropped[tree.query_ball_point(X[i], r)] = True
    return np.asarray(idx)


def sample_manifold(sys: AmbientSystem, cfg: SamplingConfig, seed=0, min_points=100) -> np.ndarray:
    """Sample long-time dynamics of ``sys`` and thin them to near-uniform density.

    Deterministic for a given ``seed``. Rows are ordered by initial
    condition, then time.

    Raises
    ------
    InsufficientSampling
        If fewer than ``min_points`` points survive.
    """
    if sys.initial_conditions is None:
        raise InvalidConfig(f"system {sys.name!r} has no initial condition generator")
    rng = np.random.default_rng(seed)
    x0 = sys.initial_conditions(rng, cfg.n_initial_conditions, cfg.ic_amplitude)
    n_rec = int(np.floor((cfg.t_end - cfg.transient_time) / cfg.record_interval + 1e-9)) + 1
    t_rec = cfg.transient_time + cfg.record_interval * np.arange(n_rec)
    traj = integrate(sys.rhs, x0, cfg.t_end, method="rk4", h=cfg.h, t_eval=t_rec, space="ambient")
    if traj.partial:
        raise UnstableStep(f"sampling integration failed: {traj.cause}")
    # (time, ic, m) -> (ic, time, m)
    X = traj.states.transpose(1, 0, 2).reshape(-1, sys.dim)
    X = X[subsample(X, cfg.subsample_distance)]
    if len(X) < min_points:
        raise InsufficientSampling(f"only {len(X)} points survived subsampling (need {min_points})")
    return X


def reconstruct_field(alpha_traj, x_grid) -> np.ndarray:
    """Evaluate ``u(x, t) = sum_k alpha_k(t) sin(k x)`` on ``x_grid``.

    ``alpha_traj`` is a :class:`Trajectory` or an array of mode amplitudes
    with one row per time. Returns an array of shape ``(n_times, len(x_grid))``.
    """
    A = alpha_traj.states if isinstance(alpha_traj, Trajectory) else np.asarray(alpha_traj, float)
    A = np.atleast_2d(A)
    k = np.arange(1, A.shape[1] + 1)
    return A @ np.sin(np.outer(k, np.asarray(x_grid, dtype=float)))


@dataclass
class FDSolution:
    times: np.ndarray
    x: np.ndarray
    u: np.ndarray  # (n_times, nx), boundary nodes included


def fd_pde_solve(u0, t_end, dt, nx=101, nu=0.16, t_eval=None) -> FDSolution:
    """Finite-difference reference solution of the Chafee-Infante PDE.

    Second-order central differences on ``nx`` equispaced nodes of
    ``[0, pi]`` (boundaries included, held at zero) and classical RK4 in
    time.

    Parameters
    ----------
    u0 : callable or array_like
        Initial profile, either ``u0(x)`` or its values on the grid.
    t_end, dt : float
    nx : int
    nu : float
    t_eval : array_like, optional
        Output times; defaults to every step.

    Raises
    ------
    UnstableStep
        If the solution norm exceeds ``1e6``.
    """
    if nx < 3:
        raise InvalidConfig("need at least 3 grid nodes")
    x = np.linspace(0.0, np.pi, nx)
    dx = x[1] - x[0]
    v = np.asarray(u0(x) if callable(u0) else u0, dtype=float)
    if v.shape != (nx,):
        raise InvalidConfig(f"initial profile must have {nx} values")
    coef = nu / dx**2

    def rhs(w):
        lap = np.empty_like(w)
        lap[1:-1] = w[:-2] - 2.0 * w[1:-1] + w[2:]
        lap[0] = -2.0 * w[0] + w[1]
        lap[-1] = w[-2] - 2.0 * w[-1]
        out = w - w * w * w + coef * lap
        if np.abs(w).max() > 1e6:
            raise UnstableStep("finite-difference solution blew up")
        return out

    traj = integrate(rhs, v[1:-1], t_end, method="rk4", h=dt, t_eval=t_eval, space="ambient")
    if traj.partial:
        raise traj.cause
    if np.abs(traj.states).max() > 1e6:
        raise UnstableStep("finite-difference solution blew up")
    u = np.zeros((len(traj), nx))
    u[:, 1:-1] = traj.states
    return FDSolution(traj.times, x, u)


def rectangle_sample(n: int, ratio: float = 4.0, seed=0) -> np.ndarray:
    """``n`` i.i.d. uniform points on ``[0, ratio] x [0, 1]``."""
    if n < 100:
        raise InvalidConfig(f"need at least 100 points, got {n}")
    rng = np.random.default_rng(seed)
    return rng.random((n, 2)) * np.array([ratio, 1.0])


@dataclass(frozen=True)
class StiffSurrogateSystem:
    """Linear slow variables with a fast variable slaved to a paraboloid.

        dx/dt = -x,  dy/dt = -2 y,  dz/dt = -(z - x^2 - y^2) / eps_s

    The slow manifold is ``z = x^2 + y^2 + eps_s (2 x^2 + 4 y^2) + O(eps_s^2)``.
    """

    eps_s: float = 1e-3

    def __post_init__(self):
        if not 0 < self.eps_s < 1:
            raise InvalidConfig("eps_s must lie in (0, 1)")

    def rhs(self, state) -> np.ndarray:
        s = np.asarray(state, dtype=float)
        x, y, z = s[..., 0], s[..., 1], s[..., 2]
        return np.stack([-x, -2.0 * y, -(z - x**2 - y**2) / self.eps_s], axis=-1)

    def slow_manifold(self, x, y, order=1):
        h = np.asarray(x) ** 2 + np.asarray(y) ** 2
        if order >= 1:
            h = h + self.eps_s * (2 * np.asarray(x) ** 2 + 4 * np.asarray(y) ** 2)
        return h

    def initial_conditions(self, rng, n, amplitude=1.0) -> np.ndarray:
        """Random states off the slow manifold.

        ``x ~ U(-a, a)``, ``y ~ U(-0.85 a, 0.85 a)`` and ``z`` displaced from the
        manifold by ``U(-a, a)``. The unequal slow ranges keep the two leading
        diffusion modes from being degenerate.
        """
        xy = rng.uniform(-amplitude, amplitude, size=(n, 2)) * np.array([1.0, 0.85])
        z = (xy**2).sum(axis=1) + rng.uniform(-amplitude, amplitude, size=n)
        return np.column_stack([xy, z])

    def as_system(self) -> AmbientSystem:
        return AmbientSystem("stiff-surrogate", 3, self.rhs, self.initial_conditions)


def stiff_rhs(state, eps_s=1e-3) -> np.ndarray:
    return StiffSurrogateSystem(eps_s).rhs(state)


# Dense initial conditions keep the thinned sample near-uniform out to the
# edge of the sampled region.
STIFF_SAMPLING = SamplingConfig(
    n_initial_conditions=4000,
    ic_amplitude=1.0,
    transient_time=0.02,
    record_interval=0.02,
    t_end=0.6,
    subsample_distance=0.04,
    h=1e-3,
)
