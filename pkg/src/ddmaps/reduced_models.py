"""Reduced latent-space dynamics: Back-and-Forth, Grid Tabulation and TaLHI.

All three variants produce a latent vector field ``phi -> d phi / dt`` that
can be handed to :func:`integrate`. They differ in how the field is
obtained from the known ambient dynamics ``dx/dt = f(x)``:

* BF lifts every query to ambient space, evaluates ``f`` there and maps the
  derivative back through the Jacobian of the restriction (chain rule).
* GT does the same once per node of a Cartesian latent grid and then
  interpolates multi-linearly.
* TaLHI applies the chain rule at the training points only and regresses
  the resulting latent derivatives with Latent Harmonics.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.spatial import cKDTree

from .dmaps import DMapModel
from .errors import (
    DDMapsError,
    GridCoverageError,
    InvalidConfig,
    LeftManifold,
    UnstableStep,
)
from .latent_harmonics import LHModel, extend, fit_lh, lift
from .nystrom import jacobian, reachable

__all__ = [
    "AmbientSystem",
    "Trajectory",
    "GridTable",
    "ReducedModel",
    "integrate",
    "chain_rule_rhs",
    "make_bf",
    "bf_rhs",
    "grid_bounds",
    "build_grid",
    "make_gt",
    "gt_rhs",
    "talhi_targets",
    "fit_talhi",
    "talhi_rhs",
]


@dataclass(frozen=True)
class AmbientSystem:
    """Known full-order dynamics ``dx/dt = rhs(x)``.

    ``rhs`` must accept a single state ``(m,)`` or a batch ``(n, m)``.
    ``initial_conditions(rng, n, amplitude)`` optionally draws ``(n, m)``
    random starting states for sampling.
    """

    name: str
    dim: int
    rhs: Callable[[np.ndarray], np.ndarray]
    initial_conditions: Callable | None = None


@dataclass
class Trajectory:
    """Time series in latent or ambient coordinates.

    ``cause`` is set when integration stopped early because the vector field
    could not be evaluated; the rows recorded up to that point are kept.
    """

    times: np.ndarray
    states: np.ndarray
    space: str = "latent"
    cause: Exception | None = None
    stats: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=float)
        if len(self.times) != len(self.states):
            raise ValueError("times and states must have the same length")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    @property
    def partial(self) -> bool:
        return self.cause is not None

    def __len__(self):
        return len(self.times)


# ---------------------------------------------------------------------------
# Time integration

# Dormand-Prince 5(4) tableau.
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_DP_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_E = np.array(
    [
        71 / 57600,
        0.0,
        -71 / 16695,
        71 / 1920,
        -17253 / 339200,
        22 / 525,
        -1 / 40,
    ]
)


class _Recorder:
    """Collects output rows, either at every step or at requested times by
    cubic Hermite interpolation between step endpoints."""

    def __init__(self, t0, y0, t_eval):
        self.t_eval = None if t_eval is None else np.asarray(t_eval, dtype=float)
        self.times, self.states = [], []
        self.next = 0
        if self.t_eval is None:
            self._add(t0, y0)
        else:
            if np.any(np.diff(self.t_eval) <= 0):
                raise InvalidConfig("t_eval must be strictly increasing")
            while self.next < len(self.t_eval) and self.t_eval[self.next] <= t0:
                self._add(self.t_eval[self.next], y0)
                self.next += 1

    def _add(self, t, y):
        self.times.append(float(t))
        self.states.append(np.array(y, dtype=float))

    def step(self, t0, y0, f0, t1, y1, f1):
        if self.t_eval is None:
            self._add(t1, y1)
            return
        h = t1 - t0
        while self.next < len(self.t_eval) and self.t_eval[self.next] <= t1 + 1e-12 * abs(t1):
            s = (self.t_eval[self.next] - t0) / h
            h00 = 2 * s**3 - 3 * s**2 + 1
            h10 = s**3 - 2 * s**2 + s
            h01 = -2 * s**3 + 3 * s**2
            h11 = s**3 - s**2
            self._add(self.t_eval[self.next], h00 * y0 + h10 * h * f0 + h01 * y1 + h11 * h * f1)
            self.next += 1


def _hairer_initial_step(rhs, y0, f0, atol, rtol, order=5):
    scale = atol + rtol * np.abs(y0)
    d0 = np.sqrt(np.mean((y0 / scale) ** 2))
    d1 = np.sqrt(np.mean((f0 / scale) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    f1 = rhs(y0 + h0 * f0)
    d2 = np.sqrt(np.mean(((f1 - f0) / scale) ** 2)) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1.0 / (order + 1))
    return min(100 * h0, h1)


def integrate(
    rhs,
    y0,
    t_end: float,
    method: str = "rk45",
    h: float | None = None,
    atol: float = 1e-7,
    rtol: float = 1e-7,
    t_eval=None,
    space: str = "latent",
    max_steps: int = 1_000_000,
) -> Trajectory:
    """Integrate the autonomous system ``dy/dt = rhs(y)`` from ``t = 0``.

    Parameters
    ----------
    rhs : callable
        Vector field. Any :class:`~ddmaps.errors.DDMapsError` it raises ends
        the run; the partial trajectory is returned with ``cause`` set.
    y0 : array_like
        Initial state (any shape; batches of states integrate jointly).
    t_end : float
        Final time, ``>= 0``.
    method : {'euler', 'rk4', 'rk45'}
        Fixed-step forward Euler, classical Runge-Kutta, or adaptive
        Dormand-Prince 5(4).
    h : float
        Step size for the fixed-step methods (initial step for ``rk45``).
    atol, rtol : float
        Error tolerances for ``rk45``.
    t_eval : array_like, optional
        Output times; by default every step is recorded.

    Returns
    -------
    Trajectory
        ``stats`` holds ``n_steps`` (accepted), ``n_rejected`` and ``nfev``.
    """
    y = np.array(y0, dtype=float)
    if not np.all(np.isfinite(y)):
        raise InvalidConfig("initial state must be finite")
    if not t_end >= 0:
        raise InvalidConfig(f"t_end must be non-negative, got {t_end}")
    if method in ("euler", "rk4"):
        if h is None or not h > 0:
            raise InvalidConfig(f"{method} needs a positive step size h")
    elif method == "rk45":
        if not (atol > 0 and rtol > 0):
            raise InvalidConfig("rk45 needs positive atol and rtol")
    else:
        raise InvalidConfig(f"unknown integration method {method!r}")

    stats = {"n_steps": 0, "n_rejected": 0, "nfev": 0}

    def f(state):
        stats["nfev"] += 1
        out = np.asarray(rhs(state), dtype=float)
        if not np.all(np.isfinite(out)):
            raise UnstableStep("vector field returned non-finite values")
        return out

    rec = _Recorder(0.0, y, t_eval)
    t = 0.0
    cause = None
    try:
        if t_end > 0:
            fy = f(y)
            if method == "rk45":
                step = h if h is not None else _hairer_initial_step(f, y, fy, atol, rtol)
                t, y = _run_rk45(f, y, fy, t_end, step, atol, rtol, rec, stats, max_steps)
            else:
                t, y = _run_fixed(f, y, fy, t_end, h, method, rec, stats, max_steps)
    except DDMapsError as exc:
        cause = exc

    return Trajectory(
        times=np.array(rec.times),
        states=np.array(rec.states).reshape((len(rec.times),) + np.shape(y0)),
        space=space,
        cause=cause,
        stats=stats,
    )


def _run_fixed(f, y, fy, t_end, h, method, rec, stats, max_steps):
    n = int(math.ceil(t_end / h - 1e-9))
    if n > max_steps:
        raise InvalidConfig(f"{n} steps exceed max_steps={max_steps}")
    t = 0.0
    for i in range(n):
        t_next = t_end if i == n - 1 else (i + 1) * h
        dt = t_next - t
        if method == "euler":
            y_new = y + dt * fy
        else:
            k2 = f(y + 0.5 * dt * fy)
            k3 = f(y + 0.5 * dt * k2)
            k4 = f(y + dt * k3)
            y_new = y + dt / 6.0 * (fy + 2 * k2 + 2 * k3 + k4)
        f_new = f(y_new)
        rec.step(t, y, fy, t_next, y_new, f_new)
        stats["n_steps"] += 1
        t, y, fy = t_next, y_new, f_new
    return t, y


def _run_rk45(f, y, fy, t_end, h, atol, rtol, rec, stats, max_steps):
    t = 0.0
    h = min(h, t_end)
    h_min = 1e-14 * max(1.0, t_end)
    while t < t_end:
        if stats["n_steps"] + stats["n_rejected"] >= max_steps:
            raise UnstableStep(f"rk45 exceeded {max_steps} steps")
        if h < h_min:
            raise UnstableStep(f"rk45 step size underflow at t={t:g}")
        last = t + h >= t_end
        if last:
            h = t_end - t
        k = [fy]
        for s in range(1, 7):
            ys = y + h * sum(a * ki for a, ki in zip(_DP_A[s], k))
            k.append(f(ys))
        # Stage 7 is evaluated at the 5th-order solution (FSAL).
        y_new = y + h * sum(b * ki for b, ki in zip(_DP_B, k) if b != 0.0)
        err = h * sum(e * ki for e, ki in zip(_DP_E, k) if e != 0.0)
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        err_norm = np.sqrt(np.mean((err / scale) ** 2))
        if err_norm <= 1.0:
            t_new = t_end if last else t + h
            rec.step(t, y, fy, t_new, y_new, k[6])
            stats["n_steps"] += 1
            t, y, fy = t_new, y_new, k[6]
            factor = 5.0 if err_norm == 0 else min(5.0, 0.9 * err_norm ** -0.2)
        else:
            stats["n_rejected"] += 1
            factor = max(0.2, 0.9 * err_norm ** -0.2)
        h = h * factor
    return t, y


# ---------------------------------------------------------------------------
# Chain rule and the three reduced models


def chain_rule_rhs(dmap: DMapModel, sys: AmbientSystem, x) -> np.ndarray:
    """Latent velocity ``(d phi/d x) . f(x)`` at ambient point(s) ``x``."""
    x = np.asarray(x, dtype=float)
    J = jacobian(dmap, x)
    fx = np.asarray(sys.rhs(x), dtype=float)
    if x.ndim == 1:
        return J @ fx
    return np.einsum("nkm,nm->nk", J, fx)


@dataclass(frozen=True)
class GridTable:
    """Latent vector field tabulated on a Cartesian grid.

    ``values`` has shape ``shape + (k,)``; ``mask`` is True where the node
    could be lifted and holds a valid value.
    """

    bounds: np.ndarray
    shape: tuple
    values: np.ndarray
    mask: np.ndarray

    @property
    def axes(self):
        return [np.linspace(lo, hi, n) for (lo, hi), n in zip(self.bounds, self.shape)]

    def nodes(self) -> np.ndarray:
        """All node coordinates, shape ``(prod(shape), k)`` in C order."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def __call__(self, phi) -> np.ndarray:
        """Multi-linear interpolation of the tabulated field at ``phi``."""
        phi = np.asarray(phi, dtype=float)
        k = len(self.shape)
        lower, weights = [], []
        for i, (lo, hi) in enumerate(self.bounds):
            n = self.shape[i]
            s = (phi[i] - lo) / (hi - lo) * (n - 1)
            if abs(s - round(s)) < 1e-11:
                s = float(round(s))  # snap round-off so node queries ignore neighbours
            if not (0.0 <= s <= n - 1):
                raise LeftManifold(f"latent point {phi} is outside the tabulated region")
            j = min(int(s), n - 2)
            lower.append(j)
            weights.append(s - j)
        out = np.zeros(self.values.shape[-1])
        for corner in itertools.product((0, 1), repeat=k):
            idx = tuple(j + c for j, c in zip(lower, corner))
            w = np.prod([wi if c else 1.0 - wi for wi, c in zip(weights, corner)])
            if w == 0.0:
                continue
            if not self.mask[idx]:
                raise LeftManifold(f"latent point {phi} lies in a cell with an unliftable node")
            out += w * self.values[idx]
        return out

    def to_dict(self) -> dict:
        return {
            "bounds": self.bounds.tolist(),
            "shape": list(self.shape),
            "values": self.values.tolist(),
            "mask": self.mask.tolist(),
        }

    @classmethod
    def from_dict(cls, d) -> "GridTable":
        return cls(
            bounds=np.asarray(d["bounds"], dtype=float),
            shape=tuple(d["shape"]),
            values=np.asarray(d["values"], dtype=float),
            mask=np.asarray(d["mask"], dtype=bool),
        )


@dataclass(frozen=True)
class ReducedModel:
    """A latent vector field of one of the variants ``'bf'``, ``'gt'``, ``'talhi'``.

    Calling the model evaluates ``d phi / dt``.
    """

    variant: str
    dmap: DMapModel
    system: AmbientSystem | None = None
    lift_model: LHModel | None = None
    table: GridTable | None = None
    rhs_model: LHModel | None = None

    def __post_init__(self):
        need = {
            "bf": ("system", "lift_model"),
            "gt": ("table",),
            "talhi": ("rhs_model",),
        }
        if self.variant not in need:
            raise InvalidConfig(f"unknown reduced model variant {self.variant!r}")
        missing = [name for name in need[self.variant] if getattr(self, name) is None]
        if missing:
            raise InvalidConfig(f"{self.variant} model is missing {', '.join(missing)}")

    def __call__(self, phi) -> np.ndarray:
        return _RHS[self.variant](self, phi)


def make_bf(dmap: DMapModel, lift_model: LHModel, sys: AmbientSystem) -> ReducedModel:
    return ReducedModel("bf", dmap, system=sys, lift_model=lift_model)


def bf_rhs(model: ReducedModel, phi) -> np.ndarray:
    """Lift ``phi``, evaluate the ambient dynamics and apply the chain rule."""
    x = lift(model.dmap, model.lift_model, phi)
    return chain_rule_rhs(model.dmap, model.system, x)


def grid_bounds(Phi, pad: float = 0.02) -> np.ndarray:
    """Bounding box of ``Phi`` widened by ``pad`` of its extent on every side."""
    Phi = np.asarray(Phi, dtype=float)
    lo, hi = Phi.min(axis=0), Phi.max(axis=0)
    width = hi - lo
    return np.stack([lo - pad * width, hi + pad * width], axis=1)


def default_max_gap(lift_model: LHModel) -> float:
    """Largest node-to-data distance at which lifting is still trusted.

    Two kernel widths of the lift model. Farther out the nearest training
    point carries a relative kernel weight below ``exp(-2)`` and the
    extension decays towards zero instead of following the data.
    """
    return 2.0 * math.sqrt(lift_model.epsilon2)


def build_grid(
    dmap: DMapModel,
    lift_model: LHModel,
    sys: AmbientSystem,
    n=60,
    bounds=None,
    max_gap: float | None = None,
) -> GridTable:
    """Tabulate the reduced vector field on an ``n x n`` latent grid.

    Every node is lifted with the global Latent Harmonics model, the ambient
    dynamics are evaluated there and mapped back by the chain rule. Nodes
    farther than ``max_gap`` from every training latent point, or whose
    lift fails, are masked.

    Raises
    ------
    GridCoverageError
        If more than half of the nodes are masked.
    """
    Phi = dmap.latent
    k = Phi.shape[1]
    shape = tuple(int(s) for s in np.broadcast_to(n, (k,)))
    if any(s < 2 for s in shape):
        raise InvalidConfig(f"grid needs at least 2 nodes per dimension, got {shape}")
    bounds = grid_bounds(Phi) if bounds is None else np.asarray(bounds, dtype=float)
    if bounds.shape != (k, 2) or not np.all(np.isfinite(bounds)) or np.any(bounds[:, 1] <= bounds[:, 0]):
        raise InvalidConfig(f"bounds must be finite (lo, hi) pairs for {k} dimensions")
    if max_gap is None:
        max_gap = default_max_gap(lift_model)

    table = GridTable(bounds, shape, np.zeros(shape + (k,)), np.zeros(shape, dtype=bool))
    nodes = table.nodes()
    ok = cKDTree(lift_model.Phi_train).query(nodes)[0] <= max_gap
    values = np.zeros((len(nodes), k))
    idx = np.flatnonzero(ok)
    ok[:] = False
    for chunk in np.array_split(idx, max(1, len(idx) // 256)):
        # Nodes whose lift, or whose lifted state, is out of kernel reach stay masked.
        chunk = chunk[reachable(lift_model.Phi_train, lift_model.epsilon2, nodes[chunk])]
        if len(chunk) == 0:
            continue
        X_nodes = lift(dmap, lift_model, nodes[chunk])
        near = reachable(dmap.X, dmap.cfg.epsilon, X_nodes)
        if not near.any():
            continue
        values[chunk[near]] = chain_rule_rhs(dmap, sys, X_nodes[near])
        ok[chunk[near]] = True
    ok &= np.all(np.isfinite(values), axis=1)
    if ok.mean() < 0.5:
        raise GridCoverageError(f"only {ok.sum()} of {ok.size} grid nodes could be lifted")
    return GridTable(bounds, shape, values.reshape(shape + (k,)), ok.reshape(shape))


def make_gt(dmap: DMapModel, table: GridTable) -> ReducedModel:
    return ReducedModel("gt", dmap, table=table)


def gt_rhs(model: ReducedModel, phi) -> np.ndarray:
    """Multi-linear interpolation of the tabulated latent vector field."""
    return model.table(phi)


def talhi_targets(dmap: DMapModel, sys: AmbientSystem) -> np.ndarray:
    """Latent velocities at every training point, by the chain rule."""
    return chain_rule_rhs(dmap, sys, dmap.X)


def fit_talhi(
    dmap: DMapModel,
    sys: AmbientSystem,
    epsilon2: float | None = None,
    d: int = 300,
    train_idx=None,
    targets=None,
) -> ReducedModel:
    """Regress the latent vector field on the latent training points.

    No lifting is involved: each training point already has its ambient
    state, so the chain rule is applied there directly. ``train_idx``
    restricts the regression to a subset (e.g. to hold out a test split);
    precomputed ``targets`` for all training points may be passed in.
    """
    if targets is None:
        targets = talhi_targets(dmap, sys)
    Phi = dmap.latent
    if train_idx is not None:
        Phi, targets = Phi[train_idx], targets[train_idx]
    lh = fit_lh(Phi, targets, epsilon2=epsilon2, d=min(d, len(Phi)))
    return ReducedModel("talhi", dmap, system=sys, rhs_model=lh)


def talhi_rhs(model: ReducedModel, phi) -> np.ndarray:
    return extend(model.rhs_model, phi)


_RHS = {"bf": bf_rhs, "gt": gt_rhs, "talhi": talhi_rhs}
