"""Timing harness: global Latent Harmonics grid build vs. per-node local retraining.

The baseline lifts every grid node with a Latent Harmonics model trained
only on that node's ``k`` nearest latent training points, so a regression
is fitted once per node instead of once overall. It exists for timing
comparisons only.
"""

from __future__ import annotations

import time
import warnings

import numpy as np
from scipy.spatial import cKDTree

from .dmaps import DMapModel
from .errors import IllConditionedWarning, OutOfSampleTooFar
from .kernel_core import median_epsilon
from .latent_harmonics import LHModel, extend, fit_lh
from .reduced_models import AmbientSystem, GridTable, build_grid, chain_rule_rhs

__all__ = ["local_lift", "build_grid_local", "time_grid_builds"]


def local_lift(Phi_train, X_train, phi, k: int = 20, tree=None) -> np.ndarray:
    """Lift one latent point with a regression fitted on its ``k`` nearest neighbours.

    The local kernel bandwidth is the median squared distance among the
    neighbours.
    """
    tree = cKDTree(Phi_train) if tree is None else tree
    _, idx = tree.query(phi, k=k)
    P = Phi_train[idx]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IllConditionedWarning)
        lh = fit_lh(P, X_train[idx], epsilon2=median_epsilon(P), d=k)
    return extend(lh, phi)


def build_grid_local(
    dmap: DMapModel, sys: AmbientSystem, bounds, n=60, k: int = 20, mask=None
) -> GridTable:
    """Grid tabulation with per-node local lifting.

    ``mask`` selects the nodes to evaluate (all by default); the others are
    left masked.
    """
    Phi, X = dmap.latent, dmap.X
    kdim = Phi.shape[1]
    shape = tuple(int(s) for s in np.broadcast_to(n, (kdim,)))
    bounds = np.asarray(bounds, dtype=float)
    table = GridTable(bounds, shape, np.zeros(shape + (kdim,)), np.zeros(shape, bool))
    nodes = table.nodes()
    ok = np.ones(len(nodes), bool) if mask is None else np.asarray(mask, bool).ravel().copy()
    tree = cKDTree(Phi)
    values = np.zeros((len(nodes), kdim))
    for i in np.flatnonzero(ok):
        try:
            x = local_lift(Phi, X, nodes[i], k=k, tree=tree)
            values[i] = chain_rule_rhs(dmap, sys, x)
        except OutOfSampleTooFar:
            ok[i] = False
    return GridTable(bounds, shape, values.reshape(shape + (kdim,)), ok.reshape(shape))


def time_grid_builds(
    dmap: DMapModel,
    lift_model: LHModel,
    sys: AmbientSystem,
    n=60,
    k: int = 20,
    lift_fit_seconds: float | None = None,
) -> dict:
    """Time the global and the per-node local grid builds on the same nodes.

    ``lift_fit_seconds`` (the one-off cost of fitting ``lift_model``) is
    added to a second, fit-inclusive speedup figure when given. The global
    table is returned under ``"table"``.
    """
    t0 = time.perf_counter()
    table = build_grid(dmap, lift_model, sys, n=n)
    t_global = time.perf_counter() - t0

    t0 = time.perf_counter()
    local = build_grid_local(dmap, sys, table.bounds, n=n, k=k, mask=table.mask)
    t_local = time.perf_counter() - t0

    m = table.mask & local.mask
    diff = np.abs(table.values[m] - local.values[m])
    out = {
        "nodes": int(m.size),
        "lifted_nodes": int(m.sum()),
        "global_seconds": t_global,
        "local_seconds": t_local,
        "speedup": t_local / t_global,
        "max_abs_difference": float(diff.max()) if diff.size else 0.0,
        "table": table,
    }
    if lift_fit_seconds is not None:
        out["lift_fit_seconds"] = float(lift_fit_seconds)
        out["speedup_with_fit"] = t_local / (t_global + lift_fit_seconds)
    return out
