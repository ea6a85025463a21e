"""Plain-text persistence: CSV for matrices and trajectories, JSON for models.

Data matrices are header-less CSV; trajectory files carry a header row.
Numbers are written with 17 significant digits so that a write/read cycle
is exact.
"""

from __future__ import annotations

import hashlib
import io
import json
from pathlib import Path

import numpy as np

from .dmaps import DMapModel
from .errors import InvalidData
from .latent_harmonics import LHModel
from .reduced_models import GridTable, Trajectory

__all__ = [
    "write_matrix",
    "read_matrix",
    "write_trajectory",
    "read_trajectory",
    "write_json",
    "read_json",
    "save_model",
    "load_model",
    "config_hash",
]

_FMT = "%.17g"
_KINDS = {"dmap": DMapModel, "lh": LHModel, "grid": GridTable}


def _to_text(A, header=None) -> str:
    buf = io.StringIO()
    if header is not None:
        buf.write(",".join(header) + "\n")
    np.savetxt(buf, np.atleast_2d(A), fmt=_FMT, delimiter=",", newline="\n")
    return buf.getvalue()


def write_matrix(path, A) -> None:
    """Write a 1-D or 2-D array as header-less CSV, one row per sample."""
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    Path(path).write_text(_to_text(A), newline="\n")


def read_matrix(path) -> np.ndarray:
    """Read a header-less CSV written by :func:`write_matrix` as a 2-D array."""
    if not Path(path).read_text().strip():
        raise InvalidData(f"{path}: empty data file")
    try:
        A = np.loadtxt(path, delimiter=",", dtype=float, ndmin=2)
    except ValueError as exc:
        raise InvalidData(f"{path}: not a numeric CSV matrix ({exc})") from None
    return A


def write_trajectory(path, traj: Trajectory, prefix=None) -> None:
    """Write ``t,<prefix>_1,...`` followed by one row per time."""
    if prefix is None:
        prefix = "phi" if traj.space == "latent" else "x"
    states = traj.states if traj.states.ndim == 2 else traj.states.reshape(len(traj), -1)
    header = ["t"] + [f"{prefix}_{j + 1}" for j in range(states.shape[1])]
    Path(path).write_text(_to_text(np.column_stack([traj.times, states]), header), newline="\n")


def read_trajectory(path) -> Trajectory:
    head, _, body = Path(path).read_text().partition("\n")
    header = head.strip().split(",")
    if header[0] != "t":
        raise InvalidData(f"{path}: missing trajectory header")
    if body.strip():
        A = np.loadtxt(io.StringIO(body), delimiter=",", ndmin=2)
    else:
        A = np.empty((0, len(header)))
    space = "latent" if len(header) > 1 and header[1].startswith("phi") else "ambient"
    return Trajectory(A[:, 0], A[:, 1:], space=space)


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InvalidData(f"{path}: invalid JSON ({exc})") from None


def save_model(path, model, provenance: dict | None = None) -> None:
    """Write a model as JSON tagged with its kind and optional provenance."""
    kind = next(k for k, cls in _KINDS.items() if isinstance(model, cls))
    write_json(path, {"kind": kind, "model": model.to_dict(), "provenance": provenance or {}})


def load_model(path, kind=None):
    """Inverse of :func:`save_model`; returns ``(model, provenance)``."""
    d = read_json(path)
    if d.get("kind") not in _KINDS or (kind is not None and d["kind"] != kind):
        raise InvalidData(f"{path}: expected a {kind or 'model'} file, found {d.get('kind')!r}")
    return _KINDS[d["kind"]].from_dict(d["model"]), d.get("provenance", {})


def config_hash(config: dict) -> str:
    """SHA-256 of the canonical JSON form of ``config``."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()
