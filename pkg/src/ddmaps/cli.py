"""Command-line entry point: ``ddmaps <command> [options]``.

Commands chain through files: ``sample`` writes a data CSV, ``embed`` a
Diffusion Maps model, ``train`` Latent Harmonics models, and ``integrate``,
``lift``, ``restrict`` and ``validate`` consume them. Every output carries
provenance (command, configuration, seed and a configuration hash) and
contains no timestamps, so reruns with the same inputs are byte-identical.

Exit codes: 0 success, 1 configuration or input error, 2 insufficient data,
3 partial trajectory.
"""

from __future__ import annotations

import argparse
import hashlib
import sys
import time
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .benchmark import time_grid_builds
from .dmaps import DMapModel, fit_dmaps, select_nonharmonic
from .errors import DDMapsError, GridCoverageError, IllConditionedWarning, InsufficientSampling, InvalidConfig
from .io import (
    config_hash,
    load_model,
    read_matrix,
    save_model,
    write_json,
    write_matrix,
    write_trajectory,
)
from .kernel_core import KernelConfig, median_epsilon
from .latent_harmonics import LHModel, extend, fit_lh, lift
from .nystrom import reachable, restrict
from .problems import (
    CI_SAMPLING,
    STIFF_SAMPLING,
    ChafeeInfanteSystem,
    SamplingConfig,
    StiffSurrogateSystem,
    rectangle_sample,
    sample_manifold,
)
from .reduced_models import (
    AmbientSystem,
    ReducedModel,
    Trajectory,
    build_grid,
    integrate,
    make_bf,
    make_gt,
    talhi_targets,
)

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_PARTIAL = 0, 1, 2, 3


@dataclass(frozen=True)
class Problem:
    """Per-problem system and default hyperparameters."""

    name: str
    system: AmbientSystem | None
    sampling: SamplingConfig | None
    epsilon: float | None
    alpha: int
    n_eigs: int
    epsilon2_factor: float  # epsilon2 = factor * median squared latent distance


PROBLEMS = {
    "chafee-infante": Problem(
        "chafee-infante", ChafeeInfanteSystem().as_system(), CI_SAMPLING, 0.584, 0, 9, 1e-2
    ),
    "rectangle": Problem("rectangle", None, None, 0.003, 1, 9, 1e-2),
    "stiff-surrogate": Problem(
        "stiff-surrogate", StiffSurrogateSystem().as_system(), STIFF_SAMPLING, 0.03, 0, 8, 1e-1
    ),
    "external-csv": Problem("external-csv", None, None, None, 0, 9, 1e-2),
}


# ---------------------------------------------------------------------------
# helpers


def _problem(name) -> Problem:
    if name is None:
        return PROBLEMS["external-csv"]
    if name not in PROBLEMS:
        raise InvalidConfig(f"unknown problem {name!r}")
    return PROBLEMS[name]


def _system(prob: Problem) -> AmbientSystem:
    if prob.system is None:
        raise InvalidConfig(f"problem {prob.name!r} has no known dynamics")
    return prob.system


def _file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _provenance(command: str, config: dict, seed, inputs=()) -> dict:
    config = {k: v for k, v in sorted(config.items())}
    return {
        "command": command,
        "version": __version__,
        "seed": seed,
        "config": config,
        "config_hash": config_hash({"command": command, "seed": seed, **config}),
        "inputs": {str(p): _file_digest(p) for p in inputs},
    }


def _sidecar(path) -> Path:
    return Path(str(path) + ".provenance.json")


def _require(*paths):
    missing = [str(p) for p in paths if p is not None and not Path(p).is_file()]
    if missing:
        raise FileNotFoundError(f"missing input file(s): {', '.join(missing)}")


def _grid_shape(text: str) -> tuple:
    try:
        shape = tuple(int(s) for s in text.lower().split("x"))
    except ValueError:
        raise InvalidConfig(f"grid must look like NxN, got {text!r}") from None
    if len(shape) != 2 or min(shape) < 2:
        raise InvalidConfig(f"grid must look like NxN with N >= 2, got {text!r}")
    return shape


def _vector(text: str) -> np.ndarray:
    try:
        return np.array([float(s) for s in text.split(",")])
    except ValueError:
        raise InvalidConfig(f"expected comma-separated numbers, got {text!r}") from None


def _load_dmap(path) -> tuple[DMapModel, dict]:
    dmap, prov = load_model(path, "dmap")
    if not dmap.selected:
        raise InvalidConfig(f"{path}: model has no selected coordinates")
    return dmap, prov


def _problem_of(args, dmap_prov: dict) -> Problem:
    name = args.problem or dmap_prov.get("config", {}).get("problem")
    return _problem(name)


def split_indices(n: int, seed, test_fraction: float = 0.1) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic ``(train, test)`` index split of ``n`` samples."""
    if not 0 < test_fraction < 1:
        raise InvalidConfig("test fraction must lie in (0, 1)")
    perm = np.random.default_rng(seed).permutation(n)
    n_test = max(1, int(round(test_fraction * n)))
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])


def heldout_state(prob: Problem, seed) -> np.ndarray:
    """A fresh ambient state drawn like the training data but from a separate stream."""
    sys_, cfg = _system(prob), prob.sampling
    rng = np.random.default_rng([int(seed), 1])
    x0 = sys_.initial_conditions(rng, 1, cfg.ic_amplitude)[0]
    traj = integrate(sys_.rhs, x0, cfg.transient_time, method="rk4", h=cfg.h, space="ambient")
    return traj.states[-1]


def lh_targets(dmap: DMapModel, target: str, prob: Problem | None) -> np.ndarray:
    if target == "lift":
        return dmap.X
    if target == "derivatives":
        return talhi_targets(dmap, _system(prob))
    raise InvalidConfig(f"unknown training target {target!r}")


def relative_error(states, reference) -> np.ndarray:
    """``|phi(t) - phi_ref(t)| / |phi_ref(t)|`` over the common rows."""
    n = min(len(states), len(reference))
    return np.linalg.norm(states[:n] - reference[:n], axis=1) / np.linalg.norm(reference[:n], axis=1)


def _format_table(header, rows) -> str:
    cells = [list(map(str, header))] + [[str(c) for c in r] for r in rows]
    widths = [max(len(r[j]) for r in cells) for j in range(len(header))]
    lines = ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# commands


def cmd_sample(args) -> int:
    prob = _problem(args.problem)
    if prob.name == "external-csv":
        raise InvalidConfig("external-csv data is supplied by the user, not sampled")
    if prob.name == "rectangle":
        X = rectangle_sample(args.n, seed=args.seed)
        config = {"problem": prob.name, "n": args.n}
    else:
        X = sample_manifold(prob.system, prob.sampling, seed=args.seed)
        config = {"problem": prob.name, "sampling": asdict(prob.sampling)}
    write_matrix(args.out, X)
    write_json(_sidecar(args.out), _provenance("sample", config, args.seed))
    print(f"wrote {X.shape[0]} x {X.shape[1]} samples to {args.out}")
    return EXIT_OK


def cmd_embed(args) -> int:
    _require(args.input)
    prob = _problem(args.problem)
    X = read_matrix(args.input)
    epsilon = args.epsilon if args.epsilon is not None else prob.epsilon
    if epsilon is None:
        epsilon = median_epsilon(X)
    alpha = args.alpha if args.alpha is not None else prob.alpha
    n_eigs = args.n_eigs if args.n_eigs is not None else prob.n_eigs
    cfg = KernelConfig(epsilon=epsilon, alpha=alpha)
    dmap = select_nonharmonic(fit_dmaps(X, cfg, n_eigs), threshold=args.threshold)
    config = {
        "problem": prob.name,
        "kernel": cfg.to_dict(),
        "n_eigs": n_eigs,
        "threshold": args.threshold,
    }
    save_model(args.out, dmap, _provenance("embed", config, args.seed, [args.input]))
    rows = [
        (j + 1, f"{dmap.eig.eigenvalues[j]:.6f}", f"{r:.3f}", "*" if j + 1 in dmap.selected else "")
        for j, r in enumerate(dmap.residuals)
    ]
    print(_format_table(("index", "eigenvalue", "residual", "selected"), rows))
    print(f"selected coordinates: {list(dmap.selected)}")
    return EXIT_OK


def cmd_train(args) -> int:
    _require(args.input)
    dmap, dprov = _load_dmap(args.input)
    prob = _problem_of(args, dprov)
    F = lh_targets(dmap, args.target, prob)
    train, test = split_indices(dmap.n_samples, args.seed, args.test_fraction)
    Phi = dmap.latent
    epsilon2 = args.epsilon2
    if epsilon2 is None:
        epsilon2 = prob.epsilon2_factor * median_epsilon(Phi)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", IllConditionedWarning)
        lh = fit_lh(Phi[train], F[train], epsilon2=epsilon2, d=args.d)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    mse = heldout_mse(lh, Phi[test], F[test])
    config = {
        "problem": prob.name,
        "target": args.target,
        "epsilon2": float(epsilon2),
        "d": args.d,
        "test_fraction": args.test_fraction,
    }
    prov = _provenance("train", config, args.seed, [args.input])
    prov.update(
        test_idx=test.tolist(),
        heldout_mse=mse.tolist(),
        n_modes=lh.n_modes,
    )
    save_model(args.out, lh, prov)
    name = "x" if args.target == "lift" else "dphi"
    rows = [(f"{name}_{j + 1}", f"{m:.3e}") for j, m in enumerate(mse)]
    print(_format_table(("target", "held-out MSE (scaled)"), rows))
    print(f"kept {lh.n_modes} modes, epsilon2 = {epsilon2:.4g}")
    return EXIT_OK


def heldout_mse(lh: LHModel, Phi_test, F_test) -> np.ndarray:
    """Per-target MSE on min-max scaled targets."""
    pred = extend(lh, Phi_test, scaled=True)
    return np.mean((pred - lh.scale(F_test)) ** 2, axis=0)


def _reduced_model(method, dmap, prob, lift_lh, vf_lh, grid) -> ReducedModel:
    if method == "bf":
        if lift_lh is None:
            raise InvalidConfig("bf needs a lifting model (--lift)")
        return make_bf(dmap, lift_lh, _system(prob))
    if method == "gt":
        if lift_lh is None:
            raise InvalidConfig("gt needs a lifting model (--lift)")
        return make_gt(dmap, build_grid(dmap, lift_lh, _system(prob), n=grid))
    if method == "talhi":
        if vf_lh is None:
            raise InvalidConfig("talhi needs a vector-field model (--vf)")
        if vf_lh.n_outputs != dmap.latent_dim:
            raise InvalidConfig("vector-field model does not match the latent dimension")
        return ReducedModel("talhi", dmap, rhs_model=vf_lh)
    raise InvalidConfig(f"unknown method {method!r}")


def _integrator_kwargs(args) -> dict:
    kw = {"method": args.integrator, "atol": args.atol, "rtol": args.rtol}
    if args.h is not None:
        kw["h"] = args.h
    elif args.integrator != "rk45":
        raise InvalidConfig(f"{args.integrator} needs --h")
    return kw


def _output_times(t_end, n_out):
    if n_out < 1:
        raise InvalidConfig("--n-out must be at least 1")
    return np.linspace(0.0, t_end, n_out + 1) if t_end > 0 else None


def cmd_integrate(args) -> int:
    _require(args.dmap, args.lift, args.vf)
    dmap, dprov = _load_dmap(args.dmap)
    prob = _problem_of(args, dprov)
    lift_lh = load_model(args.lift, "lh")[0] if args.lift else None
    vf_lh = load_model(args.vf, "lh")[0] if args.vf else None
    model = _reduced_model(args.method, dmap, prob, lift_lh, vf_lh, _grid_shape(args.grid))

    if args.ic_latent is not None:
        phi0 = _vector(args.ic_latent)
    else:
        x0 = _vector(args.ic) if args.ic is not None else heldout_state(prob, args.seed)
        phi0 = restrict(dmap, x0)
    if phi0.shape != (dmap.latent_dim,):
        raise InvalidConfig(f"initial condition must have {dmap.latent_dim} latent coordinates")

    traj = integrate(model, phi0, args.t_end, t_eval=_output_times(args.t_end, args.n_out), **_integrator_kwargs(args))
    out = Path(args.out)
    write_trajectory(out.with_name(out.name + "_latent.csv"), traj)
    if lift_lh is not None:
        # Rows whose latent state is out of kernel reach cannot be lifted.
        ok = reachable(lift_lh.Phi_train, lift_lh.epsilon2, traj.states)
        n = len(ok) if ok.all() else int(np.argmin(ok))
        X = lift(dmap, lift_lh, traj.states[:n]) if n else np.empty((0, dmap.ambient_dim))
        amb = Trajectory(traj.times[:n], X, space="ambient")
        write_trajectory(out.with_name(out.name + "_ambient.csv"), amb)
    config = {
        "problem": prob.name,
        "method": args.method,
        "grid": args.grid,
        "integrator": {n: getattr(args, n) for n in ("integrator", "h", "atol", "rtol", "t_end", "n_out")},
        "phi0": phi0.tolist(),
    }
    prov = _provenance("integrate", config, args.seed, [p for p in (args.dmap, args.lift, args.vf) if p])
    prov["stats"] = traj.stats
    prov["partial"] = traj.partial
    prov["cause"] = None if traj.cause is None else f"{type(traj.cause).__name__}: {traj.cause}"
    write_json(out.with_name(out.name + ".provenance.json"), prov)
    print(f"{len(traj)} rows to t = {traj.times[-1]:.6g} ({traj.stats['n_steps']} steps)")
    if traj.partial:
        print(f"partial trajectory: {prov['cause']}", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_lift(args) -> int:
    _require(args.dmap, args.lift, args.input)
    dmap, _ = _load_dmap(args.dmap)
    lh, _ = load_model(args.lift, "lh")
    Phi = read_matrix(args.input)
    if Phi.shape[1] != dmap.latent_dim:
        raise InvalidConfig(f"expected {dmap.latent_dim} latent columns, got {Phi.shape[1]}")
    write_matrix(args.out, lift(dmap, lh, Phi))
    return EXIT_OK


def cmd_restrict(args) -> int:
    _require(args.dmap, args.input)
    dmap, _ = _load_dmap(args.dmap)
    X = read_matrix(args.input)
    write_matrix(args.out, restrict(dmap, X))
    return EXIT_OK


def cmd_validate(args) -> int:
    _require(args.dmap, args.lift, args.vf)
    dmap, dprov = _load_dmap(args.dmap)
    prob = _problem_of(args, dprov)
    sys_ = _system(prob)
    report = {
        "problem": prob.name,
        "selected": list(dmap.selected),
        "residuals": np.asarray(dmap.residuals).tolist(),
        "mse": {},
        "trajectories": {},
        "timing": {},
    }

    models = {}
    for role, path in (("lift", args.lift), ("derivatives", args.vf)):
        if path is None:
            continue
        lh, prov = load_model(path, "lh")
        cfg = prov.get("config", {})
        test = np.asarray(prov.get("test_idx", []), dtype=int)
        if test.size == 0 or cfg.get("target") != role:
            raise InvalidConfig(f"{path}: not a {role} model with a recorded held-out split")
        F = lh_targets(dmap, role, prob)
        report["mse"][role] = heldout_mse(lh, dmap.latent[test], F[test]).tolist()
        # Refit on the recorded split: times training and confirms the stored model.
        train = np.setdiff1d(np.arange(dmap.n_samples), test)
        t0 = time.perf_counter()
        refit = fit_lh(dmap.latent[train], F[train], epsilon2=cfg["epsilon2"], d=cfg["d"])
        report["timing"][f"train_{role}_seconds"] = time.perf_counter() - t0
        report[f"{role}_refit_matches"] = bool(
            refit.n_modes == lh.n_modes and np.allclose(refit.projection(), lh.projection(), rtol=0, atol=1e-10)
        )
        models[role] = lh

    if "lift" in models:
        t0 = time.perf_counter()
        bench = time_grid_builds(dmap, models["lift"], sys_, n=_grid_shape(args.grid), k=args.baseline_k)
        report["timing"]["grid_build"] = {k: v for k, v in bench.items() if k != "table"}
        report["timing"]["grid_total_seconds"] = time.perf_counter() - t0

    t_eval = np.linspace(0.0, args.t_end, args.n_out + 1)
    x0 = heldout_state(prob, args.seed)
    truth = integrate(sys_.rhs, x0, args.t_end, t_eval=t_eval, atol=1e-10, rtol=1e-10, space="ambient")
    phi_true = restrict(dmap, truth.states)
    report["trajectories"]["times"] = t_eval.tolist()
    methods = [m for m, need in (("talhi", "derivatives"), ("bf", "lift"), ("gt", "lift")) if need in models]
    for m in methods:
        model = (
            make_gt(dmap, bench["table"])
            if m == "gt"
            else _reduced_model(m, dmap, prob, models.get("lift"), models.get("derivatives"), None)
        )
        t0 = time.perf_counter()
        traj = integrate(model, phi_true[0], args.t_end, t_eval=t_eval, **_integrator_kwargs(args))
        rel = relative_error(traj.states, phi_true)
        report["trajectories"][m] = {
            "relative_error": rel.tolist(),
            "max_relative_error": float(rel.max()),
            "partial": traj.partial,
            "n_steps": traj.stats["n_steps"],
        }
        report["timing"][f"integrate_{m}_seconds"] = time.perf_counter() - t0

    config = {"problem": prob.name, "grid": args.grid, "t_end": args.t_end, "n_out": args.n_out}
    report["provenance"] = _provenance("validate", config, args.seed, [p for p in (args.dmap, args.lift, args.vf) if p])
    write_json(args.out, report)
    print(format_report(report))
    return EXIT_OK


def format_report(report: dict) -> str:
    parts = [f"problem: {report['problem']}  selected: {report['selected']}"]
    for role, mse in report["mse"].items():
        name = "x" if role == "lift" else "dphi"
        rows = [(f"{name}_{j + 1}", f"{m:.3e}") for j, m in enumerate(mse)]
        parts.append(_format_table((f"{role} target", "held-out MSE"), rows))
    rows = [
        (m, f"{r['max_relative_error']:.4f}", r["n_steps"], "yes" if r["partial"] else "no")
        for m, r in report["trajectories"].items()
        if m != "times"
    ]
    if rows:
        parts.append(_format_table(("method", "max rel. error", "steps", "partial"), rows))
    g = report["timing"].get("grid_build")
    if g:
        parts.append(
            f"grid build: global {g['global_seconds']:.3f} s, local baseline "
            f"{g['local_seconds']:.3f} s, speedup {g['speedup']:.2f}x "
            f"({g['lifted_nodes']}/{g['nodes']} nodes)"
        )
    return "\n\n".join(parts)


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ddmaps", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    problems = sorted(PROBLEMS)

    def common(sp):
        sp.add_argument("--seed", type=int, default=0)
        return sp

    s = common(sub.add_parser("sample", help="sample a benchmark problem to CSV"))
    s.add_argument("--problem", choices=problems, required=True)
    s.add_argument("--n", type=int, default=4000, help="rectangle sample size")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sample)

    s = common(sub.add_parser("embed", help="fit Diffusion Maps and select coordinates"))
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--problem", choices=problems)
    s.add_argument("--epsilon", type=float)
    s.add_argument("--alpha", type=int, choices=(0, 1))
    s.add_argument("--n-eigs", type=int)
    s.add_argument("--threshold", type=float, default=0.5)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_embed)

    s = common(sub.add_parser("train", help="fit a Latent Harmonics model"))
    s.add_argument("--in", dest="input", required=True, help="Diffusion Maps model JSON")
    s.add_argument("--problem", choices=problems)
    s.add_argument("--target", choices=("lift", "derivatives"), default="lift")
    s.add_argument("--epsilon2", type=float)
    s.add_argument("--d", type=int, default=300)
    s.add_argument("--test-fraction", type=float, default=0.1)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train)

    def integrator(sp, default="rk45"):
        sp.add_argument("--integrator", choices=("euler", "rk4", "rk45"), default=default)
        sp.add_argument("--h", type=float)
        sp.add_argument("--atol", type=float, default=1e-7)
        sp.add_argument("--rtol", type=float, default=1e-7)
        sp.add_argument("--t-end", type=float, default=6.0)
        sp.add_argument("--n-out", type=int, default=120, help="output intervals")
        sp.add_argument("--grid", default="60x60")

    s = common(sub.add_parser("integrate", help="integrate a reduced model"))
    s.add_argument("--dmap", required=True)
    s.add_argument("--lift", help="lifting model JSON (bf, gt, lifted output)")
    s.add_argument("--vf", help="vector-field model JSON (talhi)")
    s.add_argument("--problem", choices=problems)
    s.add_argument("--method", choices=("bf", "gt", "talhi"), required=True)
    s.add_argument("--ic", help="ambient initial state, comma-separated")
    s.add_argument("--ic-latent", help="latent initial state, comma-separated")
    integrator(s)
    s.add_argument("--out", required=True, help="output prefix")
    s.set_defaults(func=cmd_integrate)

    s = common(sub.add_parser("lift", help="map latent points to ambient space"))
    s.add_argument("--dmap", required=True)
    s.add_argument("--lift", required=True)
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_lift)

    s = common(sub.add_parser("restrict", help="map ambient points to latent space"))
    s.add_argument("--dmap", required=True)
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_restrict)

    s = common(sub.add_parser("validate", help="held-out errors, trajectory errors and timings"))
    s.add_argument("--dmap", required=True)
    s.add_argument("--lift")
    s.add_argument("--vf")
    s.add_argument("--problem", choices=problems)
    s.add_argument("--baseline-k", type=int, default=20)
    integrator(s)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", IllConditionedWarning)
            return args.func(args)
    except (InsufficientSampling, GridCoverageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (DDMapsError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
