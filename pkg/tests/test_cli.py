import json
import subprocess
import sys

import numpy as np
import pytest

from ddmaps.cli import main, split_indices
from ddmaps.io import load_model, read_matrix, read_trajectory


@pytest.fixture(scope="module")
def stiff_run(tmp_path_factory):
    """sample -> embed -> train (lift and derivatives) on the stiff surrogate."""
    d = tmp_path_factory.mktemp("stiff")
    assert main(["sample", "--problem", "stiff-surrogate", "--out", str(d / "data.csv")]) == 0
    assert main(["embed", "--in", str(d / "data.csv"), "--problem", "stiff-surrogate", "--out", str(d / "dm.json")]) == 0
    assert main(["train", "--in", str(d / "dm.json"), "--target", "lift", "--out", str(d / "lh.json")]) == 0
    assert main(["train", "--in", str(d / "dm.json"), "--target", "derivatives", "--out", str(d / "vf.json")]) == 0
    return d


def test_sample_rectangle_shape_and_determinism(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["sample", "--problem", "rectangle", "--n", "10000", "--seed", "7", "--out", str(a)]) == 0
    assert main(["sample", "--problem", "rectangle", "--n", "10000", "--seed", "7", "--out", str(b)]) == 0
    assert read_matrix(a).shape == (10000, 2)
    assert a.read_bytes() == b.read_bytes()
    prov = json.loads((tmp_path / "a.csv.provenance.json").read_text())
    assert prov["seed"] == 7 and prov["config"]["n"] == 10000 and len(prov["config_hash"]) == 64


def test_sample_errors(tmp_path):
    assert main(["sample", "--problem", "rectangle", "--n", "10", "--out", str(tmp_path / "x.csv")]) == 1
    assert main(["sample", "--problem", "external-csv", "--out", str(tmp_path / "x.csv")]) == 1


def test_embed_selects_and_validates(stiff_run, tmp_path, capsys):
    dm, prov = load_model(stiff_run / "dm.json", "dmap")
    assert dm.selected == (1, 2)
    assert prov["config"]["kernel"]["epsilon"] == 0.03 and prov["config"]["kernel"]["alpha"] == 0
    assert main(["embed", "--in", str(stiff_run / "data.csv"), "--epsilon", "0", "--out", str(tmp_path / "x.json")]) == 1
    assert "epsilon" in capsys.readouterr().err
    assert not (tmp_path / "x.json").exists()


def test_embed_external_csv_uses_median_bandwidth(tmp_path):
    t = np.linspace(0, 1, 150)
    np.savetxt(tmp_path / "curve.csv", np.column_stack([t, np.sin(2 * t)]), delimiter=",")
    assert main(["embed", "--in", str(tmp_path / "curve.csv"), "--n-eigs", "4", "--out", str(tmp_path / "dm.json")]) == 0
    dm, prov = load_model(tmp_path / "dm.json")
    assert dm.selected == (1,)
    assert prov["config"]["problem"] == "external-csv"


def test_train_records_split_and_is_reproducible(stiff_run, tmp_path):
    lh, prov = load_model(stiff_run / "lh.json", "lh")
    dm, _ = load_model(stiff_run / "dm.json")
    _, test = split_indices(dm.n_samples, 0)
    assert prov["test_idx"] == test.tolist()
    assert max(prov["heldout_mse"]) < 1e-4
    assert main(["train", "--in", str(stiff_run / "dm.json"), "--out", str(tmp_path / "again.json")]) == 0
    assert (tmp_path / "again.json").read_bytes() == (stiff_run / "lh.json").read_bytes()
    assert main(["train", "--in", str(stiff_run / "dm.json"), "--d", "0", "--out", str(tmp_path / "z.json")]) == 1


@pytest.mark.parametrize("method", ["talhi", "bf", "gt"])
def test_integrate_methods(stiff_run, tmp_path, method):
    out = tmp_path / method
    args = ["integrate", "--dmap", str(stiff_run / "dm.json"), "--lift", str(stiff_run / "lh.json")]
    args += ["--vf", str(stiff_run / "vf.json"), "--method", method, "--t-end", "0.5", "--n-out", "10"]
    assert main(args + ["--out", str(out)]) == 0
    lat = read_trajectory(tmp_path / f"{method}_latent.csv")
    amb = read_trajectory(tmp_path / f"{method}_ambient.csv")
    assert lat.states.shape == (11, 2) and amb.states.shape == (11, 3)
    assert np.allclose(lat.times, np.linspace(0, 0.5, 11))
    prov = json.loads((tmp_path / f"{method}.provenance.json").read_text())
    assert prov["partial"] is False and prov["config"]["method"] == method


def test_integrate_zero_length_returns_ic(stiff_run, tmp_path):
    args = ["integrate", "--dmap", str(stiff_run / "dm.json"), "--vf", str(stiff_run / "vf.json")]
    args += ["--method", "talhi", "--ic-latent", "0.01,0.002", "--t-end", "0", "--out", str(tmp_path / "z")]
    assert main(args) == 0
    tr = read_trajectory(tmp_path / "z_latent.csv")
    assert len(tr) == 1 and np.array_equal(tr.states[0], [0.01, 0.002])


def test_integrate_gt_leaving_grid_is_partial(stiff_run, tmp_path, capsys):
    args = ["integrate", "--dmap", str(stiff_run / "dm.json"), "--lift", str(stiff_run / "lh.json")]
    args += ["--method", "gt", "--ic-latent", "10,10", "--out", str(tmp_path / "g")]
    assert main(args) == 3
    assert "LeftManifold" in capsys.readouterr().err
    prov = json.loads((tmp_path / "g.provenance.json").read_text())
    assert prov["partial"] and prov["cause"].startswith("LeftManifold")
    assert len(read_trajectory(tmp_path / "g_latent.csv")) == 1
    assert len(read_trajectory(tmp_path / "g_ambient.csv")) == 0


def test_integrate_needs_models(stiff_run, tmp_path):
    args = ["integrate", "--dmap", str(stiff_run / "dm.json"), "--method", "bf", "--out", str(tmp_path / "b")]
    assert main(args) == 1
    args = ["integrate", "--dmap", str(stiff_run / "dm.json"), "--method", "talhi", "--out", str(tmp_path / "b")]
    assert main(args) == 1
    args = ["integrate", "--dmap", str(stiff_run / "dm.json"), "--vf", str(stiff_run / "vf.json")]
    assert main(args + ["--method", "talhi", "--integrator", "rk4", "--out", str(tmp_path / "b")]) == 1


def test_restrict_then_lift_recovers_data(stiff_run, tmp_path):
    X = read_matrix(stiff_run / "data.csv")[:50]
    np.savetxt(tmp_path / "x.csv", X, delimiter=",")
    assert main(["restrict", "--dmap", str(stiff_run / "dm.json"), "--in", str(tmp_path / "x.csv"), "--out", str(tmp_path / "phi.csv")]) == 0
    phi = read_matrix(tmp_path / "phi.csv")
    dm, _ = load_model(stiff_run / "dm.json")
    assert np.allclose(phi, dm.latent[:50], atol=1e-12)
    args = ["lift", "--dmap", str(stiff_run / "dm.json"), "--lift", str(stiff_run / "lh.json")]
    assert main(args + ["--in", str(tmp_path / "phi.csv"), "--out", str(tmp_path / "xr.csv")]) == 0
    assert np.abs(read_matrix(tmp_path / "xr.csv") - X).max() < 0.02


def test_validate_report_is_reproducible(stiff_run, tmp_path, capsys):
    args = ["validate", "--dmap", str(stiff_run / "dm.json"), "--lift", str(stiff_run / "lh.json")]
    args += ["--vf", str(stiff_run / "vf.json"), "--t-end", "0.5", "--n-out", "20", "--grid", "30x30"]
    assert main(args + ["--out", str(tmp_path / "r1.json")]) == 0
    assert main(args + ["--out", str(tmp_path / "r2.json")]) == 0
    text = capsys.readouterr().out
    assert "held-out MSE" in text and "speedup" in text
    r1, r2 = (json.loads((tmp_path / f"r{i}.json").read_text()) for i in (1, 2))
    assert set(r1["trajectories"]) == {"times", "talhi", "bf", "gt"}
    assert r1["selected"] == [1, 2] and len(r1["mse"]["lift"]) == 3
    assert r1["lift_refit_matches"] and r1["derivatives_refit_matches"]
    # Everything except wall-clock timings is a pure function of the inputs.
    r1.pop("timing"), r2.pop("timing")
    assert r1 == r2
    assert r1["trajectories"]["talhi"]["max_relative_error"] < 0.05


def test_validate_missing_model(stiff_run, tmp_path):
    out = tmp_path / "r.json"
    args = ["validate", "--dmap", str(stiff_run / "dm.json"), "--lift", str(tmp_path / "none.json")]
    assert main(args + ["--out", str(out)]) == 1
    assert not out.exists()


def test_console_script_entry_point():
    proc = subprocess.run([sys.executable, "-m", "ddmaps.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and "ddmaps" in proc.stdout
