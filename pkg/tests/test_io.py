import json

import numpy as np
import pytest

from ddmaps import KernelConfig, Trajectory, fit_dmaps, fit_lh, select_nonharmonic
from ddmaps.errors import InvalidData
from ddmaps.io import (
    config_hash,
    load_model,
    read_matrix,
    read_trajectory,
    save_model,
    write_matrix,
    write_trajectory,
)


def test_matrix_round_trip_is_exact(tmp_path, rng):
    A = rng.standard_normal((7, 3)) * 10.0 ** rng.integers(-300, 300, size=(7, 3))
    write_matrix(tmp_path / "a.csv", A)
    assert np.array_equal(read_matrix(tmp_path / "a.csv"), A)


def test_matrix_format(tmp_path):
    write_matrix(tmp_path / "a.csv", [[0.5, -1.0], [2.0, 1e-20]])
    text = (tmp_path / "a.csv").read_bytes()
    assert text == b"0.5,-1\n2,9.9999999999999995e-21\n"


def test_vector_written_as_column(tmp_path):
    write_matrix(tmp_path / "v.csv", [1.0, 2.0, 3.0])
    assert read_matrix(tmp_path / "v.csv").shape == (3, 1)


def test_bad_matrix_file(tmp_path):
    (tmp_path / "bad.csv").write_text("1,2\nx,3\n")
    with pytest.raises(InvalidData):
        read_matrix(tmp_path / "bad.csv")
    (tmp_path / "empty.csv").write_text("")
    with pytest.raises(InvalidData):
        read_matrix(tmp_path / "empty.csv")


def test_trajectory_header_and_round_trip(tmp_path, rng):
    tr = Trajectory(np.array([0.0, 0.5, 1.0]), rng.standard_normal((3, 2)))
    write_trajectory(tmp_path / "t.csv", tr)
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "t,phi_1,phi_2"
    back = read_trajectory(tmp_path / "t.csv")
    assert back.space == "latent"
    assert np.array_equal(back.times, tr.times) and np.array_equal(back.states, tr.states)

    amb = Trajectory(tr.times, rng.standard_normal((3, 4)), space="ambient")
    write_trajectory(tmp_path / "x.csv", amb)
    assert (tmp_path / "x.csv").read_text().startswith("t,x_1,x_2,x_3,x_4\n")
    assert read_trajectory(tmp_path / "x.csv").space == "ambient"


def test_model_round_trip(tmp_path, line_data):
    X, _ = line_data
    dm = select_nonharmonic(fit_dmaps(X, KernelConfig(0.01), 4))
    save_model(tmp_path / "dm.json", dm, {"seed": 3})
    back, prov = load_model(tmp_path / "dm.json", "dmap")
    assert prov == {"seed": 3}
    assert back.selected == dm.selected
    assert np.array_equal(back.eig.eigenvectors, dm.eig.eigenvectors)

    lh = fit_lh(dm.latent, X, d=20)
    save_model(tmp_path / "lh.json", lh)
    assert np.array_equal(load_model(tmp_path / "lh.json", "lh")[0].coeffs, lh.coeffs)
    with pytest.raises(InvalidData):
        load_model(tmp_path / "lh.json", "dmap")


def test_invalid_json(tmp_path):
    (tmp_path / "m.json").write_text("{not json")
    with pytest.raises(InvalidData):
        load_model(tmp_path / "m.json")
    (tmp_path / "m.json").write_text(json.dumps({"kind": "other"}))
    with pytest.raises(InvalidData):
        load_model(tmp_path / "m.json")


def test_config_hash_is_order_independent():
    assert config_hash({"a": 1, "b": [1, 2]}) == config_hash({"b": [1, 2], "a": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})
