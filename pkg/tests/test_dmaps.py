import json

import numpy as np
import pytest
from scipy.stats import spearmanr

from ddmaps.dmaps import DMapModel, fit_dmaps, local_linear_residuals, select_nonharmonic
from ddmaps.errors import InvalidConfig, InvalidData, NoReductionWarning
from ddmaps.kernel_core import KernelConfig


def lattice(nx=80, ny=20, ratio=4.0):
    g = np.meshgrid(np.linspace(0, ratio, nx), np.linspace(0, 1, ny), indexing="ij")
    return np.stack(g, axis=-1).reshape(-1, 2)


def test_fit_drops_trivial_pair(line_data):
    X, _ = line_data
    m = fit_dmaps(X, KernelConfig(0.01), 4)
    assert len(m.eig) == 4
    assert np.all(m.eig.eigenvalues < 1.0 - 1e-6)
    # remaining eigenvectors are orthogonal to constants in the degree inner product
    assert np.all(np.abs(m.eig.eigenvectors.std(axis=0)) > 1e-3)


def test_ten_points_on_segment_first_coordinate_monotone():
    s = np.linspace(0.0, 1.0, 10)
    X = np.column_stack([s, 2 * s])
    m = fit_dmaps(X, KernelConfig(0.05), 3)
    d = np.diff(m.eig.eigenvectors[:, 0])
    assert np.all(d > 0) or np.all(d < 0)
    # Neumann Laplacian oracle: cos(pi s) shape
    rho = spearmanr(m.eig.eigenvectors[:, 0], np.cos(np.pi * s))[0]
    assert abs(rho) == pytest.approx(1.0)


@pytest.mark.parametrize("p", [0, 10])
def test_fit_rejects_bad_p(p):
    X = np.random.default_rng(0).normal(size=(10, 2))
    with pytest.raises(InvalidConfig):
        fit_dmaps(X, KernelConfig(1.0), p)


def test_fit_needs_ten_samples():
    with pytest.raises(InvalidData):
        fit_dmaps(np.zeros((9, 2)), KernelConfig(1.0), 2)


def test_curve_selects_single_coordinate(line_data):
    X, t = line_data
    m = select_nonharmonic(fit_dmaps(X, KernelConfig(0.005), 5))
    assert m.selected == (1,)
    assert m.residuals[0] == 1.0
    assert np.all(m.residuals[1:] < 0.5)
    assert abs(spearmanr(m.latent[:, 0], t)[0]) > 0.999


def test_lattice_rectangle_selects_x_and_y():
    X = lattice()
    m = select_nonharmonic(fit_dmaps(X, KernelConfig(0.01), 6))
    assert len(m.selected) == 2
    assert m.selected[0] == 1 and m.selected[1] in (4, 5)
    assert abs(spearmanr(m.latent[:, 0], X[:, 0])[0]) > 0.99
    assert abs(spearmanr(m.latent[:, 1], X[:, 1])[0]) > 0.99


def test_selection_invariant_under_rotation(line_data):
    X, _ = line_data
    X3 = np.column_stack([X, np.zeros(len(X))])
    Q, _ = np.linalg.qr(np.random.default_rng(3).normal(size=(3, 3)))
    a = select_nonharmonic(fit_dmaps(X3, KernelConfig(0.005), 5))
    b = select_nonharmonic(fit_dmaps(X3 @ Q.T, KernelConfig(0.005), 5))
    assert a.selected == b.selected
    np.testing.assert_allclose(a.residuals, b.residuals, atol=1e-6)


def test_residuals_bounds(rng):
    V = rng.normal(size=(150, 4))
    r = local_linear_residuals(V)
    assert r[0] == 1.0
    assert np.all(r >= 0) and np.all(r <= 1.0 + 0.2)


def test_exact_function_of_predictor_has_small_residual():
    s = np.linspace(-1, 1, 300)
    r = local_linear_residuals(np.column_stack([s, 2 * s**2 - 1]))
    assert r[1] < 0.2


def test_no_reduction_warning(line_data):
    X, _ = line_data
    m = fit_dmaps(X[:, :1], KernelConfig(0.005), 4)
    with pytest.warns(NoReductionWarning):
        sel = select_nonharmonic(m, threshold=0.01)
    assert len(sel.selected) > 1


def test_threshold_validation(line_data):
    m = fit_dmaps(line_data[0], KernelConfig(0.01), 3)
    for bad in (0.0, 1.0, -0.5):
        with pytest.raises(InvalidConfig):
            select_nonharmonic(m, bad)


def test_with_selection_and_latent(line_data):
    m = fit_dmaps(line_data[0], KernelConfig(0.01), 3)
    with pytest.raises(InvalidConfig):
        m.latent
    m2 = m.with_selection([1, 3])
    np.testing.assert_array_equal(m2.latent, m.eig.eigenvectors[:, [0, 2]])
    with pytest.raises(InvalidConfig):
        m.with_selection([4])
    with pytest.raises(InvalidConfig):
        m.with_selection([1, 1])


def test_json_round_trip(line_data):
    m = select_nonharmonic(fit_dmaps(line_data[0], KernelConfig(0.01, alpha=1), 3))
    m2 = DMapModel.from_dict(json.loads(json.dumps(m.to_dict())))
    assert m2.selected == m.selected and m2.cfg == m.cfg
    np.testing.assert_array_equal(m2.eig.eigenvectors, m.eig.eigenvectors)
    np.testing.assert_array_equal(m2.row_sums, m.row_sums)
    np.testing.assert_array_equal(m2.X, m.X)


def test_fit_is_deterministic(line_data):
    a = fit_dmaps(line_data[0], KernelConfig(0.01), 3)
    b = fit_dmaps(line_data[0], KernelConfig(0.01), 3)
    np.testing.assert_array_equal(a.eig.eigenvectors, b.eig.eigenvectors)
