import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ddmaps.dmaps import fit_dmaps
from ddmaps.errors import IllConditionedWarning, InvalidConfig, InvalidData, OutOfSampleTooFar
from ddmaps.kernel_core import KernelConfig
from ddmaps.latent_harmonics import LHModel, default_epsilon2, extend, fit_lh, lift


@pytest.fixture(scope="module")
def plane():
    rng = np.random.default_rng(11)
    return rng.random((400, 2))


def smooth(P):
    return np.column_stack([np.sin(2 * P[:, 0]) * P[:, 1], np.exp(-P[:, 0]) + P[:, 1] ** 2])


def test_training_point_projection_identity(plane):
    m = fit_lh(plane, smooth(plane), epsilon2=0.01, d=100)
    np.testing.assert_allclose(extend(m, plane, scaled=True), m.projection(), atol=1e-9)


def test_full_rank_interpolates(plane):
    P = plane[:60]
    F = smooth(P)
    m = fit_lh(P, F, epsilon2=0.01, d=60, scale=False)
    np.testing.assert_allclose(extend(m, P), F, atol=1e-8)


def test_generalizes_smooth_function(plane):
    m = fit_lh(plane[:350], smooth(plane[:350]), epsilon2=0.005, d=300)
    pred = extend(m, plane[350:])
    err = pred - smooth(plane[350:])
    assert np.sqrt(np.mean(err**2)) < 5e-3
    assert np.abs(err).max() < 5e-2


@settings(max_examples=15, deadline=None)
@given(a=st.floats(-5, 5), b=st.floats(-5, 5), seed=st.integers(0, 1000))
def test_linearity_in_targets(a, b, seed):
    rng = np.random.default_rng(seed)
    P = rng.random((50, 2))
    f, g = rng.normal(size=50), rng.normal(size=50)
    Q = rng.random((7, 2))
    mf = fit_lh(P, f, epsilon2=0.02, d=20, scale=False)
    mg = fit_lh(P, g, epsilon2=0.02, d=20, scale=False)
    mh = fit_lh(P, a * f + b * g, epsilon2=0.02, d=20, scale=False)
    np.testing.assert_allclose(
        extend(mh, Q), a * extend(mf, Q) + b * extend(mg, Q), atol=1e-9 * (1 + abs(a) + abs(b))
    )


def test_scaling_is_min_max(plane):
    F = smooth(plane) * [10.0, -3.0] + [2.0, 7.0]
    m = fit_lh(plane, F, epsilon2=0.01, d=50)
    np.testing.assert_allclose(m.scale(F).min(axis=0), 0.0, atol=1e-15)
    np.testing.assert_allclose(m.scale(F).max(axis=0), 1.0)
    np.testing.assert_allclose(m.unscale(m.scale(F)), F, atol=1e-12)


def test_eigen_structure(plane):
    m = fit_lh(plane, smooth(plane), epsilon2=0.01, d=40)
    assert np.all(np.diff(m.sigma) <= 0)
    np.testing.assert_allclose(m.Psi.T @ m.Psi, np.eye(40), atol=1e-10)


def test_truncates_ill_conditioned_modes(plane):
    with pytest.warns(IllConditionedWarning):
        m = fit_lh(plane, smooth(plane), epsilon2=1.0, d=300)
    assert m.n_modes < 300
    assert np.all(m.sigma > 1e-12 * m.sigma[0])


@pytest.mark.parametrize("kw", [{"d": 0}, {"d": 401}, {"epsilon2": 0.0}, {"epsilon2": -1.0}])
def test_config_validation(plane, kw):
    with pytest.raises(InvalidConfig):
        fit_lh(plane, smooth(plane), **{"epsilon2": 0.01, "d": 10, **kw})


def test_target_row_mismatch(plane):
    with pytest.raises(InvalidData):
        fit_lh(plane, np.zeros(10), epsilon2=0.01, d=5)


def test_far_point(plane):
    m = fit_lh(plane, smooth(plane), epsilon2=1e-4, d=50)
    with pytest.raises(OutOfSampleTooFar):
        extend(m, np.array([50.0, 50.0]))


def test_default_bandwidth(plane):
    from scipy.spatial.distance import pdist

    assert default_epsilon2(plane) == pytest.approx(1e-2 * np.median(pdist(plane, "sqeuclidean")))


def test_lift_dimension_check(plane):
    X = np.column_stack([plane, plane[:, 0] * plane[:, 1]])
    dm = fit_dmaps(X, KernelConfig(0.1), 3).with_selection([1, 2])
    good = fit_lh(dm.latent, X, d=50)
    assert lift(dm, good, dm.latent[0]).shape == (3,)
    bad = fit_lh(dm.latent, X[:, :2], d=50)
    with pytest.raises(InvalidConfig):
        lift(dm, bad, dm.latent[0])


def test_json_round_trip(plane):
    m = fit_lh(plane, smooth(plane), epsilon2=0.01, d=30)
    m2 = LHModel.from_dict(json.loads(json.dumps(m.to_dict())))
    np.testing.assert_allclose(extend(m2, plane[:5]), extend(m, plane[:5]), rtol=1e-13)
