import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from demtd.derivatives import interior
from demtd.errors import BadParam, SingularP, TooSmall
from demtd.invariants import invariant_E
from demtd.phantom import (
    AnalyticField,
    analytic_invariance,
    apply_affine_deformation,
    band_limited_phantom,
    deform_pair,
    invariance_report,
    lattice_coords,
    quadratic_phantom,
    random_affine,
    random_rotation,
    smooth_test_phantom,
    synthetic_lesion,
)
from demtd.volume_io import Volume3D

SPHERE = {(2, 0, 0): 1.0, (0, 2, 0): 1.0, (0, 0, 2): 1.0}


def test_sphere_phantom():
    vol, grad, hess = quadratic_phantom(SPHERE, (16, 16, 16))
    assert np.all(hess.component("xx") == 2) and np.all(hess.component("xy") == 0)
    u = lattice_coords((16, 16, 16))
    assert np.allclose(grad.vectors(), 2 * u)
    # a lattice point at offset (1, 1, 1) from the centre
    E, _ = invariant_E(2 * np.ones(3), 2 * np.eye(3))
    assert E == pytest.approx(6.0)


def test_constant_and_xyz_phantoms():
    _, grad, hess = quadratic_phantom({(0, 0, 0): 4.0}, (7, 7, 7))
    assert np.all(grad.data == 0) and np.all(hess.data == 0)
    _, _, hess = quadratic_phantom({(1, 1, 1): 1.0}, (7, 7, 7))
    u = lattice_coords((7, 7, 7))
    for c in ("xx", "yy", "zz"):
        assert np.all(hess.component(c) == 0)
    assert np.array_equal(hess.component("xy"), u[..., 2])
    assert np.array_equal(hess.component("yz"), u[..., 0])


def test_phantom_errors():
    with pytest.raises(TooSmall):
        quadratic_phantom(SPHERE, (6, 16, 16))
    with pytest.raises(BadParam):
        AnalyticField({(2, 2, 0): 1.0})


def test_derivatives_match_finite_differences(rng):
    f = AnalyticField({(1, 2, 0): 0.3, (0, 1, 1): -1.0, (3, 0, 0): 0.1}).with_waves([(1.5, (0.2, -0.1, 0.3), 0.4)])
    u = rng.normal(size=(20, 3))
    h = 1e-5
    for a in range(3):
        e = np.zeros(3)
        e[a] = h
        fd = (f.value(u + e) - f.value(u - e)) / (2 * h)
        assert np.allclose(f.gradient(u)[:, a], fd, rtol=1e-7, atol=1e-7)
        fd2 = (f.gradient(u + e) - f.gradient(u - e)) / (2 * h)
        assert np.allclose(f.hessian(u)[:, a, :], fd2, rtol=1e-6, atol=1e-6)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_compose_is_exact(seed):
    rng = np.random.default_rng(seed)
    f = smooth_test_phantom(seed % 1000).with_waves([(0.5, tuple(rng.normal(size=3) * 0.1), 1.0)])
    P = random_affine(rng, 0.5, 2.0)
    u = rng.normal(size=(30, 3)) * 5
    assert np.allclose(f.compose(P).value(u), f.value(u @ P.T), rtol=1e-12, atol=1e-9)


def test_affine_generators(rng):
    for _ in range(20):
        R = random_rotation(rng)
        assert np.allclose(R @ R.T, np.eye(3)) and np.linalg.det(R) == pytest.approx(1.0)
        s = np.linalg.svd(random_affine(rng), compute_uv=False)
        assert np.all((s >= 0.8 - 1e-12) & (s <= 1.25 + 1e-12))


def test_identity_deformation_exact():
    vol = Volume3D(np.random.default_rng(0).normal(size=(9, 9, 9)))
    out = apply_affine_deformation(vol, np.eye(3), "trilinear")
    assert np.array_equal(out.data, vol.data)
    assert np.allclose(apply_affine_deformation(vol, np.eye(3), "tricubic").data, vol.data, atol=1e-5)


def test_linear_field_stretched():
    u = lattice_coords((16, 16, 16))
    vol = Volume3D(u[..., 0])
    out = apply_affine_deformation(vol, np.diag([2.0, 1.0, 1.0]), "trilinear")
    inner = np.abs(u[..., 0]) <= 3.5
    assert np.allclose(out.data[inner], 2 * u[..., 0][inner], atol=1e-5)


def test_linear_field_exact_under_trilinear(rng):
    u = lattice_coords((20, 20, 20))
    c = rng.normal(size=3)
    vol = Volume3D(u @ c)
    P = random_affine(rng, 0.9, 1.1)
    out = apply_affine_deformation(vol, P, "trilinear")
    expect = u @ P.T @ c
    inner = np.all(np.abs(u @ P.T) <= 8.5, axis=-1)
    assert np.allclose(out.data[inner], expect[inner], atol=1e-4)


def test_deformation_reversible(rng):
    dims = (28, 28, 28)
    vol = Volume3D(band_limited_phantom(dims, seed=1, min_wavelength=12).value(lattice_coords(dims)))
    P = random_affine(rng, 0.9, 1.1)
    back = apply_affine_deformation(apply_affine_deformation(vol, P), np.linalg.inv(P))
    diff = interior(back.data - vol.data, 6)
    assert np.sqrt(np.mean(diff**2)) < 0.02 * np.sqrt(np.mean(interior(vol.data, 6) ** 2))


def test_singular_deformation():
    with pytest.raises(SingularP):
        apply_affine_deformation(Volume3D(np.zeros((8, 8, 8))), np.diag([1.0, 1.0, 0.0]))
    with pytest.raises(BadParam):
        apply_affine_deformation(Volume3D(np.zeros((8, 8, 8))), np.eye(3), "nearest")


def test_deform_pair_dims():
    vol = Volume3D(np.ones((8, 9, 10)))
    pair = deform_pair(vol, np.diag([1.1, 0.9, 1.0]))
    assert pair.I1.dims == pair.I2.dims and pair.interp == "tricubic"


def test_analytic_path_any_nonsingular_P(rng):
    f = smooth_test_phantom(1)
    for _ in range(100):
        P = rng.normal(size=(3, 3))
        if abs(np.linalg.det(P)) < 0.1:
            continue
        assert analytic_invariance(f, P, (8, 8, 8))["rel_rms"] < 1e-9


def test_identity_report_zero():
    rep = invariance_report(smooth_test_phantom(0), [np.eye(3)] * 2, dims=(16, 16, 16))
    assert rep["summary"]["analytic"]["rel_rms_max"] == 0.0
    assert rep["summary"]["discrete"]["rel_rms_max"] < 1e-6
    assert rep["summary"]["count"] == 2


def test_discrete_report_small_draws():
    rng = np.random.default_rng(5)
    Ps = [random_affine(rng) for _ in range(3)]
    rep = invariance_report(smooth_test_phantom(2), Ps, dims=(24, 24, 24))
    assert rep["summary"]["discrete"]["rel_rms_max"] < 0.05
    assert rep["summary"]["analytic"]["rel_rms_max"] < 1e-9


def test_synthetic_lesion():
    vol, mask = synthetic_lesion(0, 1, dims=(16, 16, 16))
    assert vol.dims == mask.dims == (16, 16, 16)
    assert 0 < mask.count < 16**3
    a, _ = synthetic_lesion(0, 1)
    assert a == vol
