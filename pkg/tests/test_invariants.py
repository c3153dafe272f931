import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from demtd.derivatives import GradientField, HessianField
from demtd.errors import DimMismatch, EmptyMask, SingularH, SingularP
from demtd.invariants import (
    adjugate3,
    affine_pushforward,
    check_affine,
    default_eps_singular,
    det3,
    harris_tensor,
    invariant_E,
    invariant_map,
    invariant_map_from_fields,
    invariants_F,
    invariants_F_direct,
)
from demtd.phantom import quadratic_phantom
from demtd.volume_io import MaskROI, Volume3D


def conditioned_matrix(rng, low=0.2, high=5.0, symmetric=False):
    """Random matrix with singular values (or eigenvalue magnitudes) log-uniform in [low, high]."""
    q1 = np.linalg.qr(rng.normal(size=(3, 3)))[0]
    s = np.exp(rng.uniform(np.log(low), np.log(high), 3))
    if symmetric:
        return q1 @ np.diag(s * rng.choice([-1.0, 1.0], 3)) @ q1.T
    q2 = np.linalg.qr(rng.normal(size=(3, 3)))[0]
    return q1 @ np.diag(s) @ q2.T


seeds = st.integers(0, 2**32 - 1)


def test_E_worked_example():
    g = np.array([1.0, 2.0, 3.0])
    H = np.diag([1.0, 2.0, 3.0])
    E, singular = invariant_E(g, H)
    assert not singular
    assert E == pytest.approx(1 + 2 + 3, abs=1e-12)
    assert invariants_F(E) == pytest.approx((-5.0, 7.0))


def test_E_identity_hessian():
    E, _ = invariant_E([0.6, 0.0, 0.8], np.eye(3))
    assert E == pytest.approx(1.0, abs=1e-15)


def test_singular_hessian_flagged():
    E, singular = invariant_E([1.0, 1.0, 1.0], np.diag([1.0, 1.0, 0.0]))
    assert singular and E == 0.0


def test_F_direct_rejects_singular():
    with pytest.raises(SingularH):
        invariants_F_direct([1.0, 0.0, 0.0], np.zeros((3, 3)))


def test_singular_affine_rejected():
    with pytest.raises(SingularP):
        affine_pushforward(np.ones(3), np.eye(3), np.diag([1.0, 1.0, 0.0]))
    with pytest.raises(SingularP):
        check_affine(np.diag([1e-5, 1e-5, 1e-5]))


def test_adjugate_and_det(rng):
    M = rng.normal(size=(50, 3, 3))
    assert np.allclose(det3(M), np.linalg.det(M))
    assert np.allclose(adjugate3(M), np.linalg.inv(M) * np.linalg.det(M)[:, None, None])


def test_eps_singular_scale():
    assert default_eps_singular(np.eye(3)) == pytest.approx(1e-12 / 27)
    assert default_eps_singular(np.zeros((3, 3))) == 1e-300


@settings(max_examples=300, deadline=None)
@given(seeds)
def test_affine_invariance(seed):
    rng = np.random.default_rng(seed)
    g = rng.normal(size=3)
    H = conditioned_matrix(rng, symmetric=True)
    P = conditioned_matrix(rng)
    g2, H2 = affine_pushforward(g, H, P)
    e1, _ = invariant_E(g, H)
    e2, _ = invariant_E(g2, H2)
    assert abs(e2 - e1) <= 1e-9 * max(1.0, abs(e1))


@settings(max_examples=300, deadline=None)
@given(seeds)
def test_F_sum_is_exactly_two(seed):
    rng = np.random.default_rng(seed)
    E = rng.normal(size=200) * 10.0 ** rng.uniform(-20, 15, 200)
    F1, F2 = invariants_F(E)
    assert np.all(F1 + F2 == 2.0)
    assert np.all(np.abs(F1 - (1 - E)) <= 4.5e-16 * np.maximum(1.0, np.abs(E)))


def test_F_sum_beyond_exact_range():
    E = np.array([1e17, -1e20, 3e300])
    F1, F2 = invariants_F(E)
    assert np.all(np.abs(F1 + F2 - 2.0) <= 4 * np.spacing(np.abs(E)))


@settings(max_examples=200, deadline=None)
@given(seeds)
def test_determinant_ratio_matches_E(seed):
    rng = np.random.default_rng(seed)
    g = rng.normal(size=3)
    H = conditioned_matrix(rng, symmetric=True)
    E, _ = invariant_E(g, H)
    F1, F2 = invariants_F_direct(g, H)
    scale = max(1.0, abs(E))
    assert abs(F1 - (1 - E)) <= 1e-9 * scale
    assert abs(F2 - (1 + E)) <= 1e-9 * scale


@settings(max_examples=200, deadline=None)
@given(seeds)
def test_harris_determinant_identity(seed):
    # det(H - g^T g) = det(H) (1 - g H^-1 g^T)
    rng = np.random.default_rng(seed)
    g = rng.normal(size=3)
    H = conditioned_matrix(rng, symmetric=True)
    lhs = det3(H - harris_tensor(g))
    rhs = det3(H) * (1 - g @ np.linalg.solve(H, g))
    assert abs(lhs - rhs) <= 1e-9 * max(1.0, abs(rhs))


@settings(max_examples=100, deadline=None)
@given(seeds, st.floats(-3, 3))
def test_E_scales_with_intensity(seed, log_c):
    # E = g H^-1 g^T scales linearly with intensity gain c
    rng = np.random.default_rng(seed)
    c = 10.0**log_c
    g = rng.normal(size=3)
    H = conditioned_matrix(rng, symmetric=True)
    e1, _ = invariant_E(g, H)
    e2, _ = invariant_E(c * g, c * H)
    assert e2 == pytest.approx(c * e1, rel=1e-10, abs=1e-12)


def test_map_on_quadratic_phantom():
    # I = u^T A u / 2 with A = diag(1, 2, 4): H = A, g = A u, E = u^T A u
    vol, _, _ = quadratic_phantom({(2, 0, 0): 0.5, (0, 2, 0): 1.0, (0, 0, 2): 2.0}, dims=(15, 15, 15))
    mask = np.zeros((15, 15, 15), dtype=bool)
    mask[4:11, 4:11, 4:11] = True
    inv = invariant_map(vol, MaskROI(mask))
    u = np.stack(np.meshgrid(*(np.arange(15) - 7.0,) * 3, indexing="ij"), -1)
    expect = u[..., 0] ** 2 + 2 * u[..., 1] ** 2 + 4 * u[..., 2] ** 2
    assert np.allclose(inv.E[mask], expect[mask], rtol=1e-5, atol=1e-5)
    assert np.all(inv.E[~mask] == 0) and np.all(inv.F1[~mask] == 1) and np.all(inv.F2[~mask] == 1)
    assert np.all(inv.F1 + inv.F2 == 2.0)
    stats = inv.stats()
    assert stats["masked_voxels"] == 343 and stats["singular_voxels"] == 0


def test_map_singular_when_flat():
    vol = Volume3D(np.ones((9, 9, 9)))
    inv = invariant_map(vol)
    # the filters return rounding noise at most, so E vanishes either way
    assert np.all(inv.E == 0) and np.all(inv.F1 == 1) and np.all(inv.F2 == 1)


def test_map_errors(rng):
    g = GradientField(rng.normal(size=(3, 5, 5, 5)))
    h = HessianField(rng.normal(size=(6, 5, 5, 4)))
    with pytest.raises(DimMismatch):
        invariant_map_from_fields(g, h)
    h = HessianField(rng.normal(size=(6, 5, 5, 5)))
    with pytest.raises(EmptyMask):
        invariant_map_from_fields(g, h, np.zeros((5, 5, 5), dtype=bool))
