import numpy as np
import pytest

from demtd.derivatives import (
    central_diff_oracle,
    deriche_hessian,
    deriche_kernels,
    interior,
    separable_correlate,
    sobel_gradient,
)
from demtd.errors import BadParam, TooSmall
from demtd.phantom import band_limited_phantom, lattice_coords


def coords(n=12):
    u = lattice_coords((n, n, n))
    return u[..., 0], u[..., 1], u[..., 2]


def rel_rms(a, b):
    return np.sqrt(np.sum(interior(a - b) ** 2) / np.sum(interior(b) ** 2))


def test_constant_gives_zero():
    f = np.full((9, 9, 9), 3.5)
    assert np.all(sobel_gradient(f).data == 0)
    assert np.max(np.abs(deriche_hessian(f).data)) < 1e-12
    g, h = central_diff_oracle(f)
    assert np.all(g.data == 0) and np.all(h.data == 0)


def test_sobel_ramp_by_hand():
    x, _, _ = coords(8)
    g = sobel_gradient(x).data
    # hand application of the normalised kernel: sum over the 3x3 transverse
    # block of weights (1,2,1)x(1,2,1) = 16, times (x+1) - (x-1) = 2, over 32
    assert np.allclose(interior(g[0], 1), 16 * 2 / 32)
    assert np.allclose(interior(g[1:], 1), 0)


def test_sobel_exact_on_quadratic():
    x, y, z = coords(12)
    g = sobel_gradient(x**2 + y**2 + z**2).data
    expect = np.stack([2 * x, 2 * y, 2 * z])
    assert np.max(np.abs(interior(g - expect, 1))) <= 1e-9 * np.max(np.abs(expect))


def test_deriche_kernel_moments():
    s, d1, d2 = deriche_kernels(1.0, 7)
    k = np.arange(-3, 4)
    assert s.sum() == pytest.approx(1.0, abs=1e-15)
    assert np.sum(k * d1) == pytest.approx(1.0, abs=1e-15)
    assert d2.sum() == pytest.approx(0.0, abs=1e-15)
    assert np.sum(k**2 * d2) == pytest.approx(2.0, abs=1e-14)
    assert np.allclose(s, s[::-1]) and np.allclose(d1, -d1[::-1]) and np.allclose(d2, d2[::-1])


def test_deriche_x_squared():
    x, _, _ = coords(14)
    h = deriche_hessian(x**2)
    assert np.allclose(interior(h.component("xx")), 2.0, atol=1e-6)
    for c in ("xy", "xz", "yy", "yz", "zz"):
        assert np.allclose(interior(h.component(c)), 0.0, atol=1e-6)


def test_deriche_xy():
    x, y, _ = coords(14)
    h = deriche_hessian(x * y)
    assert np.allclose(interior(h.component("xy")), 1.0, atol=1e-6)
    assert np.allclose(interior(h.component("xx")), 0.0, atol=1e-6)
    assert np.allclose(interior(h.component("yy")), 0.0, atol=1e-6)


def test_oracle_exact_on_quadratic():
    x, y, _ = coords(8)
    g, h = central_diff_oracle(x**2)
    assert np.all(interior(g.data[0], 1) == interior(2 * x, 1))
    assert np.all(interior(h.component("xx"), 1) == 2.0)
    g, _ = central_diff_oracle(x)
    assert np.allclose(interior(g.data, 1), np.stack([np.ones_like(x), 0 * x, 0 * x])[:, 1:-1, 1:-1, 1:-1])


@pytest.mark.parametrize("seed", range(5))
def test_random_quadratic_calibration(seed):
    rng = np.random.default_rng(seed)
    x, y, z = coords(14)
    c = rng.normal(size=10)
    f = c[0] + c[1] * x + c[2] * y + c[3] * z + c[4] * x * x + c[5] * x * y + c[6] * x * z + c[7] * y * y + c[8] * y * z + c[9] * z * z
    grad = np.stack([
        c[1] + 2 * c[4] * x + c[5] * y + c[6] * z,
        c[2] + c[5] * x + 2 * c[7] * y + c[8] * z,
        c[3] + c[6] * x + c[8] * y + 2 * c[9] * z,
    ])
    hess = np.stack([np.full_like(x, v) for v in (2 * c[4], c[5], c[6], 2 * c[7], c[8], 2 * c[9])])
    g = sobel_gradient(f).data
    h = deriche_hessian(f).data
    assert np.max(np.abs(interior(g - grad))) <= 1e-6 * np.max(np.abs(grad))
    assert np.max(np.abs(interior(h - hess))) <= 1e-6 * np.max(np.abs(hess))


@pytest.mark.parametrize("seed", range(3))
def test_filters_match_oracle_on_band_limited(seed):
    dims = (24, 24, 24)
    f = band_limited_phantom(dims, seed=seed).value(lattice_coords(dims))
    go, ho = central_diff_oracle(f)
    assert rel_rms(sobel_gradient(f).data, go.data) < 0.05
    assert rel_rms(deriche_hessian(f).data, ho.data) < 0.05


def test_linearity(rng):
    u = rng.normal(size=(9, 10, 11))
    v = rng.normal(size=(9, 10, 11))
    a, b = 1.7, -0.3
    for op in (lambda f: sobel_gradient(f).data, lambda f: deriche_hessian(f).data):
        lhs = op(a * u + b * v)
        rhs = a * op(u) + b * op(v)
        assert np.allclose(lhs, rhs, rtol=0, atol=1e-12 * np.max(np.abs(rhs)))


def test_errors():
    with pytest.raises(TooSmall):
        sobel_gradient(np.zeros((2, 5, 5)))
    with pytest.raises(BadParam):
        deriche_hessian(np.zeros((8, 8, 8)), alpha=0)
    with pytest.raises(BadParam):
        deriche_hessian(np.zeros((8, 8, 8)), window=6)
    with pytest.raises(BadParam):
        deriche_hessian(np.zeros((8, 8, 8)), window=9, border=3)


def test_separable_fixed_order_is_deterministic(rng):
    f = rng.normal(size=(10, 10, 10))
    k = (np.array([1.0, 2.0, 1.0]),) * 3
    assert separable_correlate(f, k).tobytes() == separable_correlate(f.copy(), k).tobytes()


def test_hessian_matrices_symmetric(rng):
    h = deriche_hessian(rng.normal(size=(8, 8, 8))).matrices()
    assert np.array_equal(h, np.swapaxes(h, -1, -2))
