import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.ndimage import correlate1d

from hhfreak.detector import BASE_SIGMAS
from hhfreak.pipeline import (
    StageTimer,
    TileConfig,
    gauss_x,
    gauss_y,
    gradient,
    make_gaussian_kernel,
    run_stage,
    strip_elements,
    tile_candidates,
)
from hhfreak.raster import Raster

TILES = [TileConfig(2, 2), TileConfig(8, 4), TileConfig(32, 8), TileConfig(128, 8), TileConfig(1, 1)]
pow2 = st.sampled_from([1, 2, 4, 8, 16, 32])


def dense_x(arr, kernel):
    return correlate1d(arr, kernel.weights, axis=1, mode="nearest")


def dense_y(arr, kernel):
    return correlate1d(arr, kernel.weights, axis=0, mode="nearest")


# --- kernel construction


def test_kernel_sigma_20_has_121_taps():
    k = make_gaussian_kernel(20)
    assert k.taps == 121 and k.radius == 60


def test_kernel_sigma_07():
    k = make_gaussian_kernel(0.7)
    assert k.radius == 2 and k.taps == 5
    np.testing.assert_array_equal(k.weights, k.weights[::-1])
    # independent evaluation of the formula
    x = np.arange(-2, 3)
    w = np.exp(-x * x / (2 * 0.49))
    np.testing.assert_allclose(k.weights, w / w.sum(), rtol=1e-14)


@given(st.floats(0.05, 40.0))
def test_kernel_normalised_and_symmetric(sigma):
    k = make_gaussian_kernel(sigma)
    assert abs(k.weights.sum() - 1.0) <= 1e-6
    assert np.all(k.weights >= 0)
    np.testing.assert_array_equal(k.weights, k.weights[::-1])
    assert k.radius == max(1, math.floor(3 * sigma + 0.5))


@pytest.mark.parametrize("sigma", [0.0, -1.0, float("nan")])
def test_kernel_rejects_bad_sigma(sigma):
    with pytest.raises(ValueError):
        make_gaussian_kernel(sigma)


# --- tiles


def test_tile_config_validation():
    with pytest.raises(ValueError):
        TileConfig(3, 2)
    with pytest.raises(ValueError):
        TileConfig(32, 16, max_tile_area=256)
    assert TileConfig(32, 32).area == 1024
    assert TileConfig.parse("8x4") == TileConfig(8, 4)


def test_tile_candidates_within_area():
    cands = tile_candidates(256)
    assert TileConfig(2, 2, 256) in cands and TileConfig(32, 8, 256) in cands
    assert all(c.area <= 256 for c in cands)
    assert len(cands) == 28


def test_prefetch_strip_geometry():
    # sigma 20 with an 8x4 tile stages (60 + 8 + 60) * 4 elements
    r = make_gaussian_kernel(20).radius
    assert strip_elements(TileConfig(8, 4), r, "x") == (60 + 8 + 60) * 4


# --- gauss_x / gauss_y


@pytest.mark.parametrize("tiles", TILES, ids=str)
def test_constant_image_unchanged(tiles):
    img = Raster(np.full((13, 17), 0.37))
    k = make_gaussian_kernel(3.0)
    np.testing.assert_allclose(gauss_x(img, k, tiles).data, 0.37, rtol=0, atol=1e-15)
    np.testing.assert_allclose(gauss_y(img, k, tiles).data, 0.37, rtol=0, atol=1e-15)


def test_impulse_response_is_kernel():
    img = np.zeros((41, 41))
    img[20, 20] = 1.0
    k = make_gaussian_kernel(2.0)
    out = gauss_x(Raster(img), k, TileConfig(4, 2)).data
    np.testing.assert_array_equal(out[20, 20 - k.radius : 20 + k.radius + 1], k.weights)
    assert np.count_nonzero(out[:20]) == 0


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 40), st.integers(1, 40), st.floats(0.3, 8.0), pow2, pow2, pow2, pow2, st.integers(0, 2**32 - 1))
def test_tile_independence(h, w, sigma, tw1, th1, tw2, th2, seed):
    arr = np.random.default_rng(seed).random((h, w))
    img = Raster(arr)
    k = make_gaussian_kernel(sigma)
    a, b = TileConfig(tw1, th1), TileConfig(tw2, th2)
    assert gauss_x(img, k, a) == gauss_x(img, k, b)
    assert gauss_y(img, k, a) == gauss_y(img, k, b)
    dxa, dya = gradient(img, a)
    dxb, dyb = gradient(img, b)
    assert dxa == dxb and dya == dyb


@pytest.mark.parametrize("sigma", BASE_SIGMAS)
def test_matches_dense_oracle(sigma, rng):
    arr = rng.random((64, 64))
    k = make_gaussian_kernel(sigma)
    t = TileConfig(8, 4)
    np.testing.assert_allclose(gauss_x(Raster(arr), k, t).data, dense_x(arr, k), atol=1e-6, rtol=0)
    np.testing.assert_allclose(gauss_y(Raster(arr), k, t).data, dense_y(arr, k), atol=1e-6, rtol=0)


def test_separable_passes_commute(rng):
    img = Raster(rng.random((30, 45)))
    k = make_gaussian_kernel(2.5)
    t = TileConfig(4, 4)
    xy = gauss_y(gauss_x(img, k, t), k, t).data
    yx = gauss_x(gauss_y(img, k, t), k, t).data
    np.testing.assert_allclose(xy, yx, atol=1e-6, rtol=0)


@pytest.mark.parametrize("tiles", TILES, ids=str)
def test_gauss_y_is_transposed_gauss_x(tiles, rng):
    arr = rng.random((23, 37))
    k = make_gaussian_kernel(4.0)
    via_x = gauss_x(Raster(arr.T), k, tiles).data.T
    np.testing.assert_array_equal(gauss_y(Raster(arr), k, tiles).data, via_x)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 30), st.integers(2, 30), st.floats(0.3, 6.0), st.integers(0, 2**32 - 1))
def test_mirror_symmetry(h, w, sigma, seed):
    arr = np.random.default_rng(seed).random((h, w))
    k = make_gaussian_kernel(sigma)
    t = TileConfig(4, 2)
    a = gauss_x(Raster(arr[:, ::-1]), k, t).data
    b = gauss_x(Raster(arr), k, t).data[:, ::-1]
    np.testing.assert_allclose(a, b, atol=1e-9, rtol=0)


@pytest.mark.parametrize("sigma", [0.7, 2.0, 4.0])
def test_mass_conservation_interior(sigma, rng):
    k = make_gaussian_kernel(sigma)
    m = k.radius + 1
    arr = np.zeros((40 + 2 * m, 50 + 2 * m))
    arr[m:-m, m:-m] = rng.random((40, 50))
    t = TileConfig(8, 8)
    out = gauss_y(gauss_x(Raster(arr), k, t), k, t).data
    assert abs(out.mean() - arr.mean()) <= 1e-6


def test_kernels_reject_colour():
    with pytest.raises(ValueError):
        gauss_x(Raster(np.zeros((2, 2, 3))), make_gaussian_kernel(1.0))


# --- gradient


def test_gradient_constant_zero():
    dx, dy = gradient(Raster(np.full((9, 7), 0.5)))
    assert np.all(dx.data == 0) and np.all(dy.data == 0)


def test_gradient_ramps():
    h, w = 12, 20
    y, x = np.mgrid[0:h, 0:w].astype(float)
    dx, dy = gradient(Raster(x / w), TileConfig(4, 4))
    np.testing.assert_allclose(dx.data[:, 1:-1], 1 / w, rtol=1e-12)
    assert np.all(dy.data == 0)
    dx, dy = gradient(Raster(y), TileConfig(2, 8))
    np.testing.assert_allclose(dy.data[1:-1], 1.0)
    assert np.all(dx.data == 0)


def test_gradient_matches_naive(rng):
    arr = rng.random((11, 13))
    p = np.pad(arr, 1, mode="edge")
    ex = (p[1:-1, 2:] - p[1:-1, :-2]) / 2
    ey = (p[2:, 1:-1] - p[:-2, 1:-1]) / 2
    dx, dy = gradient(Raster(arr), TileConfig(2, 4))
    np.testing.assert_allclose(dx.data, ex, atol=1e-15)
    np.testing.assert_allclose(dy.data, ey, atol=1e-15)


# --- timing


def test_run_stage_identity_and_counts():
    timer = StageTimer()
    img = Raster(np.arange(6.0).reshape(2, 3))
    out = run_stage("identity", lambda r: r, img, timer=timer)
    assert out == img
    assert timer["identity"].elapsed >= 0
    run_stage("identity", lambda r: r, img, timer=timer)
    assert timer["identity"].invocations == 2
    assert len(timer.samples("identity")) == 2


def test_run_stage_untimed_matches_timed(rng):
    img = Raster(rng.random((16, 16)))
    k = make_gaussian_kernel(2.0)
    timed = run_stage("gaussx", gauss_x, img, k, TileConfig(4, 4), timer=StageTimer())
    assert timed == gauss_x(img, k, TileConfig(4, 4))


def test_timer_rejects_negative():
    with pytest.raises(ValueError):
        StageTimer().record("x", -1.0)
