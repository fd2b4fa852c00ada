"""Tiled execution engine for the per-pixel kernels.

Tiles play the role of OpenCL work-groups: each tile stages its input strip
(tile plus filter halo) into a private buffer before computing, so small tiles
pay for redundant halo fetches exactly as small work-groups do on a GPU.
Results never depend on the tiling.
"""

from __future__ import annotations

import math
import threading
import time
from collections import defaultdict
from dataclasses import dataclass
from typing import Callable, Hashable

import numpy as np
from numba import njit

from .raster import Raster

# Work-group limits of the two devices compared in the benchmarks.
MAX_TILE_AREA_SMALL = 256
MAX_TILE_AREA_LARGE = 1024
DEFAULT_MAX_TILE_AREA = MAX_TILE_AREA_LARGE


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class TileConfig:
    tile_w: int = 8
    tile_h: int = 4
    max_tile_area: int = DEFAULT_MAX_TILE_AREA

    def __post_init__(self):
        if not (_is_pow2(self.tile_w) and _is_pow2(self.tile_h)):
            raise ValueError(f"tile sides must be powers of two, got {self.tile_w}x{self.tile_h}")
        if self.tile_w * self.tile_h > self.max_tile_area:
            raise ValueError(
                f"tile {self.tile_w}x{self.tile_h} exceeds max area {self.max_tile_area}"
            )

    @property
    def area(self) -> int:
        return self.tile_w * self.tile_h

    def transposed(self) -> "TileConfig":
        return TileConfig(self.tile_h, self.tile_w, self.max_tile_area)

    def __str__(self):
        return f"{self.tile_w}x{self.tile_h}"

    @classmethod
    def parse(cls, text: str, max_tile_area: int = DEFAULT_MAX_TILE_AREA) -> "TileConfig":
        w, _, h = text.lower().partition("x")
        return cls(int(w), int(h), max_tile_area)


def tile_candidates(max_area: int, min_side: int = 2, max_w: int | None = None,
                    max_h: int | None = None) -> list[TileConfig]:
    """All power-of-two tiles with both sides >= min_side and area <= max_area."""
    out = []
    w = min_side
    while w * min_side <= max_area and (max_w is None or w <= max_w):
        h = min_side
        while w * h <= max_area and (max_h is None or h <= max_h):
            out.append(TileConfig(w, h, max_area))
            h *= 2
        w *= 2
    return out


def strip_elements(tiles: TileConfig, radius: int, axis: str = "x") -> int:
    """Number of input elements one tile stages before a 1-D filter of the given radius.

    For the x pass with an 8x4 tile and radius 60 this is (60 + 8 + 60) * 4.
    """
    if axis == "x":
        return (tiles.tile_w + 2 * radius) * tiles.tile_h
    return tiles.tile_w * (tiles.tile_h + 2 * radius)


@dataclass(frozen=True)
class GaussianKernel:
    sigma: float
    radius: int
    weights: np.ndarray

    @property
    def taps(self) -> int:
        return self.weights.size


def kernel_radius(sigma: float) -> int:
    # Python's round() is half-to-even; 3*sigma lands on .5 only for sigma = k/6
    return max(1, int(math.floor(3.0 * sigma + 0.5)))


def make_gaussian_kernel(sigma: float) -> GaussianKernel:
    if not (sigma > 0 and math.isfinite(sigma)):
        raise ValueError(f"sigma must be positive, got {sigma}")
    radius = kernel_radius(sigma)
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    w = np.exp(-(x * x) / (2.0 * sigma * sigma))
    w /= w.sum()
    # exact symmetry regardless of summation rounding
    w = 0.5 * (w + w[::-1])
    w.flags.writeable = False
    return GaussianKernel(float(sigma), radius, w)


# ---------------------------------------------------------------------------
# numba kernels; arrays are float64 (H, W)


@njit(cache=True)
def _gauss_x_tiled(img, w, radius, tw, th, out):
    H, W = img.shape
    sw = tw + 2 * radius
    strip = np.empty((th, sw))
    acc = np.empty(tw)
    for y0 in range(0, H, th):
        nh = min(th, H - y0)
        for x0 in range(0, W, tw):
            nw = min(tw, W - x0)
            # stage the strip (clamp-to-edge)
            for j in range(th):
                y = min(y0 + j, H - 1)
                for i in range(sw):
                    x = min(max(x0 - radius + i, 0), W - 1)
                    strip[j, i] = img[y, x]
            for j in range(nh):
                for i in range(nw):
                    acc[i] = 0.0
                for k in range(2 * radius + 1):
                    wk = w[k]
                    for i in range(nw):
                        acc[i] += wk * strip[j, i + k]
                for i in range(nw):
                    out[y0 + j, x0 + i] = acc[i]
    return out


@njit(cache=True)
def _gauss_y_tiled(img, w, radius, tw, th, out):
    H, W = img.shape
    sh = th + 2 * radius
    strip = np.empty((sh, tw))
    acc = np.empty(tw)
    for y0 in range(0, H, th):
        nh = min(th, H - y0)
        for x0 in range(0, W, tw):
            nw = min(tw, W - x0)
            for j in range(sh):
                y = min(max(y0 - radius + j, 0), H - 1)
                for i in range(tw):
                    x = min(x0 + i, W - 1)
                    strip[j, i] = img[y, x]
            for j in range(nh):
                for i in range(nw):
                    acc[i] = 0.0
                for k in range(2 * radius + 1):
                    wk = w[k]
                    for i in range(nw):
                        acc[i] += wk * strip[j + k, i]
                for i in range(nw):
                    out[y0 + j, x0 + i] = acc[i]
    return out


@njit(cache=True)
def _diff_x_tiled(img, tw, th, out):
    H, W = img.shape
    strip = np.empty((th, tw + 2))
    for y0 in range(0, H, th):
        nh = min(th, H - y0)
        for x0 in range(0, W, tw):
            nw = min(tw, W - x0)
            for j in range(th):
                y = min(y0 + j, H - 1)
                for i in range(tw + 2):
                    x = min(max(x0 - 1 + i, 0), W - 1)
                    strip[j, i] = img[y, x]
            for j in range(nh):
                for i in range(nw):
                    out[y0 + j, x0 + i] = (strip[j, i + 2] - strip[j, i]) * 0.5
    return out


@njit(cache=True)
def _diff_y_tiled(img, tw, th, out):
    H, W = img.shape
    strip = np.empty((th + 2, tw))
    for y0 in range(0, H, th):
        nh = min(th, H - y0)
        for x0 in range(0, W, tw):
            nw = min(tw, W - x0)
            for j in range(th + 2):
                y = min(max(y0 - 1 + j, 0), H - 1)
                for i in range(tw):
                    x = min(x0 + i, W - 1)
                    strip[j, i] = img[y, x]
            for j in range(nh):
                for i in range(nw):
                    out[y0 + j, x0 + i] = (strip[j + 2, i] - strip[j, i]) * 0.5
    return out


def _as_grey_array(img) -> np.ndarray:
    if isinstance(img, Raster):
        if img.channels != 1:
            raise ValueError("kernel expects a single-channel raster")
        return img.data
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"kernel expects a 2-D array, got shape {arr.shape}")
    return arr


def gauss_x_array(arr: np.ndarray, kernel: GaussianKernel, tiles: TileConfig) -> np.ndarray:
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    out = np.empty_like(arr)
    return _gauss_x_tiled(arr, kernel.weights, kernel.radius, tiles.tile_w, tiles.tile_h, out)


def gauss_y_array(arr: np.ndarray, kernel: GaussianKernel, tiles: TileConfig) -> np.ndarray:
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    out = np.empty_like(arr)
    return _gauss_y_tiled(arr, kernel.weights, kernel.radius, tiles.tile_w, tiles.tile_h, out)


def diff_x_array(arr: np.ndarray, tiles: TileConfig) -> np.ndarray:
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    return _diff_x_tiled(arr, tiles.tile_w, tiles.tile_h, np.empty_like(arr))


def diff_y_array(arr: np.ndarray, tiles: TileConfig) -> np.ndarray:
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    return _diff_y_tiled(arr, tiles.tile_w, tiles.tile_h, np.empty_like(arr))


def gauss_x(img: Raster, kernel: GaussianKernel, tiles: TileConfig = TileConfig()) -> Raster:
    """Horizontal Gaussian pass with clamp-to-edge borders."""
    return Raster(gauss_x_array(_as_grey_array(img), kernel, tiles))


def gauss_y(img: Raster, kernel: GaussianKernel, tiles: TileConfig = TileConfig()) -> Raster:
    """Vertical Gaussian pass with clamp-to-edge borders."""
    return Raster(gauss_y_array(_as_grey_array(img), kernel, tiles))


def gradient(img: Raster, tiles: TileConfig = TileConfig()) -> tuple[Raster, Raster]:
    """Central differences (clamp-to-edge) along x and y."""
    arr = _as_grey_array(img)
    return Raster(diff_x_array(arr, tiles)), Raster(diff_y_array(arr, tiles))


def warm_up() -> None:
    """Compile the numba kernels so the first timed call measures compute only."""
    a = np.zeros((4, 4))
    k = make_gaussian_kernel(1.0)
    t = TileConfig(2, 2)
    gauss_x_array(a, k, t)
    gauss_y_array(a, k, t)
    diff_x_array(a, t)
    diff_y_array(a, t)


# ---------------------------------------------------------------------------
# timing


@dataclass
class StageTiming:
    name: Hashable
    elapsed: float = 0.0
    invocations: int = 0

    @property
    def mean(self) -> float:
        return self.elapsed / self.invocations if self.invocations else 0.0


class StageTimer:
    """Accumulates wall time per stage key; safe for concurrent use."""

    def __init__(self, clock: Callable[[], float] = time.perf_counter):
        self._clock = clock
        self._lock = threading.Lock()
        self._stages: dict[Hashable, StageTiming] = {}
        self._samples: dict[Hashable, list[float]] = defaultdict(list)

    def record(self, name: Hashable, elapsed: float) -> None:
        if elapsed < 0:
            raise ValueError("elapsed time must be non-negative")
        with self._lock:
            st = self._stages.get(name)
            if st is None:
                st = self._stages[name] = StageTiming(name)
            st.elapsed += elapsed
            st.invocations += 1
            self._samples[name].append(elapsed)

    def __getitem__(self, name) -> StageTiming:
        return self._stages[name]

    def __contains__(self, name) -> bool:
        return name in self._stages

    def names(self) -> list:
        return list(self._stages)

    def samples(self, name) -> list[float]:
        return list(self._samples[name])

    def items(self):
        return self._stages.items()

    def clock(self) -> float:
        return self._clock()


def run_stage(name: Hashable, stage: Callable, *args, timer: StageTimer | None = None, **kwargs):
    """Run ``stage(*args, **kwargs)``, recording elapsed wall time under ``name``."""
    if timer is None:
        return stage(*args, **kwargs)
    t0 = timer.clock()
    out = stage(*args, **kwargs)
    timer.record(name, timer.clock() - t0)
    return out
