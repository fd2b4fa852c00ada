"""Harris-Hessian detector.

Every scale runs the same twelve stages (blur, derivatives, structure tensor,
Harris response, corner count, Hessian determinant). Corner counts over the
base scales select the characteristic scale, two more scales bracket it, and
the Hessian determinant across all scales decides which corners survive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .pipeline import (
    DEFAULT_MAX_TILE_AREA,
    StageTimer,
    TileConfig,
    diff_x_array,
    diff_y_array,
    gauss_x_array,
    gauss_y_array,
    make_gaussian_kernel,
    run_stage,
)
from .raster import Keypoint, Raster, to_grey

BASE_SIGMAS = (0.7, 2.0, 4.0, 6.0, 8.0, 12.0, 16.0, 20.0, 24.0)

STAGES = (
    "gaussx", "gaussy", "ddx", "ddy", "mulxx", "mulyy", "mulxy",
    "gaussx2", "gaussy2", "harris", "count", "hessian",
)
GATHER = "gather"

# Calibrated on the bundled poster image (scripts/calibrate_thresholds.py).
DEFAULT_CORNER_THRESHOLD = 1e-5
DEFAULT_HESSIAN_THRESHOLD = 1e-3


@dataclass(frozen=True)
class DetectorConfig:
    base_sigmas: tuple[float, ...] = BASE_SIGMAS
    harris_k: float = 0.04
    corner_threshold: float = DEFAULT_CORNER_THRESHOLD
    hessian_threshold: float = DEFAULT_HESSIAN_THRESHOLD
    tiles: TileConfig = field(default_factory=TileConfig)

    def __post_init__(self):
        sig = tuple(float(s) for s in self.base_sigmas)
        object.__setattr__(self, "base_sigmas", sig)
        if len(sig) < 1 or any(s <= 0 for s in sig):
            raise ValueError("base_sigmas must be non-empty and positive")
        if any(b <= a for a, b in zip(sig, sig[1:])):
            raise ValueError("base_sigmas must be strictly increasing")
        if not self.corner_threshold > 0 or not self.hessian_threshold > 0:
            raise ValueError("thresholds must be positive")

    @classmethod
    def from_text(cls, text: str) -> "DetectorConfig":
        """Parse ``key=value`` lines; ``#`` starts a comment."""
        kw: dict = {}
        tile_w = tile_h = None
        max_area = DEFAULT_MAX_TILE_AREA
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ValueError(f"line {lineno}: expected key=value")
            key, value = key.strip(), value.strip()
            try:
                if key == "base_sigmas":
                    kw[key] = tuple(float(v) for v in value.split(","))
                elif key in ("harris_k", "corner_threshold", "hessian_threshold"):
                    kw[key] = float(value)
                elif key == "tile_w":
                    tile_w = int(value)
                elif key == "tile_h":
                    tile_h = int(value)
                elif key == "max_tile_area":
                    max_area = int(value)
                else:
                    raise ValueError(f"unknown key {key!r}")
            except ValueError as exc:
                raise ValueError(f"line {lineno}: {exc}") from None
        default = TileConfig()
        kw["tiles"] = TileConfig(tile_w or default.tile_w, tile_h or default.tile_h, max_area)
        return cls(**kw)

    @classmethod
    def from_file(cls, path) -> "DetectorConfig":
        return cls.from_text(Path(path).read_text())

    def to_text(self) -> str:
        return (
            f"base_sigmas={','.join(repr(s) for s in self.base_sigmas)}\n"
            f"harris_k={self.harris_k!r}\n"
            f"corner_threshold={self.corner_threshold!r}\n"
            f"hessian_threshold={self.hessian_threshold!r}\n"
            f"tile_w={self.tiles.tile_w}\n"
            f"tile_h={self.tiles.tile_h}\n"
            f"max_tile_area={self.tiles.max_tile_area}\n"
        )


@dataclass
class ScaleLevel:
    sigma: float
    response: np.ndarray
    mask: np.ndarray
    count: int
    hessian: np.ndarray


@dataclass
class ScaleSpace:
    levels: list[ScaleLevel] = field(default_factory=list)

    @property
    def sigmas(self) -> list[float]:
        return [lv.sigma for lv in self.levels]

    def counts(self) -> dict[float, int]:
        return {lv.sigma: lv.count for lv in self.levels}

    def sorted(self) -> "ScaleSpace":
        return ScaleSpace(sorted(self.levels, key=lambda lv: lv.sigma))


@dataclass
class DetectionResult:
    keypoints: list[Keypoint]
    timings: StageTimer
    space: ScaleSpace
    characteristic_sigma: float

    def __iter__(self):
        # allows ``keypoints, timings = detect(...)``
        return iter((self.keypoints, self.timings))


# ---------------------------------------------------------------------------
# per-pixel helpers


def _product(a, b, scale):
    return (scale * a) * b


def _gauss_x3(arrs, kernel, tiles):
    return tuple(gauss_x_array(a, kernel, tiles) for a in arrs)


def _gauss_y3(arrs, kernel, tiles):
    return tuple(gauss_y_array(a, kernel, tiles) for a in arrs)


def _harris(sxx, syy, sxy, k):
    tr = sxx + syy
    return (sxx * syy - sxy * sxy) - k * (tr * tr)


def _local_max_mask(resp: np.ndarray, threshold: float) -> np.ndarray:
    H, W = resp.shape
    padded = np.pad(resp, 1, mode="constant", constant_values=-np.inf)
    mask = resp > threshold
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dy == 0 and dx == 0:
                continue
            mask &= resp > padded[1 + dy : 1 + dy + H, 1 + dx : 1 + dx + W]
    return mask


def _hessian(dx, dy, sigma, tiles):
    dxx = diff_x_array(dx, tiles)
    dyy = diff_y_array(dy, tiles)
    dxy = diff_y_array(dx, tiles)
    s4 = sigma ** 4
    return s4 * (dxx * dyy - dxy * dxy)


def _grey_array(img) -> np.ndarray:
    if isinstance(img, Raster):
        return to_grey(img).data
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError("expected a single-channel image")
    return arr


def _run_scale(grey, sigma, cfg: DetectorConfig, timer, upto="hessian") -> dict:
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    kern = make_gaussian_kernel(sigma)
    tiles = cfg.tiles
    out: dict = {}

    def stage(name, fn, *args):
        return run_stage((name, sigma), fn, *args, timer=timer)

    bx = stage("gaussx", gauss_x_array, grey, kern, tiles)
    blurred = stage("gaussy", gauss_y_array, bx, kern, tiles)
    dx = stage("ddx", diff_x_array, blurred, tiles)
    dy = stage("ddy", diff_y_array, blurred, tiles)
    out.update(blurred=blurred, dx=dx, dy=dy)
    # gradients are scale-normalised by sigma so responses compare across scales
    s2 = sigma * sigma
    xx = stage("mulxx", _product, dx, dx, s2)
    yy = stage("mulyy", _product, dy, dy, s2)
    xy = stage("mulxy", _product, dx, dy, s2)
    sx = stage("gaussx2", _gauss_x3, (xx, yy, xy), kern, tiles)
    sxx, syy, sxy = stage("gaussy2", _gauss_y3, sx, kern, tiles)
    out["response"] = stage("harris", _harris, sxx, syy, sxy, cfg.harris_k)
    if upto == "harris":
        return out
    out["mask"] = stage("count", _local_max_mask, out["response"], cfg.corner_threshold)
    out["count"] = int(np.count_nonzero(out["mask"]))
    out["hessian"] = stage("hessian", _hessian, dx, dy, sigma, tiles)
    return out


# ---------------------------------------------------------------------------
# public operations


def harris_response(img, sigma: float, k: float = 0.04, tiles: TileConfig = TileConfig()) -> Raster:
    """Scale-normalised Harris response ``det(M) - k*trace(M)^2`` at one scale."""
    cfg = replace(DetectorConfig(), harris_k=k, tiles=tiles)
    return Raster(_run_scale(_grey_array(img), sigma, cfg, None, upto="harris")["response"])


def count_corners(response, threshold: float) -> tuple[np.ndarray, int]:
    """Strict 8-neighbourhood maxima above ``threshold``."""
    arr = response.data if isinstance(response, Raster) else np.asarray(response, dtype=np.float64)
    mask = _local_max_mask(arr, threshold)
    return mask, int(np.count_nonzero(mask))


def characteristic_sigma(counts: dict[float, int]) -> float:
    """Scale with the most corners; ties go to the smaller scale."""
    if not counts:
        raise ValueError("counts must not be empty")
    best = None
    for sigma in sorted(counts):
        if best is None or counts[sigma] > counts[best]:
            best = sigma
    return best


def refinement_sigmas(sigma_c: float) -> tuple[float, float]:
    if not sigma_c > 0:
        raise ValueError("sigma_c must be positive")
    r2 = math.sqrt(2.0)
    return sigma_c / r2, sigma_c * r2


def hessian_determinant(img, sigma: float, tiles: TileConfig = TileConfig()) -> Raster:
    """``sigma^4 * (Ixx*Iyy - Ixy^2)`` of the blurred image."""
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    grey = _grey_array(img)
    kern = make_gaussian_kernel(sigma)
    blurred = gauss_y_array(gauss_x_array(grey, kern, tiles), kern, tiles)
    dx = diff_x_array(blurred, tiles)
    dy = diff_y_array(blurred, tiles)
    return Raster(_hessian(dx, dy, sigma, tiles))


def cull_keypoints(space: ScaleSpace, threshold: float) -> list[Keypoint]:
    """Keep corners whose Hessian determinant peaks over scale and exceeds ``threshold``.

    Boundary scales only compare against their single neighbour. Output is
    row-major, then by ascending sigma.
    """
    space = space.sorted()
    n = len(space.levels)
    if n == 0:
        return []
    sigmas = space.sigmas
    det = np.stack([lv.hessian for lv in space.levels])
    corners = np.logical_or.reduce([lv.mask for lv in space.levels])
    peak = det > threshold
    if n > 1:
        peak[1:] &= det[1:] > det[:-1]
        peak[:-1] &= det[:-1] > det[1:]
    keep = peak & corners[None, :, :]
    ys, xs, idx = np.nonzero(np.moveaxis(keep, 0, -1))
    return [Keypoint(int(x), int(y), sigmas[i]) for y, x, i in zip(ys, xs, idx)]


def detect(img, cfg: DetectorConfig | None = None, timer: StageTimer | None = None) -> DetectionResult:
    """Run the full detector; ``timer`` receives ``(stage, sigma)`` keyed timings."""
    cfg = cfg or DetectorConfig()
    timer = timer if timer is not None else StageTimer()
    grey = np.ascontiguousarray(_grey_array(img))

    space = ScaleSpace()

    def evaluate(sigma):
        r = _run_scale(grey, sigma, cfg, timer)
        space.levels.append(ScaleLevel(sigma, r["response"], r["mask"], r["count"], r["hessian"]))

    for sigma in cfg.base_sigmas:
        evaluate(sigma)
    # barrier: counts go back to the host
    sigma_c = characteristic_sigma(space.counts())
    for sigma in refinement_sigmas(sigma_c):
        evaluate(sigma)

    keypoints = run_stage((GATHER, None), cull_keypoints, space, cfg.hessian_threshold, timer=timer)
    return DetectionResult(keypoints, timer, space.sorted(), sigma_c)
