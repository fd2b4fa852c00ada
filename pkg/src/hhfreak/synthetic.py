"""Deterministic synthetic inputs: the bundled poster test image and telemetry traces.

Everything here is generated, not measured. The traces only mimic the shapes
seen on phone sensor logs (idle, warm-up ramp, plateau, frequency step).
"""

from __future__ import annotations

from importlib import resources

import numpy as np

from .raster import Raster

TEST_IMAGE_SIZE = (800, 600)


def _smooth_noise(rng, h, w, cell):
    # bilinear-upsampled value noise
    gh, gw = h // cell + 2, w // cell + 2
    grid = rng.random((gh, gw))
    ys = np.arange(h) / cell
    xs = np.arange(w) / cell
    y0 = ys.astype(int)
    x0 = xs.astype(int)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    a = grid[y0][:, x0]
    b = grid[y0][:, x0 + 1]
    c = grid[y0 + 1][:, x0]
    d = grid[y0 + 1][:, x0 + 1]
    return (a * (1 - fx) + b * fx) * (1 - fy) + (c * (1 - fx) + d * fx) * fy


def poster_image(width: int = 800, height: int = 600, seed: int = 2016) -> Raster:
    """An RGB wall of posters: flat panels, title bars, text-like strokes, discs."""
    rng = np.random.default_rng(seed)
    img = np.empty((height, width, 3))
    wall = 0.55 + 0.08 * _smooth_noise(rng, height, width, 64)
    img[:] = wall[:, :, None] * np.array([0.92, 0.9, 0.85])
    yy, xx = np.mgrid[0:height, 0:width]

    cols, rows = 4, 2
    pw, ph = width // cols, height // rows
    for r in range(rows):
        for c in range(cols):
            x0 = c * pw + int(rng.integers(10, 30))
            y0 = r * ph + int(rng.integers(10, 30))
            x1 = (c + 1) * pw - int(rng.integers(10, 30))
            y1 = (r + 1) * ph - int(rng.integers(10, 30))
            base = rng.random(3) * 0.7 + 0.15
            panel = base[None, None, :] * (0.85 + 0.15 * _smooth_noise(rng, y1 - y0, x1 - x0, 24))[:, :, None]
            img[y0:y1, x0:x1] = panel
            # title bar
            ty = y0 + int(0.08 * (y1 - y0))
            img[ty : ty + 18, x0 + 12 : x1 - 12] = 1.0 - base
            # image block
            bx0, by0 = x0 + 20, ty + 34
            bx1, by1 = x1 - 20, by0 + int(0.4 * (y1 - y0))
            img[by0:by1, bx0:bx1] = _smooth_noise(rng, by1 - by0, bx1 - bx0, 12)[:, :, None] * rng.random(3)
            # disc
            cx, cy = (bx0 + bx1) / 2, (by0 + by1) / 2
            rad = 0.25 * min(bx1 - bx0, by1 - by0)
            disc = (xx - cx) ** 2 + (yy - cy) ** 2 < rad**2
            img[disc] = rng.random(3)
            # lines of "text"
            ly = by1 + 12
            while ly + 6 < y1 - 10:
                lx = x0 + 16
                while lx < x1 - 24:
                    wlen = int(rng.integers(6, 22))
                    img[ly : ly + 6, lx : min(lx + wlen, x1 - 16)] = 0.08
                    lx += wlen + int(rng.integers(4, 8))
                ly += 12
    return Raster(np.clip(img, 0.0, 1.0))


def white_square(size: int = 64, lo: int = 16, hi: int = 48) -> Raster:
    """Black image with a white square covering rows/cols ``lo:hi``."""
    img = np.zeros((size, size))
    img[lo:hi, lo:hi] = 1.0
    return Raster(img)


# ---------------------------------------------------------------------------
# telemetry traces


def _rows(channel, kind, t, values):
    return [(float(ti), channel, kind, float(v)) for ti, v in zip(t, values)]


def trace_step_rows(duration: float = 3500.0, dt: float = 1.0, seed: int = 7) -> list[tuple]:
    """Warm-up ramp that settles at 1800 s, a -1 C drop at 1805 s and a -100 MHz CPU step at 1800 s."""
    rng = np.random.default_rng(seed)
    t = np.arange(0.0, duration + dt / 2, dt)
    rows = []

    temp = np.where(t < 1800, 38.0 + 12.0 * t / 1800.0, 50.0)
    temp = np.where(t >= 1805, 49.0, temp)
    temp += rng.uniform(-0.1, 0.1, t.size)
    rows += _rows("tz0", "temperature", t, temp)

    for ch in ("cpu3", "cpu4"):
        f = np.where(t < 1800, 700.0, 600.0) + rng.uniform(-5, 5, t.size)
        rows += _rows(ch, "frequency", t, f)
    gpu = np.full(t.size, 624.0)
    rows += _rows("gpu", "frequency", t, gpu)
    return rows


def trace_warmup_rows(duration: float = 3500.0, dt: float = 2.0, seed: int = 11) -> list[tuple]:
    """Idle phone warming from 38 C to a 50 C plateau; CPU and GPU clocks steady."""
    rng = np.random.default_rng(seed)
    t = np.arange(0.0, duration + dt / 2, dt)
    temp = 50.0 - 12.0 * np.exp(-t / 400.0) + rng.uniform(-0.15, 0.15, t.size)
    rows = _rows("gpu_temp", "temperature", t, temp)
    rows += _rows("cpu1", "frequency", t, np.full(t.size, 2457.0))
    rows += _rows("gpu", "frequency", t, np.where((t % 300) < 6, 450.0, 578.0))
    return rows


def trace_csv(rows) -> str:
    lines = ["t,channel,kind,value"]
    lines += [f"{t:g},{ch},{kind},{v:.3f}" for t, ch, kind, v in rows]
    return "\n".join(lines) + "\n"


BUNDLED_TRACES = {"step": "trace_step.csv", "warmup": "trace_warmup.csv"}


def bundled_trace_text(name: str = "step") -> str:
    """CSV text of a trace shipped with the package (regenerable with ``make-data``)."""
    return resources.files("hhfreak.data").joinpath(BUNDLED_TRACES[name]).read_text(encoding="utf-8")
