"""Analytic textures that can be rendered exactly under any rotation."""

import math

import numpy as np


class Texture:
    def __init__(self, seed=3, n_waves=40, n_blobs=25, extent=60.0):
        rng = np.random.default_rng(seed)
        self.freqs = rng.normal(0, 0.12, (n_waves, 2))
        self.phases = rng.uniform(0, 2 * np.pi, n_waves)
        self.amps = rng.uniform(0.5, 1.0, n_waves)
        self.blobs = rng.uniform(-extent, extent, (n_blobs, 2))
        self.blob_s = rng.uniform(3, 10, n_blobs)
        self.blob_a = rng.uniform(-1, 1, n_blobs)
        self.lo, self.hi = -12.0, 12.0

    def __call__(self, u, v):
        f = np.zeros(np.broadcast(u, v).shape)
        for (fx, fy), p, a in zip(self.freqs, self.phases, self.amps):
            f += a * np.cos(fx * u + fy * v + p)
        for (bx, by), s, a in zip(self.blobs, self.blob_s, self.blob_a):
            f += 3 * a * np.exp(-((u - bx) ** 2 + (v - by) ** 2) / (2 * s * s))
        return f

    def render(self, width, height, theta=0.0, center=(0.0, 0.0), out_range=(0.0, 1.0)):
        """Image whose content is the texture rotated by ``theta`` about ``center`` (pixel coords)."""
        cx, cy = center
        y, x = np.mgrid[0:height, 0:width].astype(np.float64)
        c, s = math.cos(theta), math.sin(theta)
        u = c * (x - cx) + s * (y - cy) + cx - width / 2
        v = -s * (x - cx) + c * (y - cy) + cy - height / 2
        f = (self(u, v) - self.lo) / (self.hi - self.lo)
        lo, hi = out_range
        return np.clip(lo + (hi - lo) * f, lo, hi)
