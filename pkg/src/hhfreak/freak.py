"""FREAK binary descriptor with a fixed, generated retinal pattern.

The pattern is 43 overlapping receptive fields (a centre field plus seven
rings of six), 45 orientation pairs, and 512 comparison pairs in four
coarse-to-fine cascades of 128. It ships as ``data/pattern_v1.txt`` so the
descriptor bits stay stable across releases.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import IO, Sequence

import numpy as np

from .raster import DESCRIPTOR_BITS, DescriptorRecord, Keypoint, Raster, to_grey

N_RINGS = 7
FIELDS_PER_RING = 6
N_FIELDS = N_RINGS * FIELDS_PER_RING + 1
N_ORIENTATION_PAIRS = 45
CASCADE_SIZE = 128
N_CASCADES = DESCRIPTOR_BITS // CASCADE_SIZE

# keypoint sigma at which one pattern unit equals one pixel
SIGMA_REF = 2.0
# generated geometry: outer ring radius, inner ring radius, field radius / ring radius
OUTER_RADIUS = 16.0
INNER_RADIUS = 1.5
FIELD_OVERLAP = 0.6
PATTERN_VERSION = 1
PATTERN_FILE = "pattern_v1.txt"
# receptive fields: strips per disc, and a floor of about one pixel of area
DISC_STRIPS = 7
MIN_FIELD_RADIUS = 0.5
ORIENTATION_COPIES = 6


@dataclass(frozen=True)
class SamplingPattern:
    fields: np.ndarray  # (43, 3): cx, cy, r
    orientation_pairs: np.ndarray  # (45, 2)
    descriptor_pairs: np.ndarray  # (512, 2)

    def __eq__(self, other):
        if not isinstance(other, SamplingPattern):
            return NotImplemented
        return (
            np.array_equal(self.fields, other.fields)
            and np.array_equal(self.orientation_pairs, other.orientation_pairs)
            and np.array_equal(self.descriptor_pairs, other.descriptor_pairs)
        )

    __hash__ = None

    @property
    def centers(self) -> np.ndarray:
        return self.fields[:, :2]

    @property
    def radii(self) -> np.ndarray:
        return self.fields[:, 2]

    def cascades(self) -> list[np.ndarray]:
        return [self.descriptor_pairs[i * CASCADE_SIZE : (i + 1) * CASCADE_SIZE] for i in range(N_CASCADES)]


def _ring_radii() -> np.ndarray:
    q = (INNER_RADIUS / OUTER_RADIUS) ** (1.0 / (N_RINGS - 1))
    return OUTER_RADIUS * q ** np.arange(N_RINGS)


def generate_pattern() -> SamplingPattern:
    """Build the pattern from its generating rules (what ``pattern_v1.txt`` stores)."""
    ring_r = _ring_radii()
    fields = []
    for k, R in enumerate(ring_r):
        offset = math.pi / FIELDS_PER_RING if k % 2 else 0.0
        for i in range(FIELDS_PER_RING):
            a = 2 * math.pi * i / FIELDS_PER_RING + offset
            fields.append((R * math.cos(a), R * math.sin(a), FIELD_OVERLAP * R))
    fields.append((0.0, 0.0, FIELD_OVERLAP * ring_r[-1]))
    fields = np.array(fields)

    # orientation: opposite fields on every ring, plus radial neighbours across the outer rings
    orient = []
    for k in range(N_RINGS):
        for i in range(3):
            orient.append((6 * k + i, 6 * k + i + 3))
    for k in range(4):
        for i in range(FIELDS_PER_RING):
            orient.append((6 * k + i, 6 * (k + 1) + i))
    assert len(orient) == N_ORIENTATION_PAIRS

    return SamplingPattern(fields, np.array(orient, dtype=np.int64), _select_pairs(fields, ring_r))


def _select_pairs(fields: np.ndarray, ring_r: np.ndarray) -> np.ndarray:
    # coarse first: order by mean ring radius of the two fields
    field_ring_r = np.append(np.repeat(ring_r, FIELDS_PER_RING), 0.0)
    pairs = list(itertools.combinations(range(len(fields)), 2))
    pairs.sort(key=lambda p: (-(field_ring_r[p[0]] + field_ring_r[p[1]]) / 2.0, p))

    def separation(p):
        a, b = fields[p[0]], fields[p[1]]
        return math.hypot(a[0] - b[0], a[1] - b[1]) / (a[2] + b[2])

    # drop the most redundant pairs (heavily overlapping fields), loosening until 512 remain
    for min_sep in (0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1, 0.0):
        chosen = [p for p in pairs if separation(p) >= min_sep]
        if len(chosen) >= DESCRIPTOR_BITS:
            return np.array(chosen[:DESCRIPTOR_BITS], dtype=np.int64)
    raise AssertionError("pattern has too few pairs")


def write_pattern(pattern: SamplingPattern, sink: IO[str]) -> None:
    sink.write(f"# hhfreak retinal sampling pattern v{PATTERN_VERSION}\n")
    sink.write(f"fields {len(pattern.fields)}\n")
    for cx, cy, r in pattern.fields:
        sink.write(f"{float(cx)!r} {float(cy)!r} {float(r)!r}\n")
    for name, pairs in (("orientation_pairs", pattern.orientation_pairs),
                        ("descriptor_pairs", pattern.descriptor_pairs)):
        sink.write(f"{name} {len(pairs)}\n")
        for a, b in pairs:
            sink.write(f"{int(a)} {int(b)}\n")


def read_pattern(source: IO[str]) -> SamplingPattern:
    lines = [ln.strip() for ln in source if ln.strip() and not ln.lstrip().startswith("#")]
    pos = 0

    def section(name):
        nonlocal pos
        head = lines[pos].split()
        if len(head) != 2 or head[0] != name:
            raise ValueError(f"expected section {name!r}, got {lines[pos]!r}")
        n = int(head[1])
        body = lines[pos + 1 : pos + 1 + n]
        if len(body) != n:
            raise ValueError(f"section {name!r} truncated")
        pos += n + 1
        return body

    fields = np.array([[float(v) for v in ln.split()] for ln in section("fields")])
    orient = np.array([[int(v) for v in ln.split()] for ln in section("orientation_pairs")], dtype=np.int64)
    desc = np.array([[int(v) for v in ln.split()] for ln in section("descriptor_pairs")], dtype=np.int64)
    if fields.shape != (N_FIELDS, 3):
        raise ValueError(f"pattern must have {N_FIELDS} fields")
    if orient.shape != (N_ORIENTATION_PAIRS, 2) or desc.shape != (DESCRIPTOR_BITS, 2):
        raise ValueError("pattern pair counts are wrong")
    return SamplingPattern(fields, orient, desc)


@lru_cache(maxsize=1)
def _bundled_pattern() -> SamplingPattern:
    with resources.files("hhfreak.data").joinpath(PATTERN_FILE).open("r", encoding="utf-8") as fh:
        return read_pattern(fh)


def build_pattern() -> SamplingPattern:
    """The hard-coded pattern shipped with the package."""
    return _bundled_pattern()


# ---------------------------------------------------------------------------
# sampling


class IntegralImage:
    """Summed-area table with exact area sums over real-valued boxes.

    Pixel (i, j) covers [i-0.5, i+0.5] x [j-0.5, j+0.5]; bilinear interpolation
    of the table is the exact integral of the piecewise-constant image.
    """

    def __init__(self, img):
        arr = to_grey(img).data if isinstance(img, Raster) else np.asarray(img, dtype=np.float64)
        self.height, self.width = arr.shape
        # offset by one pixel value: flat regions then sum to exactly zero
        self.offset = float(arr[0, 0])
        table = np.zeros((self.height + 1, self.width + 1))
        table[1:, 1:] = (arr - self.offset).cumsum(0).cumsum(1)
        self.table = table

    def _F(self, u, v):
        # u in [0, W], v in [0, H]
        W, H = self.width, self.height
        i = np.minimum(np.floor(u).astype(np.int64), W - 1)
        j = np.minimum(np.floor(v).astype(np.int64), H - 1)
        fu = u - i
        fv = v - j
        t = self.table
        top = t[j, i] * (1 - fu) + t[j, i + 1] * fu
        bot = t[j + 1, i] * (1 - fu) + t[j + 1, i + 1] * fu
        return top * (1 - fv) + bot * fv

    def box_mean(self, x, y, half):
        """Mean over squares centred at pixel coords (x, y) with half-side ``half``; clipped to the image."""
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        half = np.asarray(half, dtype=np.float64)
        s, area = self.rect_sum(x - half, x + half, y - half, y + half)
        return self.offset + s / area

    def rect_sum(self, x0, x1, y0, y1):
        """(offset-relative sum, clipped area) over rectangles in pixel coords."""
        u0 = np.clip(x0 + 0.5, 0.0, self.width)
        u1 = np.clip(x1 + 0.5, 0.0, self.width)
        v0 = np.clip(y0 + 0.5, 0.0, self.height)
        v1 = np.clip(y1 + 0.5, 0.0, self.height)
        s = self._F(u1, v1) - self._F(u0, v1) - self._F(u1, v0) + self._F(u0, v0)
        return s, (u1 - u0) * (v1 - v0)

    def disc_mean(self, x, y, r, strips: int = DISC_STRIPS):
        """Mean over discs of radius ``r``, tiled by horizontal strips of the exact band area."""
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        r = np.asarray(r, dtype=np.float64)
        edges = np.linspace(-1.0, 1.0, strips + 1)
        # area of the unit disc below height t, up to a constant
        cum = edges * np.sqrt(1.0 - edges**2) + np.arcsin(edges)
        total = 0.0
        area = 0.0
        for k in range(strips):
            a, b = edges[k] * r, edges[k + 1] * r
            half_w = 0.5 * (cum[k + 1] - cum[k]) / (edges[k + 1] - edges[k]) * r
            s, ar = self.rect_sum(x - half_w, x + half_w, y + a, y + b)
            total = total + s
            area = area + ar
        return self.offset + total / area


def _field_geometry(kps_xy, kps_sigma, fields, angles, width, height):
    # (K, F) centres and radii for every keypoint/field
    scale = (kps_sigma / SIGMA_REF)[:, None]
    c, s = np.cos(angles)[:, None], np.sin(angles)[:, None]
    fx, fy = fields[None, :, 0], fields[None, :, 1]
    x = kps_xy[:, 0:1] + (c * fx - s * fy) * scale
    y = kps_xy[:, 1:2] + (s * fx + c * fy) * scale
    x = np.clip(x, 0.0, width - 1.0)
    y = np.clip(y, 0.0, height - 1.0)
    r = np.maximum(MIN_FIELD_RADIUS, fields[None, :, 2] * scale)
    return x, y, r


def _sample_all(ii: IntegralImage, kps_xy, kps_sigma, fields, angles):
    x, y, r = _field_geometry(kps_xy, kps_sigma, fields, angles, ii.width, ii.height)
    return ii.disc_mean(x, y, r)


def _kp_arrays(kps: Sequence[Keypoint]):
    xy = np.array([[kp.x, kp.y] for kp in kps], dtype=np.float64).reshape(-1, 2)
    sig = np.array([kp.sigma for kp in kps], dtype=np.float64)
    return xy, sig


def sample_field(img, kp: Keypoint, field, angle: float = 0.0) -> float:
    """Mean intensity of one receptive field ``(cx, cy, r)`` rotated by ``angle``."""
    ii = img if isinstance(img, IntegralImage) else IntegralImage(img)
    xy, sig = _kp_arrays([kp])
    f = np.asarray(field, dtype=np.float64).reshape(1, 3)
    return float(_sample_all(ii, xy, sig, f, np.array([float(angle)]))[0, 0])


def _orientations(ii: IntegralImage, kps_xy, kps_sigma, pattern: SamplingPattern) -> np.ndarray:
    """Mean-gradient direction, averaged over copies of the pattern rotated across one 60 degree period.

    A single 6-fold pattern is only equivariant under 60 degree turns; the
    rotated copies raise the symmetry to ``6 * ORIENTATION_COPIES``-fold.
    """
    a, b = pattern.orientation_pairs[:, 0], pattern.orientation_pairs[:, 1]
    d = pattern.centers[a] - pattern.centers[b]
    unit = d / np.linalg.norm(d, axis=1, keepdims=True)
    n = len(kps_xy)
    ox = np.zeros(n)
    oy = np.zeros(n)
    scale = np.zeros(n)
    # fixed accumulation order keeps batched and single results identical
    for m in range(ORIENTATION_COPIES):
        phi = m * (math.pi / 3) / ORIENTATION_COPIES
        samples = _sample_all(ii, kps_xy, kps_sigma, pattern.fields, np.full(n, phi))
        gx = np.zeros(n)
        gy = np.zeros(n)
        for p in range(len(a)):
            diff = samples[:, a[p]] - samples[:, b[p]]
            gx += diff * unit[p, 0]
            gy += diff * unit[p, 1]
            scale += np.abs(diff) + 1e-3 * (np.abs(samples[:, a[p]]) + np.abs(samples[:, b[p]]))
        # back to image axes
        c, s = math.cos(phi), math.sin(phi)
        ox += c * gx - s * gy
        oy += s * gx + c * gy
    # symmetric or flat neighbourhoods cancel to rounding noise: no orientation
    mag = np.hypot(ox, oy)
    ang = np.arctan2(oy, ox)
    ang = np.where(mag <= 1e-9 * scale, 0.0, ang)
    # map into [-pi, pi)
    return np.where(ang >= math.pi, ang - 2 * math.pi, ang)


def estimate_orientation(img, kp: Keypoint, pattern: SamplingPattern | None = None) -> float:
    pattern = pattern or build_pattern()
    ii = img if isinstance(img, IntegralImage) else IntegralImage(img)
    xy, sig = _kp_arrays([kp])
    return float(_orientations(ii, xy, sig, pattern)[0])


def describe_many(img, keypoints: Sequence[Keypoint], pattern: SamplingPattern | None = None) -> list[DescriptorRecord]:
    """Describe every keypoint; output order follows ``keypoints``."""
    pattern = pattern or build_pattern()
    if not keypoints:
        return []
    ii = img if isinstance(img, IntegralImage) else IntegralImage(img)
    xy, sig = _kp_arrays(keypoints)
    if np.any(xy[:, 0] < 0) or np.any(xy[:, 0] >= ii.width) or np.any(xy[:, 1] < 0) or np.any(xy[:, 1] >= ii.height):
        raise ValueError("keypoint outside image")
    angles = _orientations(ii, xy, sig, pattern)
    rotated = _sample_all(ii, xy, sig, pattern.fields, angles)
    a, b = pattern.descriptor_pairs[:, 0], pattern.descriptor_pairs[:, 1]
    bits = rotated[:, a] > rotated[:, b]
    return [DescriptorRecord(kp, float(ang), row) for kp, ang, row in zip(keypoints, angles, bits)]


def describe(img, kp: Keypoint, pattern: SamplingPattern | None = None) -> DescriptorRecord:
    return describe_many(img, [kp], pattern)[0]


# ---------------------------------------------------------------------------
# matching


def _bits(d) -> np.ndarray:
    bits = d.bits if isinstance(d, DescriptorRecord) else np.asarray(d, dtype=bool)
    return bits.reshape(-1)


def _words(bits: np.ndarray) -> np.ndarray:
    return np.packbits(bits).view(">u8")


def _popcount(words: np.ndarray) -> int:
    return sum(int(w).bit_count() for w in words)


def hamming_distance(a, b) -> int:
    """``popcount(a XOR b)`` over 512-bit descriptors."""
    ba, bb = _bits(a), _bits(b)
    if ba.size != DESCRIPTOR_BITS or bb.size != DESCRIPTOR_BITS:
        raise ValueError(f"descriptors must have {DESCRIPTOR_BITS} bits, got {ba.size} and {bb.size}")
    return _popcount(_words(ba) ^ _words(bb))


@dataclass(frozen=True)
class MatchPolicy:
    cascade_reject_thresholds: tuple[int, int, int, int] = (24, 48, 72, 96)

    def __post_init__(self):
        t = tuple(int(v) for v in self.cascade_reject_thresholds)
        if len(t) != N_CASCADES:
            raise ValueError(f"need {N_CASCADES} thresholds")
        if any(b < a for a, b in zip(t, t[1:])):
            raise ValueError("thresholds must be non-decreasing")
        object.__setattr__(self, "cascade_reject_thresholds", t)


def cascade_match(a, b, policy: MatchPolicy = MatchPolicy()) -> tuple[bool, int]:
    """Compare cascade by cascade, stopping once the running distance exceeds the threshold."""
    ba, bb = _bits(a), _bits(b)
    if ba.size != DESCRIPTOR_BITS or bb.size != DESCRIPTOR_BITS:
        raise ValueError(f"descriptors must have {DESCRIPTOR_BITS} bits")
    x = _words(ba) ^ _words(bb)
    per = CASCADE_SIZE // 64
    dist = 0
    for k, limit in enumerate(policy.cascade_reject_thresholds):
        dist += _popcount(x[k * per : (k + 1) * per])
        if dist > limit:
            return False, CASCADE_SIZE * (k + 1)
    return True, DESCRIPTOR_BITS


@dataclass(frozen=True)
class Match:
    query: int
    train: int
    distance: int


def match_descriptors(queries: Sequence, train: Sequence, policy: MatchPolicy = MatchPolicy()) -> list[Match]:
    """Nearest accepted neighbour in ``train`` for each query (ties -> lowest index)."""
    out = []
    for qi, q in enumerate(queries):
        best = None
        for ti, t in enumerate(train):
            ok, _ = cascade_match(q, t, policy)
            if not ok:
                continue
            d = hamming_distance(q, t)
            if best is None or d < best.distance:
                best = Match(qi, ti, d)
        if best is not None:
            out.append(best)
    return out
