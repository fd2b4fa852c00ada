"""Raster images, PGM/PPM decoding, desaturation and the keypoint/descriptor text formats."""

from __future__ import annotations

import io
import math
import re
from dataclasses import dataclass, field
from typing import IO, Iterable

import numpy as np

# Rec. 709 luma
LUMA_WEIGHTS = (0.2126, 0.7152, 0.0722)

DESCRIPTOR_BITS = 512


class DecodeError(ValueError):
    """Raised for malformed or truncated image data."""


class UnsupportedFormatError(DecodeError):
    """Raised when the byte stream is not a format we can read."""


@dataclass(frozen=True)
class Raster:
    """Immutable 2-D image, ``data`` shaped (height, width) or (height, width, 3)."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64, copy=True)
        if arr.ndim == 2:
            pass
        elif arr.ndim == 3 and arr.shape[2] in (1, 3):
            if arr.shape[2] == 1:
                arr = arr[:, :, 0].copy()
        else:
            raise ValueError(f"raster must be (H, W) or (H, W, 3), got shape {arr.shape}")
        if arr.shape[0] == 0 or arr.shape[1] == 0:
            raise ValueError("raster must have positive width and height")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.data.ndim == 2 else self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int]:
        return self.height, self.width

    def flat(self) -> np.ndarray:
        """Row-major flat view, length width*height*channels."""
        return self.data.reshape(-1)

    def __eq__(self, other):
        if not isinstance(other, Raster):
            return NotImplemented
        return self.data.shape == other.data.shape and bool(np.array_equal(self.data, other.data))

    __hash__ = None


@dataclass(frozen=True)
class Keypoint:
    x: int
    y: int
    sigma: float


@dataclass(frozen=True)
class DescriptorRecord:
    keypoint: Keypoint
    orientation: float
    bits: np.ndarray = field(compare=False)

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=bool).reshape(-1)
        if bits.size != DESCRIPTOR_BITS:
            raise ValueError(f"descriptor must have {DESCRIPTOR_BITS} bits, got {bits.size}")
        bits = bits.copy()
        bits.flags.writeable = False
        object.__setattr__(self, "bits", bits)

    def __eq__(self, other):
        if not isinstance(other, DescriptorRecord):
            return NotImplemented
        return (
            self.keypoint == other.keypoint
            and self.orientation == other.orientation
            and bool(np.array_equal(self.bits, other.bits))
        )

    __hash__ = None


# ---------------------------------------------------------------------------
# decoding

_PNM_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def _pnm_header(buf: bytes, count: int) -> tuple[list[int], int]:
    # returns `count` integer tokens after the magic and the offset of the raster
    pos = 2
    values = []
    for _ in range(count):
        m = _PNM_TOKEN.match(buf, pos)
        if m is None:
            raise DecodeError("truncated PNM header")
        try:
            values.append(int(m.group(1)))
        except ValueError:
            raise DecodeError(f"bad PNM header token {m.group(1)!r}") from None
        pos = m.end()
    return values, pos


def _decode_pnm(buf: bytes) -> Raster:
    magic = buf[:2]
    channels = 3 if magic in (b"P3", b"P6") else 1
    (width, height, maxval), pos = _pnm_header(buf, 3)
    if width <= 0 or height <= 0:
        raise DecodeError(f"invalid dimensions {width}x{height}")
    if not 0 < maxval < 65536:
        raise DecodeError(f"invalid maxval {maxval}")
    n = width * height * channels

    if magic in (b"P5", b"P6"):
        # exactly one whitespace byte separates header and raster
        if pos >= len(buf) or not buf[pos : pos + 1].isspace():
            raise DecodeError("missing separator after PNM header")
        pos += 1
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        need = n * dtype.itemsize
        if len(buf) - pos < need:
            raise DecodeError(f"truncated raster: need {need} bytes, have {len(buf) - pos}")
        raw = np.frombuffer(buf, dtype=dtype, count=n, offset=pos)
    else:
        tokens = buf[pos:].split()
        if len(tokens) < n:
            raise DecodeError(f"truncated raster: need {n} samples, have {len(tokens)}")
        try:
            raw = np.array([int(t) for t in tokens[:n]])
        except ValueError:
            raise DecodeError("non-integer sample in ASCII PNM") from None

    if raw.max(initial=0) > maxval:
        raise DecodeError("sample exceeds maxval")
    data = raw.astype(np.float64) / maxval
    shape = (height, width, 3) if channels == 3 else (height, width)
    return Raster(data.reshape(shape))


def _decode_pillow(buf: bytes) -> Raster:
    try:
        from PIL import Image, UnidentifiedImageError
    except ImportError:  # pragma: no cover - Pillow is optional
        raise UnsupportedFormatError("PNG/JPEG decoding requires Pillow") from None
    try:
        im = Image.open(io.BytesIO(buf))
        im.load()
    except UnidentifiedImageError:
        raise UnsupportedFormatError("unrecognised image format") from None
    except (OSError, SyntaxError) as exc:
        raise DecodeError(str(exc)) from None
    if im.mode in ("I;16", "I;16B", "I"):
        arr = np.asarray(im, dtype=np.float64) / 65535.0
        return Raster(np.clip(arr, 0.0, 1.0))
    if im.mode not in ("L", "RGB"):
        im = im.convert("RGB" if "A" in im.mode or im.mode in ("P", "CMYK", "YCbCr") else "L")
    return Raster(np.asarray(im, dtype=np.float64) / 255.0)


def decode_image(data: bytes) -> Raster:
    """Decode PGM/PPM (binary or ASCII) bytes, or PNG via Pillow, to a normalised raster."""
    if len(data) < 2:
        raise DecodeError("empty image data")
    if data[:2] in (b"P2", b"P3", b"P5", b"P6"):
        return _decode_pnm(data)
    if data[:8] == b"\x89PNG\r\n\x1a\n" or data[:3] == b"\xff\xd8\xff":
        return _decode_pillow(data)
    raise UnsupportedFormatError(f"unsupported image magic {data[:2]!r}")


def load_image(path) -> Raster:
    with open(path, "rb") as fh:
        return decode_image(fh.read())


def encode_pnm(img: Raster, maxval: int = 255) -> bytes:
    """Binary PGM/PPM dump, used for debugging and the bundled test image."""
    magic = b"P5" if img.channels == 1 else b"P6"
    q = np.rint(np.clip(img.data, 0.0, 1.0) * maxval)
    dtype = ">u2" if maxval > 255 else "u1"
    header = b"%s\n%d %d\n%d\n" % (magic, img.width, img.height, maxval)
    return header + q.astype(dtype).tobytes()


def desaturate(img: Raster) -> Raster:
    """Rec. 709 luma of an RGB raster."""
    if img.channels != 3:
        raise ValueError(f"desaturate expects 3 channels, got {img.channels}")
    r, g, b = LUMA_WEIGHTS
    d = img.data
    grey = r * d[:, :, 0] + g * d[:, :, 1] + b * d[:, :, 2]
    # guard against 1 + 1ulp from rounding
    return Raster(np.clip(grey, 0.0, 1.0))


def to_grey(img: Raster) -> Raster:
    return img if img.channels == 1 else desaturate(img)


# ---------------------------------------------------------------------------
# keypoint / descriptor text formats


def bits_to_hex(bits: np.ndarray) -> str:
    # pair index 0 is the most significant bit of the first hex digit
    return np.packbits(np.asarray(bits, dtype=bool)).tobytes().hex()


def hex_to_bits(text: str) -> np.ndarray:
    if len(text) != DESCRIPTOR_BITS // 4:
        raise ValueError(f"expected {DESCRIPTOR_BITS // 4} hex digits, got {len(text)}")
    if text != text.lower():
        raise ValueError("descriptor hex must be lowercase")
    raw = np.frombuffer(bytes.fromhex(text), dtype=np.uint8)
    return np.unpackbits(raw).astype(bool)


def _fmt(v: float) -> str:
    return repr(float(v))


def format_descriptor_line(rec: DescriptorRecord) -> str:
    kp = rec.keypoint
    return f"{kp.x} {kp.y} {_fmt(kp.sigma)} {_fmt(rec.orientation)} {bits_to_hex(rec.bits)}\n"


def write_descriptor_file(records: Iterable[DescriptorRecord], sink: IO[str]) -> int:
    """Write one ``x y sigma orientation hex`` line per record; returns bytes written."""
    total = 0
    for rec in records:
        line = format_descriptor_line(rec)
        sink.write(line)
        total += len(line.encode("utf-8"))
    return total


def parse_descriptor_file(source: IO[str]) -> list[DescriptorRecord]:
    records = []
    for lineno, line in enumerate(source, 1):
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 5:
            raise ValueError(f"line {lineno}: expected 5 fields, got {len(parts)}")
        try:
            kp = Keypoint(int(parts[0]), int(parts[1]), float(parts[2]))
            records.append(DescriptorRecord(kp, float(parts[3]), hex_to_bits(parts[4])))
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
    return records


def write_keypoint_file(keypoints: Iterable[Keypoint], sink: IO[str]) -> int:
    total = 0
    for kp in keypoints:
        line = f"{kp.x} {kp.y} {_fmt(kp.sigma)}\n"
        sink.write(line)
        total += len(line.encode("utf-8"))
    return total


def parse_keypoint_file(source: IO[str]) -> list[Keypoint]:
    out = []
    for lineno, line in enumerate(source, 1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != 3:
            raise ValueError(f"line {lineno}: expected 'x y sigma'")
        sigma = float(parts[2])
        if not (sigma > 0 and math.isfinite(sigma)):
            raise ValueError(f"line {lineno}: sigma must be positive")
        out.append(Keypoint(int(parts[0]), int(parts[1]), sigma))
    return out
