import io

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from hhfreak.raster import (
    DecodeError,
    DescriptorRecord,
    Keypoint,
    Raster,
    UnsupportedFormatError,
    bits_to_hex,
    decode_image,
    desaturate,
    encode_pnm,
    hex_to_bits,
    parse_descriptor_file,
    parse_keypoint_file,
    write_descriptor_file,
    write_keypoint_file,
)


def pgm(w, h, pixels, maxval=255):
    return b"P5\n%d %d\n%d\n" % (w, h, maxval) + bytes(pixels)


def test_decode_pgm_normalises():
    img = decode_image(pgm(2, 2, [0, 128, 255, 64]))
    assert (img.width, img.height, img.channels) == (2, 2, 1)
    np.testing.assert_array_equal(img.flat(), [0.0, 128 / 255, 1.0, 64 / 255])


def test_decode_ppm_white_pixel():
    img = decode_image(b"P6\n1 1\n255\n\xff\xff\xff")
    assert img.channels == 3
    assert img.flat().tolist() == [1.0, 1.0, 1.0]


def test_decode_header_comments_and_16bit():
    data = b"P5\n# a comment\n2 1\n# another\n65535\n" + np.array([0, 65535], ">u2").tobytes()
    assert decode_image(data).flat().tolist() == [0.0, 1.0]


def test_decode_ascii_variants():
    img = decode_image(b"P2\n2 1\n10\n5 10\n")
    assert img.flat().tolist() == [0.5, 1.0]


@pytest.mark.parametrize(
    "data",
    [
        pgm(2, 2, [0, 1, 2]),  # truncated raster
        b"P5\n2 2\n",  # truncated header
        b"P5\n2 x\n255\n....",
        b"P5\n0 2\n255\n",
        b"P5\n1 1\n0\n\x00",
        b"P2\n2 1\n10\n5 11\n",  # exceeds maxval
    ],
)
def test_decode_malformed(data):
    with pytest.raises(DecodeError):
        decode_image(data)


def test_decode_unsupported():
    with pytest.raises(UnsupportedFormatError):
        decode_image(b"GIF89a....")


def test_decode_png_via_pillow(tmp_path):
    Image = pytest.importorskip("PIL.Image")
    arr = np.array([[0, 255], [51, 102]], dtype=np.uint8)
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="PNG")
    np.testing.assert_allclose(decode_image(buf.getvalue()).data, arr / 255.0)


def test_pnm_round_trip():
    rng = np.random.default_rng(0)
    q = rng.integers(0, 256, (5, 7, 3))
    img = Raster(q / 255.0)
    assert decode_image(encode_pnm(img)) == img


@given(arrays(np.uint8, st.tuples(st.integers(1, 6), st.integers(1, 6))))
def test_decoded_values_in_unit_interval(arr):
    img = decode_image(pgm(arr.shape[1], arr.shape[0], arr.tobytes()))
    assert img.data.min() >= 0.0 and img.data.max() <= 1.0


def test_raster_is_immutable():
    img = Raster(np.zeros((2, 3)))
    with pytest.raises(ValueError):
        img.data[0, 0] = 1.0
    assert len(img.flat()) == img.width * img.height * img.channels


def test_desaturate_examples():
    ones = Raster(np.ones((3, 4, 3)))
    zeros = Raster(np.zeros((3, 4, 3)))
    red = Raster(np.array([[[1.0, 0.0, 0.0]]]))
    assert np.all(desaturate(ones).data == 1.0)
    assert np.all(desaturate(zeros).data == 0.0)
    assert desaturate(red).data[0, 0] == pytest.approx(0.2126, abs=1e-15)
    assert desaturate(ones).channels == 1


def test_desaturate_rejects_grey():
    with pytest.raises(ValueError):
        desaturate(Raster(np.zeros((2, 2))))


@given(arrays(np.float64, (4, 5), elements=st.floats(0, 1)))
def test_desaturate_identity_on_grey(grey):
    rgb = Raster(np.repeat(grey[:, :, None], 3, axis=2))
    np.testing.assert_allclose(desaturate(rgb).data, grey, atol=1e-9, rtol=0)


def _record(rng, x=3, y=4, sigma=2.0, angle=0.5):
    return DescriptorRecord(Keypoint(x, y, sigma), angle, rng.random(512) < 0.5)


def test_descriptor_file_empty():
    buf = io.StringIO()
    assert write_descriptor_file([], buf) == 0
    assert buf.getvalue() == ""


def test_descriptor_file_zero_bits():
    buf = io.StringIO()
    write_descriptor_file([DescriptorRecord(Keypoint(1, 2, 0.7), 0.0, np.zeros(512, bool))], buf)
    line = buf.getvalue()
    assert line.endswith(" " + "0" * 128 + "\n")
    assert line.startswith("1 2 0.7 0.0 ")


def test_descriptor_msb_is_pair_zero():
    bits = np.zeros(512, bool)
    bits[0] = True
    assert bits_to_hex(bits)[0] == "8"
    np.testing.assert_array_equal(hex_to_bits(bits_to_hex(bits)), bits)


def test_descriptor_file_round_trip(rng):
    recs = [
        _record(rng, int(rng.integers(0, 800)), int(rng.integers(0, 600)),
                float(rng.choice([0.7, 2 ** 0.5, 24.0])), float(rng.uniform(-np.pi, np.pi)))
        for _ in range(50)
    ]
    buf = io.StringIO()
    n = write_descriptor_file(recs, buf)
    assert n == len(buf.getvalue().encode())
    assert buf.getvalue().count("\n") == 50
    buf.seek(0)
    assert parse_descriptor_file(buf) == recs


def test_descriptor_record_requires_512_bits():
    with pytest.raises(ValueError):
        DescriptorRecord(Keypoint(0, 0, 1.0), 0.0, np.zeros(511, bool))


def test_parse_descriptor_rejects_bad_lines():
    with pytest.raises(ValueError, match="line 1"):
        parse_descriptor_file(io.StringIO("1 2 3\n"))
    with pytest.raises(ValueError):
        parse_descriptor_file(io.StringIO("1 2 0.7 0.0 " + "A" * 128 + "\n"))


def test_keypoint_file_round_trip():
    kps = [Keypoint(1, 2, 0.7), Keypoint(799, 599, 24.0 * 2 ** 0.5)]
    buf = io.StringIO()
    write_keypoint_file(kps, buf)
    buf.seek(0)
    assert parse_keypoint_file(buf) == kps
