import numpy as np
import pytest

from junctionfield import pnm


def test_binary_round_trip_8_and_16_bit(tmp_path, rng):
    for bits, maxval in ((8, 255), (16, 65535)):
        img = rng.integers(0, maxval + 1, (5, 7)) / maxval
        pnm.write(tmp_path / "a.pgm", img, bits)
        np.testing.assert_array_equal(pnm.read(tmp_path / "a.pgm"), img)


def test_color_round_trip(tmp_path, rng):
    img = rng.integers(0, 256, (4, 3, 3)) / 255
    pnm.write(tmp_path / "c.ppm", img)
    assert (tmp_path / "c.ppm").read_bytes()[:2] == b"P6"
    np.testing.assert_array_equal(pnm.read(tmp_path / "c.ppm"), img)


def test_sixteen_bit_is_big_endian():
    assert pnm.encode(np.array([[258]]), 65535).endswith(b"\x01\x02")


def test_ascii_with_comments():
    vals, maxval = pnm.decode(b"P2\n# comment\n3 1\n# another\n10\n0 5 10\n")
    assert maxval == 10 and vals.tolist() == [[0, 5, 10]]
    vals, _ = pnm.decode(b"P3 1 1 255 1 2 3")
    assert vals.tolist() == [[[1, 2, 3]]]


def test_quantize_clips_and_rounds():
    assert pnm.quantize(np.array([-1.0, 0.5, 2.0]), 255).tolist() == [0, 128, 255]


@pytest.mark.parametrize("buf", [b"P7\n1 1\n255\n\x00", b"P5\n2 2\n255\n\x00", b"P5\n1 1\n", b"P2 1 1 5 9",
                                 b"P5\n0 1\n255\n"])
def test_malformed_input_rejected(buf):
    with pytest.raises(ValueError):
        pnm.decode(buf)


def test_write_rejects_bad_shapes(tmp_path):
    with pytest.raises(ValueError):
        pnm.write(tmp_path / "x.pgm", np.zeros((2, 2, 2)))
    with pytest.raises(ValueError):
        pnm.write(tmp_path / "x.pgm", np.zeros((2, 2)), bits=12)
