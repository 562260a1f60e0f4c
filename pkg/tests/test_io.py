import numpy as np
import pytest

from bmpursuit import io
from bmpursuit.model import BoltzmannParams, SupportPattern

from conftest import banded_w


def test_matrix_roundtrip(tmp_path, rng):
    M = rng.normal(size=(3, 5)) * 1e3
    p = tmp_path / "m.txt"
    io.write_matrix(p, M)
    assert np.array_equal(io.read_matrix(p), M)
    io.write_matrix(p, np.zeros((0, 4)))
    assert io.read_matrix(p).shape == (0, 4)


def test_vector_roundtrip(tmp_path):
    p = tmp_path / "v.txt"
    io.write_vector(p, [1.5, -2.0, 1e-300])
    assert np.array_equal(io.read_vector(p), [1.5, -2.0, 1e-300])
    p.write_text("1 3\n1 2 3\n")
    assert io.read_vector(p).tolist() == [1, 2, 3]
    p.write_text("2 2\n1 2 3 4\n")
    with pytest.raises(io.FormatError):
        io.read_vector(p)


def test_matrix_format_errors(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("2 2\n1 2 3\n")
    with pytest.raises(io.FormatError):
        io.read_matrix(p)
    p.write_text("oops\n")
    with pytest.raises(io.FormatError):
        io.read_matrix(p)


def test_supports_roundtrip(tmp_path):
    p = tmp_path / "s.txt"
    sups = [SupportPattern.from_indices([0, 2], 4), SupportPattern.empty(4)]
    io.write_supports(p, sups)
    assert io.read_supports(p) == sups
    p.write_text("1 0 -1\n")
    with pytest.raises(io.FormatError):
        io.read_supports(p)
    p.write_text("1 -1\n1 -1 -1\n")
    with pytest.raises(io.FormatError):
        io.read_supports(p)
    p.write_text("")
    assert io.read_supports(p) == []


def test_params_roundtrip(tmp_path, rng):
    params = BoltzmannParams(banded_w(6, 2, rng), rng.normal(size=6))
    var = rng.uniform(1, 10, 6)
    io.save_params(tmp_path / "p", params, var, band_order=2, permutation=[5, 4, 3, 2, 1, 0])
    loaded, v, meta = io.load_params(tmp_path / "p")
    assert loaded == params and np.array_equal(v, var)
    assert meta == {"m": 6, "band_order": 2, "permutation": [5, 4, 3, 2, 1, 0]}
    io.save_params(tmp_path / "q", params)
    assert io.load_params(tmp_path / "q")[1] is None


@pytest.mark.parametrize("binary,maxval", [(True, 255), (False, 255), (True, 1000)])
def test_pgm_roundtrip(tmp_path, rng, binary, maxval):
    img = rng.integers(0, maxval + 1, size=(5, 7)).astype(float)
    p = tmp_path / "img.pgm"
    io.write_pgm(p, img, maxval=maxval, binary=binary)
    assert np.array_equal(io.read_pgm(p), img)


def test_pgm_comments_and_errors(tmp_path):
    p = tmp_path / "c.pgm"
    p.write_bytes(b"P2\n# a comment\n2 2\n255\n1 2\n3 4\n")
    assert io.read_pgm(p).tolist() == [[1, 2], [3, 4]]
    p.write_bytes(b"P5\n4 4\n255\n\x00\x01")
    with pytest.raises(io.FormatError):
        io.read_pgm(p)
    p.write_bytes(b"P6\n1 1\n255\n\x00\x00\x00")
    with pytest.raises(io.FormatError):
        io.read_pgm(p)


def test_csv_exact_floats(tmp_path):
    p = tmp_path / "r.csv"
    io.write_csv(p, ("a", "b", "c"), [(0.1, np.float64(1 / 3), np.int64(4)), ("x", 2, "")])
    assert p.read_text() == "a,b,c\n0.1,0.3333333333333333,4\nx,2,\n"
