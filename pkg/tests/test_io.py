import numpy as np
import pytest

from sbattn.io import MAGIC, MatrixFormatError, detect_format, load_matrix, save_matrix


@pytest.mark.parametrize("fmt", ["text", "binary"])
def test_roundtrip_bit_exact(tmp_path, rng, fmt):
    M = rng.normal(size=(5, 7)) * 10.0 ** rng.integers(-300, 300, (5, 7))
    p = tmp_path / "m"
    save_matrix(p, M, fmt)
    assert detect_format(p) == fmt
    assert np.array_equal(load_matrix(p), M)


def test_text_layout(tmp_path):
    p = tmp_path / "m.txt"
    save_matrix(p, np.array([[1.0, 0.1], [-2.5, 3e-20]]))
    assert p.read_text() == "DMAT 2 2\n1.0 0.1\n-2.5 3e-20\n"


def test_binary_layout(tmp_path):
    p = tmp_path / "m.bin"
    save_matrix(p, np.array([[1.0, 2.0]]), "binary")
    raw = p.read_bytes()
    assert raw[:6] == MAGIC and len(raw) == 6 + 16 + 16


def test_empty(tmp_path):
    for fmt in ("text", "binary"):
        p = tmp_path / fmt
        save_matrix(p, np.zeros((0, 3)), fmt)
        assert load_matrix(p).shape == (0, 3)


def test_text_errors(tmp_path):
    p = tmp_path / "bad"
    p.write_text("DMAT 2 2\n1 2\n3\n")
    with pytest.raises(MatrixFormatError, match="line 3"):
        load_matrix(p)
    p.write_text("DMAT 2 2\n1 2\n")
    with pytest.raises(MatrixFormatError, match="row 1"):
        load_matrix(p)
    p.write_text("DMAT 1 2\n1 nan\n")
    with pytest.raises(MatrixFormatError, match="NaN"):
        load_matrix(p)
    p.write_text("MAT 1 1\n1\n")
    with pytest.raises(MatrixFormatError, match="line 1"):
        load_matrix(p)
    p.write_text("DMAT 1 1\n1\n2\n")
    with pytest.raises(MatrixFormatError, match="unexpected data"):
        load_matrix(p)


def test_binary_errors(tmp_path):
    p = tmp_path / "m.bin"
    save_matrix(p, np.ones((3, 3)), "binary")
    raw = p.read_bytes()
    p.write_bytes(raw[:-8])
    with pytest.raises(MatrixFormatError, match="truncated"):
        load_matrix(p)
    p.write_bytes(raw + b"x")
    with pytest.raises(MatrixFormatError, match="trailing"):
        load_matrix(p)
    bad = bytearray(raw)
    bad[22:30] = np.array([np.inf]).tobytes()
    p.write_bytes(bytes(bad))
    with pytest.raises(MatrixFormatError, match="offset 22"):
        load_matrix(p)


def test_refuses_nonfinite(tmp_path):
    with pytest.raises(ValueError):
        save_matrix(tmp_path / "x", np.array([[np.nan]]))
