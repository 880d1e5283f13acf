import numpy as np
import pytest

from mmsehbf.channel import make_rng, random_channel
from mmsehbf.matrix_io import format_matrices, parse_matrices, read_matrices, write_matrices


def test_round_trip_is_lossless(tmp_path):
    h = random_channel(make_rng(4), 6, 3, 5).per_subcarrier
    path = tmp_path / "h.csv"
    write_matrices(path, h)
    back = read_matrices(path)
    assert back.tobytes() == h.tobytes()
    assert path.read_text().splitlines()[:2] == ["nr,nt,nsub", "3,6,5"]


def test_single_matrix_promoted():
    m = np.array([[1 + 2j, -3.5j]])
    text = format_matrices(m)
    assert text.splitlines()[2] == "1.0,2.0,-0.0,-3.5"
    np.testing.assert_array_equal(parse_matrices(text)[0], m)


@pytest.mark.parametrize("text", [
    "",
    "rows,cols\n1,1,1\n0,0\n",
    "nr,nt,nsub\n1,1\n0,0\n",
    "nr,nt,nsub\n2,1,1\n0,0\n",
    "nr,nt,nsub\n1,1,1\n0,0,0,0\n",
])
def test_malformed_inputs_rejected(text):
    with pytest.raises(ValueError):
        parse_matrices(text)
