import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pppcausal import DataFormatError, ObservedSample, ValidationError, load_csv, validate, write_csv


def _write(path, text):
    path.write_text(text)
    return path


def test_load_small_file(tmp_path):
    f = _write(tmp_path / "d.csv", "z,y,x1\n0,1.5,2\n1,2.5,3\n0,0.5,-1\n1,4,0\n")
    s = load_csv(f)
    assert (s.n, s.d) == (4, 1)
    assert s.z.tolist() == [0, 1, 0, 1]
    assert s.labels == ("x1",)
    np.testing.assert_array_equal(s.y, [1.5, 2.5, 0.5, 4.0])


def test_covariate_order_follows_header(tmp_path):
    f = _write(tmp_path / "d.csv", "b,z,a,y\n1,0,2,3\n4,1,5,6\n")
    s = load_csv(f)
    assert s.labels == ("b", "a")
    np.testing.assert_array_equal(s.X, [[1, 2], [4, 5]])


def test_non_binary_z_names_row(tmp_path):
    f = _write(tmp_path / "d.csv", "z,y,x1\n0,1,2\n1,2,3\n2,0,1\n1,4,0\n")
    with pytest.raises(ValidationError, match="row 3"):
        load_csv(f)


@pytest.mark.parametrize("header", ["y,x1", "z,x1"])
def test_missing_required_column(tmp_path, header):
    f = _write(tmp_path / "d.csv", header + "\n0,1\n")
    with pytest.raises(DataFormatError, match="missing required column"):
        load_csv(f)


def test_non_numeric_cell_reports_position(tmp_path):
    f = _write(tmp_path / "d.csv", "z,y,x1\n0,1,2\n1,abc,3\n")
    with pytest.raises(DataFormatError, match=r"row 2, column 2"):
        load_csv(f)


def test_missing_value_rejected(tmp_path):
    f = _write(tmp_path / "d.csv", "z,y,x1\n0,1,\n1,2,3\n")
    with pytest.raises(DataFormatError, match="row 1"):
        load_csv(f)


def test_non_integer_z_rejected(tmp_path):
    f = _write(tmp_path / "d.csv", "z,y\n0.0,1\n1,2\n")
    with pytest.raises(DataFormatError):
        load_csv(f)


def test_validate_cases():
    X = np.zeros((3, 1))
    assert "no control units" in validate(ObservedSample(z=[1, 1, 1], y=[1, 2, 3], X=X))
    assert "non-finite outcome" in validate(ObservedSample(z=[0, 1, 1], y=[1, np.nan, 3], X=X))
    assert validate(ObservedSample(z=[0, 1, 1], y=[1, 2, 3], X=X)) == []


def test_validate_is_pure():
    s = ObservedSample(z=[0, 0, 2], y=[1, np.inf, 3], X=[[np.nan], [0], [1]])
    first = validate(s)
    assert first == validate(s)
    assert len(first) == 4  # non-binary, no treated, non-finite y, non-finite X


def test_sample_is_immutable():
    s = ObservedSample(z=[0, 1], y=[1.0, 2.0], X=[[1.0], [2.0]])
    with pytest.raises(ValueError):
        s.y[0] = 5.0


finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@settings(max_examples=40, deadline=None)
@given(
    n=st.integers(2, 12),
    d=st.integers(0, 3),
    data=st.data(),
)
def test_csv_round_trip(tmp_path_factory, n, d, data):
    z = data.draw(st.lists(st.integers(0, 1), min_size=n, max_size=n))
    y = data.draw(st.lists(finite, min_size=n, max_size=n))
    X = np.array(data.draw(st.lists(st.lists(finite, min_size=d, max_size=d), min_size=n, max_size=n)))
    X = X.reshape(n, d)
    d_ = tmp_path_factory.mktemp("rt")
    s = ObservedSample(z=z, y=y, X=X)
    write_csv(s, d_ / "a.csv")
    back = load_csv(d_ / "a.csv")
    np.testing.assert_array_equal(back.z, s.z)
    np.testing.assert_array_equal(back.y, s.y)
    np.testing.assert_array_equal(back.X, s.X)
    write_csv(back, d_ / "b.csv")
    assert (d_ / "a.csv").read_bytes() == (d_ / "b.csv").read_bytes()


def test_random_file_round_trip_is_bitwise(tmp_path):
    rng = np.random.default_rng(7)
    rows = ["z,y,u,v"]
    for _ in range(50):
        vals = rng.normal(scale=10.0 ** rng.integers(-5, 6), size=3)
        rows.append(",".join([str(rng.integers(0, 2))] + [f"{v:.17g}" for v in vals]))
    text = "\n".join(rows) + "\n"
    f = _write(tmp_path / "in.csv", text)
    write_csv(load_csv(f), tmp_path / "out.csv")
    assert (tmp_path / "out.csv").read_text() == text


def test_column_selection():
    s = ObservedSample(z=[0, 1, 1], y=[1, 2, 3], X=[[1, 10], [2, 20], [3, 30]], labels=("a", "b"))
    np.testing.assert_array_equal(s.columns(["b"]), [[10], [20], [30]])
    np.testing.assert_array_equal(s.columns([1, 0])[:, 0], [10, 20, 30])
    assert s.columns(()).shape == (3, 0)
    assert s.columns(None) is s.X
    with pytest.raises(KeyError):
        s.columns(["nope"])
