import numpy as np
import pytest

from neuroloom.io import (fnv1a64, fnv1a64_hex, read_csv, read_f64bin, read_matrix,
                          write_csv, write_f64bin, write_matrix, write_timeseries)
from neuroloom.observables import TimeSeries


@pytest.mark.parametrize("data,expected", [(b"", 0xCBF29CE484222325), (b"a", 0xAF63DC4C8601EC8C),
                                           (b"foobar", 0x85944171F73967E8)])
def test_fnv1a64_reference_vectors(data, expected):
    assert fnv1a64(data) == expected


def test_checksum_is_over_little_endian_row_major_f64():
    m = np.array([[1.0, 2.0], [3.0, -0.5]])
    assert fnv1a64_hex(m) == format(fnv1a64(m.astype("<f8").tobytes()), "016x")
    assert fnv1a64_hex(np.asfortranarray(m)) == fnv1a64_hex(m)


def _ts(n_samples=5):
    g = np.random.default_rng(0)
    return TimeSeries(0.3, 0.3, ["a", "b"], g.normal(size=(2, n_samples)))


def test_csv_round_trip_is_exact(tmp_path):
    ts = _ts()
    write_csv(ts, tmp_path / "x.csv")
    assert (tmp_path / "x.csv").read_text().splitlines()[0] == "time,a,b"
    back = read_csv(tmp_path / "x.csv")
    assert np.array_equal(back.data, ts.data) and back.labels == ["a", "b"]
    assert back.dt_out == pytest.approx(0.3) and back.t0 == pytest.approx(0.3)


def test_f64bin_round_trip(tmp_path):
    ts = _ts(7)
    write_f64bin(ts, tmp_path / "x.f64bin")
    back = read_f64bin(tmp_path / "x.f64bin")
    assert np.array_equal(back.data, ts.data)
    assert (back.t0, back.dt_out) == (ts.t0, ts.dt_out)
    blob = (tmp_path / "x.f64bin").read_bytes()
    assert len(blob) == 4 + 4 + 4 + 8 + 8 + 8 + 8 * 14
    # samples are time-major: sample 0 of every channel first
    assert np.frombuffer(blob, "<f8", 2, 36).tolist() == ts.data[:, 0].tolist()


def test_write_timeseries_formats(tmp_path):
    ts = _ts()
    assert sorted(p.name for p in write_timeseries(ts, tmp_path / "m", "csv")) == ["m.csv", "m.dat"]
    assert (tmp_path / "m.dat").read_text().startswith("# time")
    assert [p.name for p in write_timeseries(ts, tmp_path / "m", "f64bin")] == ["m.f64bin"]


def test_matrix_round_trip(tmp_path):
    m = np.random.default_rng(1).normal(size=(3, 3))
    write_matrix(m, tmp_path / "m.txt")
    assert np.array_equal(read_matrix(tmp_path / "m.txt"), m)
