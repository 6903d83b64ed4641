"""Output file formats: CSV, gnuplot-ready .dat, f64bin, and the FNV-1a checksum."""
import csv
import io as _io
import struct
from pathlib import Path

import numpy as np

from .errors import NeuroloomError

F64BIN_MAGIC = b"NLTS"
F64BIN_VERSION = 1
_F64BIN_HEADER = struct.Struct("<4sIIQdd")

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def fnv1a64(data):
    """64-bit FNV-1a over a bytes-like object."""
    h = _FNV_OFFSET
    for byte in bytes(data):
        h ^= byte
        h = (h * _FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


def fnv1a64_hex(matrix):
    """Checksum of a real matrix as its row-major little-endian f64 byte stream."""
    payload = np.ascontiguousarray(matrix, dtype="<f8").tobytes()
    return f"{fnv1a64(payload):016x}"


def _fmt(v):
    return repr(float(v))


def write_csv(ts, path):
    """Header ``time,<label...>``, then one row per sample."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time", *ts.labels])
        for j, t in enumerate(ts.times()):
            w.writerow([_fmt(t), *(_fmt(v) for v in ts.data[:, j])])


def read_csv(path):
    from .observables import TimeSeries
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:1] != ["time"]:
        raise NeuroloomError(f"{path}: missing 'time' header")
    labels = rows[0][1:]
    body = np.array([[float(x) for x in r] for r in rows[1:] if r], dtype=np.float64)
    if body.size == 0:
        return TimeSeries(0.0, 1.0, labels, np.zeros((len(labels), 0)))
    times = body[:, 0]
    dt_out = float(times[1] - times[0]) if len(times) > 1 else 1.0
    return TimeSeries(float(times[0]), dt_out, labels, body[:, 1:].T.copy())


def write_dat(ts, path):
    """Whitespace-separated columns with a ``#`` header (gnuplot ``plot using 1:2``)."""
    with open(path, "w") as fh:
        fh.write("# time " + " ".join(ts.labels) + "\n")
        for j, t in enumerate(ts.times()):
            fh.write(" ".join([_fmt(t), *(_fmt(v) for v in ts.data[:, j])]) + "\n")


def write_f64bin(ts, path):
    """Header (magic, version, n_channels, n_samples, t0, dt_out) then samples.

    Samples are stored time-major: for each sample, all channels in order.
    """
    data = np.asarray(ts.data, dtype="<f8")
    nch, ns = data.shape
    with open(path, "wb") as fh:
        fh.write(_F64BIN_HEADER.pack(F64BIN_MAGIC, F64BIN_VERSION, nch, ns, ts.t0, ts.dt_out))
        fh.write(np.ascontiguousarray(data.T).tobytes())


def read_f64bin(path, labels=None):
    from .observables import TimeSeries
    raw = Path(path).read_bytes()
    if len(raw) < _F64BIN_HEADER.size:
        raise NeuroloomError(f"{path}: truncated f64bin header")
    magic, version, nch, ns, t0, dt_out = _F64BIN_HEADER.unpack_from(raw)
    if magic != F64BIN_MAGIC or version != F64BIN_VERSION:
        raise NeuroloomError(f"{path}: not an f64bin v1 file")
    body = np.frombuffer(raw, dtype="<f8", offset=_F64BIN_HEADER.size)
    if body.size != nch * ns:
        raise NeuroloomError(f"{path}: expected {nch * ns} values, found {body.size}")
    data = body.reshape(ns, nch).T.astype(np.float64)
    labels = labels or [f"ch{i}" for i in range(nch)]
    return TimeSeries(t0, dt_out, list(labels), data)


def write_timeseries(ts, path_stem, fmt="csv"):
    """Write ``ts``; csv also emits a gnuplot .dat twin. Returns written paths."""
    stem = Path(path_stem)
    if fmt == "csv":
        out = [stem.with_suffix(".csv"), stem.with_suffix(".dat")]
        write_csv(ts, out[0])
        write_dat(ts, out[1])
        return out
    if fmt == "f64bin":
        p = stem.with_suffix(".f64bin")
        write_f64bin(ts, p)
        return [p]
    raise NeuroloomError(f"unknown output format {fmt!r}")


def read_timeseries(path):
    p = Path(path)
    if p.suffix == ".f64bin":
        return read_f64bin(p)
    return read_csv(p)


def write_matrix(matrix, path):
    np.savetxt(path, np.asarray(matrix), fmt="%.17g")


def read_matrix(path):
    m = np.loadtxt(path, ndmin=2)
    return m


def matrix_text(matrix):
    buf = _io.StringIO()
    np.savetxt(buf, np.asarray(matrix), fmt="%.17g")
    return buf.getvalue()
